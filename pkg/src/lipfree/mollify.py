"""Compactly supported mollifier, its constants, and the smoothing operator.

The kernel is nu(x) = A * exp(1/(|x|^2 - 1)) inside the unit ball, zero
outside; nu_s(x) = s^-N nu(x/s).  Constants come from three independent
routes so their consistency identity is a real check, not algebra:

  * I_N = integral_0^1 exp(1/(r^2-1)) r^(N-1) dr by 1-D adaptive
    quadrature, giving G = 1/(e * I_N);
  * the full N-dimensional mass by tensor Gauss-Legendre, giving A;
  * the unit-sphere area by the closed form 2 pi^(N/2) / Gamma(N/2).

Smoothing pulls a function through the retraction: fhat_s(x) =
integral nu_s(z) f(psi(x+z)) dz, and S_n(f) = fhat_(s_n) - fhat_(s_n)(0)
with s_n = delta / (2 n K L_n) for the calibrated close-pair delta.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from .manifolds import DomainError, Manifold, translation_defect

__all__ = [
    "KernelConstants",
    "kernel_constants",
    "compute_G",
    "BallQuadrature",
    "kernel_eval",
    "kernel_grad",
    "CalibrationError",
    "calibrate_delta",
    "SmoothingOperator",
]

KERNEL_CHECK_NODES = 48  # per axis; the mass identity needs this accuracy


class CalibrationError(RuntimeError):
    """A calibration sweep exhausted its grid without meeting its target."""

    def __init__(self, message: str, stage: str = "smoothing"):
        super().__init__(message)
        self.stage = stage


def _radial_integrand(r, N):
    return np.exp(1.0 / (r * r - 1.0)) * r ** (N - 1) if r < 1.0 else 0.0


def compute_G(N: int) -> float:
    """G = (e * integral_0^1 exp(1/(r^2-1)) r^(N-1) dr)^-1."""
    if N < 1:
        raise ValueError("N must be >= 1")
    val, _err = quad(_radial_integrand, 0.0, 1.0, args=(N,),
                     epsabs=1e-14, epsrel=1e-12)
    return 1.0 / (math.e * val)


def _profile(q):
    """exp(1/(q-1)) for q < 1 (q = squared radius), zero otherwise."""
    out = np.zeros_like(q)
    inside = q < 1.0
    out[inside] = np.exp(1.0 / (q[inside] - 1.0))
    return out


@lru_cache(maxsize=None)
def _unit_cube_rule(N: int, nodes: int):
    x, w = np.polynomial.legendre.leggauss(nodes)
    grids = np.meshgrid(*([x] * N), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    ws = np.ones(len(pts))
    for axes in np.meshgrid(*([w] * N), indexing="ij"):
        ws = ws * axes.ravel()
    return pts, ws


@lru_cache(maxsize=None)
def _ball_mass(N: int, nodes: int) -> float:
    pts, ws = _unit_cube_rule(N, nodes)
    return float(np.sum(ws * _profile(np.sum(pts * pts, axis=1))))


@dataclass(frozen=True)
class KernelConstants:
    N: int
    A: float
    G: float
    sphere_area: float

    @property
    def identity_residual(self) -> float:
        """|A * sphere_area / (e G) - 1|: three quadrature routes agree."""
        return abs(self.A * self.sphere_area / (math.e * self.G) - 1.0)


@lru_cache(maxsize=None)
def kernel_constants(N: int) -> KernelConstants:
    A = 1.0 / _ball_mass(N, KERNEL_CHECK_NODES)
    G = compute_G(N)
    area = 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)
    return KernelConstants(N=N, A=A, G=G, sphere_area=area)


def kernel_eval(x, s: float, N: Optional[int] = None) -> np.ndarray:
    """nu_s(x) = s^-N A exp(1/((|x|/s)^2 - 1)), zero for |x| >= s."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if N is None:
        N = x.shape[1]
    A = kernel_constants(N).A
    q = np.sum(x * x, axis=1) / (s * s)
    return (A / s ** N) * _profile(q)


def kernel_grad(x, s: float, N: Optional[int] = None) -> np.ndarray:
    """Gradient of nu_s: nu_s(x) * (-2 x / s^2) / (q - 1)^2, q = |x/s|^2."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if N is None:
        N = x.shape[1]
    q = np.sum(x * x, axis=1) / (s * s)
    v = kernel_eval(x, s, N)
    out = np.zeros_like(x)
    inside = q < 1.0
    out[inside] = v[inside, None] * (-2.0 * x[inside] / (s * s)) \
        / ((q[inside] - 1.0) ** 2)[:, None]
    return out


class BallQuadrature:
    """Tensor Gauss-Legendre rule on [-s, s]^N, restricted to the support
    ball: nodes outside B_s carry zero kernel weight and are dropped."""

    def __init__(self, N: int, s: float, nodes: int):
        pts, ws = _unit_cube_rule(N, nodes)
        pts = pts * s
        ws = ws * s ** N
        keep = np.sum(pts * pts, axis=1) < s * s
        self.N = N
        self.s = s
        self.nodes = nodes
        self.points = pts[keep]
        self.weights = ws[keep]
        self.kernel_weights = self.weights * kernel_eval(self.points, s, N)
        # quadrature error proxy: the defect of the kernel-mass identity
        self.mass_defect = abs(float(np.sum(self.kernel_weights)) - 1.0)

    def kernel_mass(self) -> float:
        return float(np.sum(self.kernel_weights))

    def gradient_mass(self) -> float:
        """Quadrature of |D nu_s|_2 over the support ball."""
        g = kernel_grad(self.points, self.s, self.N)
        return float(np.sum(self.weights * np.linalg.norm(g, axis=1)))


def calibrate_delta(man: Manifold, K: float, n: int, radius: float,
                    count: int = 400, seed: int = 404,
                    max_halvings: int = 14) -> tuple:
    """Largest delta on the grid delta_n * {1, 1/2, 1/4, ...} whose sampled
    close-pair translation defect is <= 1/(n K^2); returns (delta, defect).

    On a flat patch the defect vanishes and the first grid value wins.
    """
    delta_n = min(man.tube_radius() / 2.0, 1.0)
    target = 1.0 / (n * K * K)
    for k in range(max_halvings):
        delta = delta_n * 0.5 ** k
        rep = translation_defect(man, radius, delta, delta, count, seed)
        if rep.value <= target:
            return delta, rep.value
    raise CalibrationError(
        f"close-pair defect stayed above {target:.3g} down to "
        f"delta = {delta_n * 0.5 ** (max_halvings - 1):.3g}; "
        f"use a finer manifold or larger n")


class SmoothingOperator:
    """S_n(f)(x) = fhat_(s_n)(x) - fhat_(s_n)(0) on M cap B_(n^2 + delta_n)."""

    def __init__(self, man: Manifold, K: float, L_n: float, n: int,
                 nodes: int = 24, check_nodes: int = 32,
                 calibration_count: int = 400, seed: int = 404):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.man = man
        self.K = float(K)
        self.L_n = float(L_n)
        self.n = int(n)
        self.delta_n = min(man.tube_radius() / 2.0, 1.0)
        self.radius = float(n) ** 2 + self.delta_n
        self.delta, self.calibration_defect = calibrate_delta(
            man, self.K, n, self.radius, count=calibration_count, seed=seed)
        self.s_n = self.delta / (2.0 * n * self.K * self.L_n)
        if self.s_n > man.tube_radius():
            raise CalibrationError("smoothing window exceeds the tube radius")
        self.quad = BallQuadrature(man.ambient, self.s_n, nodes)
        # nested-rule error estimate: same integral at a finer rule
        self.quad_tol = BallQuadrature(man.ambient, self.s_n, check_nodes).mass_defect \
            + self.quad.mass_defect
        # Normalized weights make the discrete smoothing a true positive
        # average: every Lipschitz bound proved for the mollifier holds
        # verbatim for the discretization, and quadrature mass error no
        # longer scales with |f|.
        self._w = self.quad.kernel_weights / self.quad.kernel_mass()
        self._zero_cache: dict = {}

    def smooth_raw(self, f: Callable, x) -> np.ndarray:
        """fhat_(s_n) at points x (no re-basing)."""
        P, kw = self.preimages(x)
        return self.apply_to_values(f(P.reshape(-1, P.shape[-1])).reshape(P.shape[:2]), kw)

    def preimages(self, x) -> tuple:
        """Retracted quadrature stencils psi(x + z_q) and kernel weights.

        Separating this from the function evaluation lets one stencil be
        reused across a whole suite of inputs (the retraction dominates
        the cost of smoothing).
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = np.linalg.norm(x - self.man.retract(x, check=False), axis=1)
        if float(np.max(d)) + self.s_n > self.man.tube_radius() * (1 + 1e-9):
            raise DomainError(
                "smoothing stencil exits the retraction tube: point at "
                f"distance {float(np.max(d)):.3g} with window {self.s_n:.3g}")
        q = x[:, None, :] + self.quad.points[None, :, :]
        P = self.man.retract(q.reshape(-1, x.shape[1]), check=False)
        return P.reshape(q.shape), self._w

    @staticmethod
    def apply_to_values(vals: np.ndarray, kernel_weights: np.ndarray) -> np.ndarray:
        return vals @ kernel_weights

    def apply(self, f: Callable, x, f_token: Optional[str] = None) -> np.ndarray:
        """S_n(f) at points x: the smoothed value re-based at the origin."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if f_token is not None and f_token in self._zero_cache:
            base = self._zero_cache[f_token]
        else:
            base = float(self.smooth_raw(f, np.zeros((1, self.man.ambient)))[0])
            if f_token is not None:
                self._zero_cache[f_token] = base
        return self.smooth_raw(f, x) - base

    def constants(self) -> dict:
        return {
            "n": self.n,
            "delta_n": self.delta_n,
            "delta": self.delta,
            "calibration_defect": self.calibration_defect,
            "s_n": self.s_n,
            "K": self.K,
            "L_n": self.L_n,
            "quad_nodes": self.quad.nodes,
            "quad_tol": self.quad_tol,
        }
