"""Norms on R^N and the smooth convex body built from a flat bump profile.

The body is B = {x : sum_i phi(|x_i|/2) <= 1} where phi is convex, C-infinity,
identically 0 on [0, 3/4] and phi(1) = 1.  Its Minkowski gauge defines a norm
whose unit sphere contains the flat patch {|x_1|, |x_2| <= 3/2, x_3 = 2}.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import expn

from ._rng import generator, sphere_directions

__all__ = [
    "profile_eval",
    "profile_deriv",
    "profile_second",
    "ProfileBody",
    "Norm",
    "EuclideanNorm",
    "PNorm",
    "BodyNorm",
    "WeightedL1Norm",
    "minkowski_gauge",
    "KEstimate",
    "estimate_K",
    "working_K",
    "make_norm",
]

_SHIFT = 0.75


@lru_cache(maxsize=None)
def _profile_normalizer() -> float:
    # P(1) = integral over (3/4, 1] of exp(-1/(u - 3/4)) du, via the closed
    # form P(t) = (t - 3/4) E_2(1/(t - 3/4)).
    return 0.25 * float(expn(2, 4.0))


def _primitive(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    b = t - _SHIFT
    out = np.zeros_like(b)
    pos = b > 0
    if np.any(pos):
        bp = b[pos]
        out[pos] = bp * expn(2, 1.0 / bp)
    return out


def profile_eval(t):
    """phi(t): 0 on [0, 3/4], convex and strictly increasing past 3/4, phi(1)=1."""
    scalar = np.isscalar(t)
    v = _primitive(t) / _profile_normalizer()
    return float(v) if scalar else v


def profile_deriv(t):
    """phi'(t) = exp(-1/(t - 3/4)) / P(1) for t > 3/4, else 0."""
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    b = t - _SHIFT
    out = np.zeros_like(b)
    pos = b > 0
    out[pos] = np.exp(-1.0 / b[pos]) / _profile_normalizer()
    return float(out) if scalar else out


def profile_second(t):
    """phi''(t), nonnegative everywhere (convexity)."""
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    b = t - _SHIFT
    out = np.zeros_like(b)
    pos = b > 0
    out[pos] = np.exp(-1.0 / b[pos]) / (b[pos] ** 2) / _profile_normalizer()
    return float(out) if scalar else out


@dataclass(frozen=True)
class ProfileBody:
    """Convex body {x : sum_i phi(|x_i|/2) <= 1} in R^dim."""

    dim: int
    profile: str = "exp-reciprocal"

    def __post_init__(self):
        if self.profile != "exp-reciprocal":
            raise ValueError(f"unknown profile {self.profile!r}")

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return profile_eval(np.abs(x) / 2.0).sum(axis=-1)

    def contains(self, x) -> np.ndarray:
        return self.value(x) <= 1.0

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return 0.5 * profile_deriv(np.abs(x) / 2.0) * np.sign(x)

    def hess_diag(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return 0.25 * profile_second(np.abs(x) / 2.0)

    def to_config(self) -> dict:
        return {"profile": self.profile}


def minkowski_gauge(body: ProfileBody, x, tol: float = 1e-10) -> np.ndarray:
    """inf{t > 0 : x/t in body} by bisection, vectorized over leading axes.

    The body contains the Euclidean ball of radius 3/2 and sits inside the
    cube of half-width 2, which gives an a priori bracket for every ray.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    pts = np.atleast_2d(x)
    lo = np.max(np.abs(pts), axis=-1) / 2.0
    hi = np.linalg.norm(pts, axis=-1) / 1.5
    nonzero = hi > 0
    l = lo[nonzero].copy()
    h = hi[nonzero].copy()
    p = pts[nonzero]
    for _ in range(64):
        mid = 0.5 * (l + h)
        inside = body.value(p / mid[..., None]) <= 1.0
        h = np.where(inside, mid, h)
        l = np.where(inside, l, mid)
        if np.all(h - l <= tol * h):
            break
    out = np.zeros(len(pts))
    out[nonzero] = h
    return float(out[0]) if scalar else out.reshape(x.shape[:-1])


class Norm:
    """Base class: a norm on R^dim, callable on (..., dim) arrays."""

    dim: int
    kind: str

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def analytic_K(self):
        """Exact two-sided Euclidean equivalence constant, or None."""
        return None

    def coord_lip_bound(self, j: int) -> float:
        """Exact Lipschitz constant of x -> x_j with respect to this norm."""
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class EuclideanNorm(Norm):
    dim: int
    kind: str = field(default="euclidean", init=False)

    def __call__(self, x):
        return np.linalg.norm(np.asarray(x, dtype=float), axis=-1)

    def analytic_K(self):
        return 1.0

    def coord_lip_bound(self, j):
        return 1.0

    def to_config(self):
        return {"kind": "euclidean", "dim": self.dim}


@dataclass(frozen=True)
class PNorm(Norm):
    dim: int
    p: float
    kind: str = field(default="pnorm", init=False)

    def __post_init__(self):
        if not (self.p >= 1.0):
            raise ValueError("p-norm requires p >= 1")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if np.isinf(self.p):
            return np.max(np.abs(x), axis=-1)
        if self.p == 1.0:
            return np.sum(np.abs(x), axis=-1)
        return np.sum(np.abs(x) ** self.p, axis=-1) ** (1.0 / self.p)

    def analytic_K(self):
        # N^(1/p - 1/2) below 2, N^(1/2 - 1/p) above; both cover the
        # two-sided comparison with the Euclidean norm.
        if np.isinf(self.p):
            return float(np.sqrt(self.dim))
        return float(self.dim ** abs(1.0 / self.p - 0.5))

    def coord_lip_bound(self, j):
        # dual norm of a standard basis vector is 1 for every p
        return 1.0

    def to_config(self):
        return {"kind": "pnorm", "dim": self.dim, "p": float(self.p)}


@dataclass(frozen=True)
class BodyNorm(Norm):
    """Minkowski gauge of the profile body."""

    dim: int
    body: ProfileBody = None  # type: ignore[assignment]
    kind: str = field(default="minkowski", init=False)

    def __post_init__(self):
        if self.body is None:
            object.__setattr__(self, "body", ProfileBody(self.dim))
        if self.body.dim != self.dim:
            raise ValueError("body dimension mismatch")

    def __call__(self, x):
        return minkowski_gauge(self.body, x)

    def coord_lip_bound(self, j):
        # support value of the body in coordinate direction j: the maximum
        # of x_j over the body is 2, attained with the other coordinates on
        # the flat part of the profile.
        return 2.0

    def to_config(self):
        return {"kind": "minkowski", "dim": self.dim, "profile": self.body.profile}


@dataclass(frozen=True)
class WeightedL1Norm(Norm):
    """||x|| = ||A x||_1 for a fixed invertible matrix A."""

    matrix: tuple
    kind: str = field(default="weighted-l1", init=False)

    def __post_init__(self):
        A = self._A()
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("weight matrix must be square")
        if np.linalg.matrix_rank(A) < len(A):
            raise ValueError("weight matrix must be invertible "
                             "(a singular A gives only a seminorm)")

    @property
    def dim(self) -> int:  # type: ignore[override]
        return len(self.matrix)

    def _A(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=float)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.abs(x @ self._A().T).sum(axis=-1)

    def coord_lip_bound(self, j):
        # sup over ||Ax||_1 <= 1 of x_j = max_i |(A^-1)_{j i}|
        inv = np.linalg.inv(self._A())
        return float(np.max(np.abs(inv[j])))

    def to_config(self):
        return {"kind": "weighted-l1", "dim": self.dim,
                "matrix": [list(map(float, row)) for row in self.matrix]}


@dataclass(frozen=True)
class KEstimate:
    """Sampled two-sided equivalence constant K: K^-1 ||x||_2 <= ||x|| <= K ||x||_2.

    Sampling gives a lower bound on the true K; `inflated` carries the 1.1x
    safety copy used wherever K multiplies an upper-bound side.
    """

    value: float
    samples: int
    witness_high: tuple
    witness_low: tuple
    analytic: float | None = None

    @property
    def inflated(self) -> float:
        return 1.1 * self.value


def estimate_K(norm: Norm, samples: int, seed: int, refine_rounds: int = 3) -> KEstimate:
    dirs = sphere_directions(samples, norm.dim, seed, "K", norm.kind)
    g = generator(seed, "K-refine", norm.kind)

    def ratios(d):
        r = norm(d)
        return r

    best_hi = None
    best_lo = None
    d = dirs
    sigma = 0.25
    for _ in range(refine_rounds + 1):
        r = ratios(d)
        ih = int(np.argmax(r))
        il = int(np.argmin(r))
        if best_hi is None or r[ih] > best_hi[0]:
            best_hi = (float(r[ih]), d[ih])
        if best_lo is None or r[il] < best_lo[0]:
            best_lo = (float(r[il]), d[il])
        seeds_pts = np.stack([best_hi[1], best_lo[1]])
        jitter = g.standard_normal((max(256, samples // 8), 2, norm.dim)) * sigma
        cand = seeds_pts[None, :, :] + jitter
        cand = cand.reshape(-1, norm.dim)
        n = np.linalg.norm(cand, axis=1, keepdims=True)
        cand = cand / np.where(n == 0, 1.0, n)
        d = cand
        sigma *= 0.5
    K = max(best_hi[0], 1.0 / best_lo[0])
    return KEstimate(
        value=float(K),
        samples=samples,
        witness_high=tuple(map(float, best_hi[1])),
        witness_low=tuple(map(float, best_lo[1])),
        analytic=norm.analytic_K(),
    )


def working_K(norm: Norm, samples: int = 4096, seed: int = 0) -> tuple:
    """K used in bound formulas: exact when the norm admits a closed form,
    otherwise the inflated sampled estimate (sampling only lower-bounds K)."""
    a = norm.analytic_K()
    if a is not None:
        return float(a), "analytic"
    return estimate_K(norm, samples, seed).inflated, "sampled-inflated"


def make_norm(cfg: dict) -> Norm:
    kind = cfg.get("kind")
    dim = int(cfg["dim"])
    if kind == "euclidean":
        return EuclideanNorm(dim)
    if kind == "pnorm":
        return PNorm(dim, float(cfg["p"]))
    if kind == "minkowski":
        return BodyNorm(dim, ProfileBody(dim, cfg.get("profile", "exp-reciprocal")))
    if kind == "weighted-l1":
        rows = tuple(tuple(float(v) for v in row) for row in cfg["matrix"])
        return WeightedL1Norm(rows)
    raise ValueError(f"unknown norm kind {kind!r}")
