"""Multilinear interpolation on regular hypercube meshes over chart domains.

A mesh subdivides the cube [-hw, hw]^d into b cells per axis (b = ceil of
edge/pitch request, so the realized pitch divides the edge exactly).  The
interpolant on each cell is the unique coordinatewise-affine function
matching the vertex values; weights are products of (1-t_j) and t_j, hence
nonnegative and summing to one, which makes the interpolant exact at
vertices and consistent across shared faces.

The chart operator P_i captures vertex values g(psi(x_i + E u_v)) lazily:
only cells actually queried materialize, so meshes may be far finer than
anything one could store.  Values are cached per caller-supplied token.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Optional, Sequence

import numpy as np

from .manifolds import DomainError

__all__ = [
    "HypercubeMesh",
    "multilinear_weights",
    "lambda_on_cube",
    "lambda_piecewise",
    "FiniteRankChartOperator",
    "chart_gradient_modulus",
    "calibrate_pitch",
]

FACE_TOL = 1e-12


@dataclass(frozen=True)
class HypercubeMesh:
    """Regular lattice on a product of intervals."""

    lo: tuple
    hi: tuple
    cells: tuple

    def __post_init__(self):
        if not (len(self.lo) == len(self.hi) == len(self.cells)):
            raise ValueError("mesh bound/cell arity mismatch")
        if any(b < 1 for b in self.cells):
            raise ValueError("each axis needs at least one cell")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("empty axis interval")

    @classmethod
    def from_pitch(cls, lo, hi, pitch: float) -> "HypercubeMesh":
        lo = tuple(float(v) for v in np.atleast_1d(lo))
        hi = tuple(float(v) for v in np.atleast_1d(hi))
        cells = tuple(int(np.ceil((h - l) / pitch)) for l, h in zip(lo, hi))
        return cls(lo, hi, cells)

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def pitch(self) -> tuple:
        return tuple((h - l) / b for l, h, b in zip(self.lo, self.hi, self.cells))

    @property
    def vertex_count(self) -> int:
        out = 1
        for b in self.cells:
            out *= b + 1
        return out

    def vertex(self, idx: Sequence[int]) -> np.ndarray:
        return np.array([l + i * p for l, i, p in zip(self.lo, idx, self.pitch)])

    def locate(self, u) -> tuple:
        """Cell index and local coordinates for a batch of query points.

        Queries within FACE_TOL of a face resolve to the lexicographically
        smallest containing cube; beyond FACE_TOL outside the mesh is a
        domain error.
        """
        u = np.atleast_2d(np.asarray(u, dtype=float))
        if u.shape[1] != self.dim:
            raise ValueError("query dimension mismatch")
        lo = np.array(self.lo)
        hi = np.array(self.hi)
        if np.any(u < lo - FACE_TOL) or np.any(u > hi + FACE_TOL):
            raise DomainError("query outside the mesh")
        pitch = np.array(self.pitch)
        raw = (u - lo) / pitch
        idx = np.floor(raw).astype(np.int64)
        # a query within tolerance of the face it sits just above belongs
        # to the smaller-index cube as well; prefer it
        near_face = (raw - idx) * pitch <= FACE_TOL
        idx = np.where(near_face & (idx > 0), idx - 1, idx)
        idx = np.clip(idx, 0, np.array(self.cells) - 1)
        t = raw - idx
        return idx, np.clip(t, 0.0, 1.0)


def _corner_grid(d: int) -> np.ndarray:
    """All gamma in {0,1}^d, in binary order (last axis fastest)."""
    return np.array(np.meshgrid(*([[0, 1]] * d), indexing="ij")
                    ).reshape(d, -1).T


def multilinear_weights(t) -> np.ndarray:
    """Weights c_gamma = prod_j (t_j if gamma_j else 1-t_j), batched."""
    t = np.atleast_2d(np.asarray(t, dtype=float))
    d = t.shape[1]
    corners = _corner_grid(d)
    w = np.ones((len(t), len(corners)))
    for j in range(d):
        w = w * np.where(corners[None, :, j] == 1, t[:, j, None],
                         1.0 - t[:, j, None])
    return w


def lambda_on_cube(vertex_values, t) -> np.ndarray:
    """Coordinatewise-affine interpolant on one cube.

    vertex_values holds the 2^d corner values in binary gamma order; t is
    the local coordinate in [0,1]^d (FACE_TOL grace outside).
    """
    t = np.atleast_2d(np.asarray(t, dtype=float))
    if np.any(t < -FACE_TOL) or np.any(t > 1.0 + FACE_TOL):
        raise DomainError("local coordinate outside the cube")
    vv = np.asarray(vertex_values, dtype=float).reshape(-1)
    return multilinear_weights(np.clip(t, 0.0, 1.0)) @ vv


def lambda_piecewise(mesh: HypercubeMesh, vertex_values, u) -> np.ndarray:
    """Evaluate the piecewise interpolant with eagerly stored vertex values
    (an array indexed by lattice multi-index)."""
    vv = np.asarray(vertex_values, dtype=float)
    if vv.shape != tuple(b + 1 for b in mesh.cells):
        raise ValueError("vertex value array shape mismatch")
    idx, t = mesh.locate(u)
    corners = _corner_grid(mesh.dim)
    gathered = np.empty((len(idx), len(corners)))
    for k, g in enumerate(corners):
        coords = tuple((idx[:, j] + g[j]) for j in range(mesh.dim))
        gathered[:, k] = vv[coords]
    w = multilinear_weights(t)
    return np.sum(w * gathered, axis=1)


class FiniteRankChartOperator:
    """P_i: captures g at mesh vertices pulled back through one chart and
    evaluates the piecewise multilinear interpolant in chart coordinates.

    Vertex values materialize on demand and are cached per value token, so
    the mesh resolution is limited by float spacing, not by memory.
    """

    def __init__(self, mesh: HypercubeMesh, chart_point: Callable,
                 label: str = "chart"):
        if mesh.vertex_count >= 2 ** 62:
            raise ValueError("mesh too fine for packed int64 vertex keys")
        self.mesh = mesh
        self.chart_point = chart_point  # u (batch) -> ambient points on M
        self.label = label
        self._cache: Dict[object, Dict[int, float]] = {}
        self._strides = np.ones(mesh.dim, dtype=np.int64)
        for j in range(mesh.dim - 2, -1, -1):
            self._strides[j] = self._strides[j + 1] * (mesh.cells[j + 1] + 1)

    @property
    def vertex_count(self) -> int:
        return self.mesh.vertex_count

    def cached_vertex_count(self, token: object) -> int:
        return len(self._cache.get(token, {}))

    def _keys(self, vidx: np.ndarray) -> np.ndarray:
        return vidx @ self._strides

    def _vertex_values(self, g: Callable, vidx: np.ndarray,
                       token: object) -> np.ndarray:
        keys = self._keys(vidx)
        store = self._cache.setdefault(token, {}) if token is not None else {}
        order, uniq_pos = np.unique(keys, return_index=True)
        missing_pos = [p for k, p in zip(order, uniq_pos) if k not in store]
        if missing_pos:
            miss = vidx[missing_pos]
            pitch = np.array(self.mesh.pitch)
            lo = np.array(self.mesh.lo)
            pts = self.chart_point(lo + miss * pitch)
            vals = np.asarray(g(pts), dtype=float).reshape(-1)
            for k, v in zip(keys[missing_pos], vals):
                store[int(k)] = float(v)
        return np.array([store[int(k)] for k in keys])

    def evaluate(self, g: Callable, u, token: object = None) -> np.ndarray:
        """Interpolant of g-through-the-chart at chart coordinates u."""
        idx, t = self.mesh.locate(u)
        corners = _corner_grid(self.mesh.dim)
        vidx = idx[:, None, :] + corners[None, :, :]
        B, C, d = vidx.shape
        vals = self._vertex_values(g, vidx.reshape(-1, d), token)
        w = multilinear_weights(t)
        return np.sum(w * vals.reshape(B, C), axis=1)

    def drop(self, token: object) -> None:
        self._cache.pop(token, None)


def _pair_modulus(smooth_apply, chart_point, suite, base, partner, h):
    """Max gradient difference over given (base, partner) pairs and suite."""
    P, dim = base.shape
    eye = np.eye(dim)
    us = np.concatenate([base, partner])
    stencil = np.concatenate([us[:, None, :] + h * eye[None, :, :],
                              us[:, None, :] - h * eye[None, :, :]],
                             axis=1)  # (2P, 2d, d)
    pts = chart_point(stencil.reshape(-1, dim))
    worst = np.zeros(P)
    for f in suite:
        vals = np.asarray(smooth_apply(f, pts), dtype=float)
        vals = vals.reshape(2 * P, 2, dim)
        grad = (vals[:, 0, :] - vals[:, 1, :]) / (2 * h)
        diff = np.linalg.norm(grad[:P] - grad[P:], axis=1)
        worst = np.maximum(worst, diff)
    return worst


def chart_gradient_modulus(smooth_apply: Callable, chart_point: Callable,
                           dim: int, halfwidth: float, deltas: Iterable[float],
                           suite: Sequence[Callable], seed: int = 0,
                           pairs: int = 48, h: float = 1e-5,
                           refine: int = 1) -> list:
    """Sampled modulus of continuity of the chart-pulled-back gradient.

    For each delta, the max over the suite and over all sampled pairs with
    |u - u'|_2 <= sqrt(d) * delta of |Dg~(u) - Dg~(u')|_2, gradients by
    central differences.  smooth_apply(f, points) evaluates the smoothed
    function at ambient points.  The pair sets nest across the grid, so
    the returned table is nondecreasing in delta.
    """
    from ._rng import generator, halton

    g = generator(seed, "grad-modulus")
    box = halfwidth - 2 * h
    if box <= 0:
        raise ValueError("modulus probes do not fit in the chart domain")
    base = (halton(pairs, dim, skip=40) * 2.0 - 1.0) * 0.45 * halfwidth
    dirs = g.standard_normal((pairs, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    scales = np.where(np.arange(pairs) % 4 == 0,
                      g.uniform(0.3, 0.9, pairs), 1.0)

    def clamp(b, step):
        # pairs only need separation <= sqrt(d) delta; shrink any step
        # that would leave the chart domain
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = (box - np.abs(b)) / np.abs(step)
        lam = np.nan_to_num(lam, nan=1.0, posinf=1.0)
        return step * np.minimum(1.0, np.min(lam, axis=1))[:, None]

    out = []
    for delta in sorted(set(float(d) for d in deltas)):
        step = clamp(base, np.sqrt(dim) * delta * scales[:, None] * dirs)
        worst = _pair_modulus(smooth_apply, chart_point, suite,
                              base, base + step, h)
        for _ in range(refine):
            top = np.argsort(worst)[-4:]
            jit = g.standard_normal((len(top) * 12, dim)) * (0.5 * np.sqrt(dim) * delta)
            b2 = np.clip(np.repeat(base[top], 12, axis=0) + jit, -box, box)
            d2 = g.standard_normal((len(b2), dim))
            d2 /= np.linalg.norm(d2, axis=1, keepdims=True)
            s2 = clamp(b2, np.sqrt(dim) * delta * d2)
            w2 = _pair_modulus(smooth_apply, chart_point, suite, b2, b2 + s2, h)
            worst = np.concatenate([worst, w2])
        prev = out[-1][1] if out else 0.0
        out.append((delta, max(prev, float(np.max(worst)))))
    out.reverse()
    return out


def calibrate_pitch(smooth_apply: Callable, chart_point: Callable, dim: int,
                    halfwidth: float, target: float,
                    suite: Sequence[Callable], seed: int = 0,
                    max_halvings: int = 44,
                    budget_slope: Optional[float] = None) -> tuple:
    """Largest pitch on the grid halfwidth * 2^-k whose gradient modulus is
    <= target; returns (pitch, sampled modulus at pitch).

    When budget_slope (the closed-form modulus slope of the smoothed
    function, G K L_n^3 sqrt(d) / s_n) is given, the pitch is chosen so
    budget_slope * pitch <= target/2, leaving half the budget for the
    retraction-translation part; the sampled modulus then validates the
    choice.  Sampling alone can miss the narrow stiff regions a kinked
    input leaves after smoothing, so the closed form leads.  Without a
    budget slope, a monotone bisection over the sampled table decides.
    """
    from .mollify import CalibrationError

    def modulus(k: int) -> float:
        delta = halfwidth * 0.5 ** k
        table = chart_gradient_modulus(smooth_apply, chart_point, dim,
                                       halfwidth, [delta], suite, seed=seed)
        return table[0][1]

    if budget_slope is not None:
        if budget_slope <= 0:
            raise ValueError("budget slope must be positive")
        k = max(0, int(np.ceil(np.log2(halfwidth * budget_slope
                                       / (0.5 * target)))))
        while k <= max_halvings:
            m = modulus(k)
            if m <= target:
                return halfwidth * 0.5 ** k, m
            k += 1
        raise CalibrationError(
            f"sampled modulus stayed above {target:.3g} below the "
            f"closed-form pitch; smoothing constants look inconsistent",
            stage="interpolation")

    lo_k = 0
    m0 = modulus(0)
    if m0 <= target:
        return halfwidth, m0
    hi_k = None
    k = 4
    while k <= max_halvings:
        m = modulus(k)
        if m <= target:
            hi_k = k
            break
        lo_k = k
        k += 8
    if hi_k is None:
        raise CalibrationError(
            f"gradient modulus stayed above {target:.3g} down to pitch "
            f"{halfwidth * 0.5 ** max_halvings:.3g}", stage="interpolation")
    best = (halfwidth * 0.5 ** hi_k, m)
    while hi_k - lo_k > 1:
        mid = (hi_k + lo_k) // 2
        m = modulus(mid)
        if m <= target:
            hi_k, best = mid, (halfwidth * 0.5 ** mid, m)
        else:
            lo_k = mid
    return best
