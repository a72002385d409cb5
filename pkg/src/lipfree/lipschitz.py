"""Lipschitz-constant estimation, McShane extension, seeded test suites.

Sampled Lipschitz constants are lower bounds of the true constants: the
maximum quotient |f(x)-f(y)| / |x-y| over a finite pair set, optionally
sharpened by local refinement around the best witness pair.  Upper-bound
claims are therefore tested as necessary conditions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._rng import generator

__all__ = [
    "DegenerateInputError",
    "IncompatibleDataError",
    "LipEstimate",
    "LipschitzFunction",
    "estimate_lip",
    "mcshane_extend",
    "random_lip_suite",
]


class DegenerateInputError(ValueError):
    """All sample points coincide; no quotient is defined."""


class IncompatibleDataError(ValueError):
    """Data violates the claimed Lipschitz bound."""


@dataclass(frozen=True)
class LipEstimate:
    value: float
    witness: tuple  # (x, y) as float tuples
    samples: int
    seed: int

    @property
    def inflated(self) -> float:
        """Conservative 1.1x inflation for use on upper-bound sides."""
        return 1.1 * self.value


class LipschitzFunction:
    """Evaluable scalar function with basepoint value pinned to 0.

    `fn` maps an array of points (B, N) to values (B,).  The stored
    function is fn re-based by its value at the origin (the translated
    basepoint), so self(0) == 0 exactly.
    """

    def __init__(self, fn: Callable, dim: int, name: str = "f",
                 lip_bound: Optional[float] = None, domain: str = "ambient",
                 rebase: bool = True):
        self._fn = fn
        self.dim = dim
        self.name = name
        self.lip_bound = lip_bound
        self.domain = domain
        self._offset = float(np.asarray(fn(np.zeros((1, dim))))[0]) if rebase else 0.0

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        vals = np.asarray(self._fn(np.atleast_2d(x)), dtype=float).reshape(-1)
        vals = vals - self._offset
        return float(vals[0]) if single else vals

    def __repr__(self):
        return f"LipschitzFunction({self.name}, dim={self.dim}, bound={self.lip_bound})"


def _pair_quotients(vals, pts, norm, ii, jj):
    d = norm(pts[ii] - pts[jj])
    ok = d > 1e-14
    q = np.zeros(len(ii))
    q[ok] = np.abs(vals[ii][ok] - vals[jj][ok]) / d[ok]
    return q


def estimate_lip(f, points, norm, seed: int = 0, refine_rounds: int = 3,
                 project: Optional[Callable] = None,
                 pair_cap: int = 2000) -> LipEstimate:
    """Max sampled quotient |f(x)-f(y)| / norm(x-y).

    All pairs when len(points) <= pair_cap, else a seeded pair subsample;
    then `refine_rounds` rounds of Gaussian jitter (sigma halved each
    round) around the best witness.  `project` (e.g. a retraction) keeps
    refinement candidates on a constrained domain.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2 or float(np.max(np.abs(pts - pts[0]))) < 1e-15:
        raise DegenerateInputError("need at least two distinct points")
    vals = np.asarray(f(pts), dtype=float)
    n = len(pts)
    if n <= pair_cap:
        ii, jj = np.triu_indices(n, k=1)
    else:
        g = generator(seed, "lip-pairs")
        count = min(2_000_000, 40 * n)
        ii = g.integers(0, n, count)
        jj = g.integers(0, n, count)
    q = _pair_quotients(vals, pts, norm, ii, jj)
    best = int(np.argmax(q))
    best_q = float(q[best])
    x, y = pts[ii[best]].copy(), pts[jj[best]].copy()

    fx, fy = float(f(x[None])[0]), float(f(y[None])[0])
    for rnd in range(refine_rounds):
        g = generator(seed, "lip-refine", rnd)
        sigma = 0.25 * np.linalg.norm(x - y) / (2.0 ** rnd)
        if sigma == 0.0:
            break
        cx = x + sigma * g.standard_normal((64, pts.shape[1]))
        cy = y + sigma * g.standard_normal((64, pts.shape[1]))
        if project is not None:
            cx, cy = project(cx), project(cy)
        vx, vy = f(cx), f(cy)
        # candidate partners include the current witnesses themselves
        for (a, va, b, vb) in [(cx, vx, np.broadcast_to(y, cx.shape), np.full(64, fy)),
                               (np.broadcast_to(x, cy.shape), np.full(64, fx), cy, vy),
                               (cx, vx, cy, vy)]:
            d = norm(a - b)
            ok = d > 1e-14
            if not np.any(ok):
                continue
            qq = np.abs(va[ok] - vb[ok]) / d[ok]
            k = int(np.argmax(qq))
            if float(qq[k]) > best_q:
                best_q = float(qq[k])
                x, y = a[ok][k].copy(), b[ok][k].copy()
                fx, fy = float(va[ok][k]), float(vb[ok][k])
    return LipEstimate(value=best_q,
                       witness=(tuple(map(float, x)), tuple(map(float, y))),
                       samples=n, seed=seed)


def mcshane_extend(points, values, L: float, norm, dim=None,
                   name: str = "mcshane") -> LipschitzFunction:
    """x -> min_p (values[p] + L*norm(x - p)), re-based at the origin.

    The minimum of L-Lipschitz cones is globally L-Lipschitz and agrees
    with the data when the data is L-compatible (checked).
    """
    pts = np.asarray(points, dtype=float)
    vals = np.asarray(values, dtype=float)
    if dim is None:
        dim = pts.shape[1]
    ii, jj = np.triu_indices(len(pts), k=1)
    d = norm(pts[ii] - pts[jj])
    gap = np.abs(vals[ii] - vals[jj]) - L * d
    bad = gap > 1e-9 * np.maximum(1.0, np.abs(vals[ii]) + np.abs(vals[jj]))
    if np.any(bad):
        k = int(np.argmax(gap))
        raise IncompatibleDataError(
            f"data pair {ii[k]}, {jj[k]} violates the bound: "
            f"|f(p)-f(q)| = {abs(vals[ii[k]] - vals[jj[k]]):.6g} > "
            f"L*|p-q| = {L * d[k]:.6g}")

    def fn(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        diffs = x[:, None, :] - pts[None, :, :]
        cones = vals[None, :] + L * norm(diffs.reshape(-1, dim)).reshape(len(x), -1)
        return cones.min(axis=1)

    return LipschitzFunction(fn, dim, name=name, lip_bound=L)


def coordinate_functional(i: int, dim: int, bound: float) -> LipschitzFunction:
    """x -> x_i / bound, 1-Lipschitz when |x_i| <= bound * |x|."""
    return LipschitzFunction(lambda x, i=i: np.atleast_2d(x)[:, i] / bound,
                             dim, name=f"coord_{i + 1}", lip_bound=1.0)


def distance_functional(norm, dim: int) -> LipschitzFunction:
    """x -> |x| in the ambient norm; 1-Lipschitz by the triangle inequality."""
    return LipschitzFunction(lambda x: norm(np.atleast_2d(x)), dim,
                             name="dist", lip_bound=1.0)


def random_lip_suite(seed: int, count: int, manifold, norm,
                     anchor_count: int = 12) -> list:
    """`count` functions with claimed bound exactly 1: the fixed probes
    [distance-to-basepoint, re-based coordinate functionals], then seeded
    McShane extensions of random data on M normalized by the data's max
    quotient."""
    if count < 1:
        raise ValueError("count must be >= 1")
    dim = manifold.ambient
    suite = [distance_functional(norm, dim)]
    for i in range(dim):
        if len(suite) >= count:
            break
        suite.append(coordinate_functional(i, dim, norm.coord_lip_bound(i)))
    k = 0
    while len(suite) < count:
        anchors = manifold.sample(anchor_count, seed, "suite-anchors", k)
        g = generator(seed, "suite-values", k)
        vals = g.standard_normal(len(anchors))
        ii, jj = np.triu_indices(len(anchors), k=1)
        d = norm(anchors[ii] - anchors[jj])
        ok = d > 1e-12
        qmax = float(np.max(np.abs(vals[ii][ok] - vals[jj][ok]) / d[ok]))
        f = mcshane_extend(anchors, vals / qmax, 1.0, norm, dim=dim,
                           name=f"mcshane_{k + 1}")
        suite.append(f)
        k += 1
    return suite
