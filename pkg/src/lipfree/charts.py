"""Tangent-plane charts and finite covers of M within a centered ball.

A chart at center c with orthonormal frame E maps cube coordinates u to
the manifold point psi(c + E^T u); its inverse (tangent coordinates of a
manifold point) is computed by a fixed-point iteration whose final
residual certifies convergence.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._rng import generator
from .lipschitz import LipEstimate
from .manifolds import Manifold, tube_sample

__all__ = [
    "ConstructionError",
    "CoverData",
    "chart_point",
    "chart_coords",
    "build_cover",
    "estimate_Ln",
    "estimate_Jn",
]


class ConstructionError(RuntimeError):
    """Cover construction failed (cube too large or runaway center count)."""


def chart_point(man: Manifold, center, frame, u, check: bool = True):
    """psi(center + E^T u): the manifold point with tangent coordinates u."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    return man.retract(center + u @ frame, check=check)


def chart_coords(man: Manifold, center, frame, y, tol: float = 1e-12,
                 max_iter: int = 80):
    """Tangent coordinates u with psi(center + E^T u) = y, plus residuals.

    Fixed-point iteration u += E(y - psi(center + E^T u)); near the center
    the retraction's tangent derivative is the identity, so the update is
    a contraction.  Convergence is certified by the returned Euclidean
    residual |y - psi(center + E^T u)|, not assumed.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    u = (y - center) @ frame.T
    for _ in range(max_iter):
        p = man.retract(center + u @ frame, check=False)
        du = (y - p) @ frame.T
        u = u + du
        if float(np.max(np.abs(du))) < tol:
            break
    res = np.linalg.norm(y - man.retract(center + u @ frame, check=False), axis=1)
    return u, res


@dataclass
class CoverData:
    """Finite chart cover of M cap B_(n^2) with its sampled constants."""
    manifold: Manifold
    n: int
    halfwidth: float
    margin: float
    seed: int
    centers: np.ndarray          # (m, N)
    frames: np.ndarray           # (m, d, N)
    delta_n: float
    pool_size: int
    L_n: Optional[LipEstimate] = None
    J_n: Optional[LipEstimate] = None

    @property
    def m(self) -> int:
        return len(self.centers)

    def chart_coords(self, i: int, y, tol: float = 1e-12):
        return chart_coords(self.manifold, self.centers[i], self.frames[i], y,
                            tol=tol)

    def chart_point(self, i: int, u, check: bool = True):
        return chart_point(self.manifold, self.centers[i], self.frames[i], u,
                           check=check)

    def membership(self, y, inner: float = 1.0, residual_tol: float = 1e-8):
        """(B, m) bool: y in U_i with |u|_inf <= inner * halfwidth."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        out = np.zeros((len(y), self.m), dtype=bool)
        for i in range(self.m):
            sel, _u = self.member_coords(i, y, inner=inner,
                                         residual_tol=residual_tol)
            out[sel, i] = True
        return out

    def member_coords(self, i: int, y, inner: float = 1.0,
                      residual_tol: float = 1e-8):
        """Indices into y of the points chart i contains, with their chart
        coordinates."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        reach = 2.5 * np.sqrt(self.manifold.dim) * self.halfwidth
        near = np.flatnonzero(
            np.linalg.norm(y - self.centers[i], axis=1) <= reach)
        if not len(near):
            return near, np.empty((0, self.manifold.dim))
        u, res = self.chart_coords(i, y[near])
        ok = (res <= residual_tol) & \
             (np.max(np.abs(u), axis=1) <= inner * self.halfwidth)
        return near[ok], u[ok]

    def constants(self) -> dict:
        return {
            "m": self.m,
            "halfwidth": self.halfwidth,
            "margin": self.margin,
            "delta_n": self.delta_n,
            "L_n": None if self.L_n is None else self.L_n.value,
            "J_n": None if self.J_n is None else self.J_n.value,
        }


def _validate_cube(man: Manifold, center, frame, halfwidth: float,
                   residual_tol: float = 1e-8):
    """The whole cube must land inside the tube and invert back."""
    d = len(frame)
    corners = halfwidth * (np.stack(np.meshgrid(*[[-1.0, 1.0]] * d),
                                    axis=-1).reshape(-1, d))
    grid = np.concatenate([corners, 0.5 * corners, np.zeros((1, d))])
    pts = chart_point(man, center, frame, grid, check=True)
    u, res = chart_coords(man, center, frame, pts)
    if float(np.max(res)) > residual_tol:
        raise ConstructionError(
            f"chart inversion fails at center {np.round(center, 6).tolist()}: "
            f"residual {float(np.max(res)):.3g} (cube halfwidth {halfwidth} too large)")


def build_cover(man: Manifold, n: int, halfwidth: float, margin: float = 0.9,
                seed: int = 0, sample_count: int = 4096,
                max_centers: int = 512) -> CoverData:
    """Greedy first-fit cover of M cap B_(n^2) by tangent-cube charts.

    A pool point is covered by a chart when its tangent coordinates
    converge with residual <= 1e-8 and |u|_inf <= margin * halfwidth; the
    margin keeps every point well inside some cube so the partition of
    unity built on the cover has a bounded Lipschitz constant.
    """
    from scipy.spatial import cKDTree

    delta_n = min(man.tube_radius() / 2.0, 1.0)
    radius = float(n) ** 2
    pool = man.sample(sample_count, seed, "cover-pool", radius=radius)
    pool = np.concatenate([np.zeros((1, man.ambient)), pool])
    covered = np.zeros(len(pool), dtype=bool)
    centers, frames = [], []
    reach = 2.5 * np.sqrt(man.dim) * halfwidth
    # Euclidean proxy for a chart's coverage reach, shrunk so the proxy
    # never exceeds the true reach (otherwise uncovered slivers survive
    # between concatenated charts and force extra centers)
    rho = 0.95 * margin * halfwidth
    nearest = np.full(len(pool), np.inf)
    step = 1.9 * rho  # sweep advance: new coverage starts near the old edge
    while not covered.all():
        unc = np.where(~covered)[0]
        if not centers:
            i = 0  # the basepoint chart goes first
        else:
            deep = nearest[unc] >= step
            if np.any(deep):
                # sweep phase: the nearest candidate whose chart is clear
                # of existing ones, so charts concatenate edge to edge
                i = unc[deep][int(np.argmin(nearest[unc][deep]))]
            else:
                # endgame: plug leftover slivers by largest gain first
                tree = cKDTree(pool[unc])
                gain = np.array([len(v) for v in
                                 tree.query_ball_point(pool[unc], rho)])
                i = unc[int(np.argmax(gain))]
        c = pool[i]
        E = man.tangent_frame(c)
        _validate_cube(man, c, E, halfwidth)
        near = ~covered & (np.linalg.norm(pool - c, axis=1) <= reach)
        u, res = chart_coords(man, c, E, pool[near])
        ok = (res <= 1e-8) & (np.max(np.abs(u), axis=1) <= margin * halfwidth)
        idx = np.where(near)[0][ok]
        if not covered[i] and i not in idx:
            raise ConstructionError(
                f"center {np.round(c, 6).tolist()} does not cover itself "
                f"(margin {margin} too small)")
        covered[idx] = True
        centers.append(c)
        frames.append(E)
        nearest = np.minimum(nearest, np.linalg.norm(pool - c, axis=1))
        if len(centers) > max_centers:
            raise ConstructionError(
                f"cover did not close after {max_centers} centers "
                f"(halfwidth {halfwidth}, margin {margin})")
    return CoverData(manifold=man, n=n, halfwidth=halfwidth, margin=margin,
                     seed=seed, centers=np.array(centers),
                     frames=np.array(frames), delta_n=delta_n,
                     pool_size=len(pool))


def _map_lip(fn, pts, seed: int, refine_rounds: int = 3,
             validate=None, pair_cap: int = 2000) -> LipEstimate:
    """Sampled Lipschitz constant of a vector-valued map, Euclidean both sides."""
    pts = np.asarray(pts, dtype=float)
    vals = np.asarray(fn(pts), dtype=float)
    nn = len(pts)
    if nn <= pair_cap:
        ii, jj = np.triu_indices(nn, k=1)
    else:
        g = generator(seed, "map-lip-pairs")
        count = min(2_000_000, 40 * nn)
        ii = g.integers(0, nn, count)
        jj = g.integers(0, nn, count)
    d = np.linalg.norm(pts[ii] - pts[jj], axis=1)
    ok = d > 1e-14
    q = np.zeros(len(ii))
    q[ok] = np.linalg.norm(vals[ii][ok] - vals[jj][ok], axis=1) / d[ok]
    b = int(np.argmax(q))
    best = float(q[b])
    x, y = pts[ii[b]].copy(), pts[jj[b]].copy()
    for rnd in range(refine_rounds):
        g = generator(seed, "map-lip-refine", rnd)
        sigma = 0.25 * np.linalg.norm(x - y) / (2.0 ** rnd)
        if sigma == 0.0:
            break
        cx = x + sigma * g.standard_normal((64, pts.shape[1]))
        cy = y + sigma * g.standard_normal((64, pts.shape[1]))
        if validate is not None:
            cx = np.concatenate([cx[validate(cx)], x[None]])
            cy = np.concatenate([cy[validate(cy)], y[None]])
        va, vb = np.asarray(fn(cx)), np.asarray(fn(cy))
        dd = np.linalg.norm(cx[:, None, :] - cy[None, :, :], axis=2)
        qq = np.linalg.norm(va[:, None, :] - vb[None, :, :], axis=2)
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(dd > 1e-14, qq / np.where(dd > 1e-14, dd, 1.0), 0.0)
        k = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
        if float(ratio[k]) > best:
            best = float(ratio[k])
            x, y = cx[k[0]].copy(), cy[k[1]].copy()
    return LipEstimate(value=best, witness=(tuple(map(float, x)),
                                            tuple(map(float, y))),
                       samples=nn, seed=seed)


def estimate_Ln(cover: CoverData, count: int = 1500, seed: int = 101) -> LipEstimate:
    """Sampled Lipschitz constant of the retraction on the tube of width
    delta_n around M, within B_(n^2 + 2 delta_n); stored on the cover."""
    man = cover.manifold
    radius = float(cover.n) ** 2 + 2.0 * cover.delta_n
    pts = tube_sample(man, radius, cover.delta_n, count, seed, "Ln")

    def in_tube(q):
        return np.linalg.norm(q - man.retract(q, check=False), axis=1) \
            <= cover.delta_n

    est = _map_lip(lambda q: man.retract(q, check=False), pts, seed,
                   validate=in_tube)
    cover.L_n = est
    return est


def estimate_Jn(cover: CoverData, per_chart: int = 160, seed: int = 202) -> LipEstimate:
    """Max over charts of the sampled Lipschitz constant of the chart
    inverse map y -> tangent coordinates, on U_i; stored on the cover."""
    best: Optional[LipEstimate] = None
    for i in range(cover.m):
        g = generator(seed, "Jn", i)
        u = g.uniform(-0.999, 0.999, (per_chart, cover.manifold.dim)) \
            * cover.halfwidth
        y = cover.chart_point(i, u, check=False)
        uu, res = cover.chart_coords(i, y)
        keep = res <= 1e-8
        pts = y[keep]

        def coord_map(q, i=i):
            return cover.chart_coords(i, q)[0]

        est = _map_lip(coord_map, pts, seed + i, refine_rounds=0)
        if best is None or est.value > best.value:
            best = LipEstimate(value=est.value, witness=est.witness,
                               samples=est.samples, seed=seed + i)
    cover.J_n = best
    return best
