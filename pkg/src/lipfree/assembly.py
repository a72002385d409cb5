"""Partition of unity, gluing, radial flattening, and the finite-rank
operator pipeline: S_n smooths, P_i interpolates per chart, the partition
glues the pieces into Q_n', re-basing gives Q_n, and the logarithmic
cutoff flattens to Gamma_n, whose Lipschitz norm and uniform defect the
verification rows compare against their budgeted values.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ._rng import generator
from .charts import CoverData, build_cover, estimate_Jn, estimate_Ln
from .interpolation import (FiniteRankChartOperator, HypercubeMesh,
                            calibrate_pitch, chart_gradient_modulus)
from .lipschitz import LipschitzFunction, estimate_lip, random_lip_suite
from .manifolds import DomainError, Manifold, make_manifold
from .mollify import CalibrationError, SmoothingOperator, kernel_constants
from .norms import Norm, make_norm, working_K
from .reporting import BoundRow

__all__ = [
    "CoverageGapError",
    "PartitionOfUnity",
    "build_partition",
    "BoundRow",
    "glue",
    "FlatteningCutoff",
    "flatten",
    "GammaOperator",
    "build_gamma",
    "verify_gamma",
    "rank_certificate",
]


class CoverageGapError(RuntimeError):
    """A point inside the covered ball has no chart containing it."""


def _smoothstep(s: np.ndarray) -> np.ndarray:
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


class PartitionOfUnity:
    """alpha_i = beta_i / sum_j beta_j with beta_i a smoothstep bump of the
    chart coordinate: 1 on the inner half-cube, 0 at the cube boundary."""

    def __init__(self, cover: CoverData):
        self.cover = cover
        self.H_sampled: Optional[float] = None
        self.H: Optional[float] = None
        self.H_inflated: Optional[float] = None

    def memberships(self, y) -> list:
        """Per chart: (probe indices, chart coords u) of members with
        positive bump value."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        hw = self.cover.halfwidth
        out = []
        for i in range(self.cover.m):
            sel, u = self.cover.member_coords(i, y)
            if len(sel):
                keep = np.max(np.abs(u), axis=1) < hw
                sel, u = sel[keep], u[keep]
            out.append((sel, u))
        return out

    def beta_from_u(self, u: np.ndarray) -> np.ndarray:
        hw = self.cover.halfwidth
        s = (hw - np.max(np.abs(u), axis=1)) / (hw / 2.0)
        return _smoothstep(s)

    def alphas(self, y) -> np.ndarray:
        """Dense (len(y), m) matrix of partition weights."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        B = np.zeros((len(y), self.cover.m))
        for i, (sel, u) in enumerate(self.memberships(y)):
            if len(sel):
                B[sel, i] = self.beta_from_u(u)
        tot = B.sum(axis=1)
        bad = tot <= 0.0
        if np.any(bad):
            w = y[np.argmax(bad)]
            raise CoverageGapError(
                f"no chart covers point {w} (|w| = {np.linalg.norm(w):.4f}); "
                "rebuild the cover with more overlap")
        return B / tot[:, None]


def build_partition(cover: CoverData, norm: Norm, sample_count: int = 600,
                    seed: int = 505, refine_rounds: int = 2) -> PartitionOfUnity:
    """Construct the partition and sample its Lipschitz constant H.

    H is the max over charts of the sampled Lipschitz constant of alpha_i;
    one alpha evaluation yields every chart's value at once, so the pair
    scan runs over the whole matrix and refinement jitters the worst pairs.
    """
    pou = PartitionOfUnity(cover)
    if cover.m == 1:
        pou.H_sampled = 0.0
        pou.H = 1.0
        pou.H_inflated = 1.0
        return pou

    man = cover.manifold
    radius = float(cover.n) ** 2
    pts = man.sample(sample_count, seed, "pou-H", radius=radius)
    g = generator(seed, "pou-H-pairs")

    def pair_ratios(P, Q):
        d = norm(P - Q)
        ok = d > 1e-12
        A, B = pou.alphas(P[ok]), pou.alphas(Q[ok])
        r = np.max(np.abs(A - B), axis=1) / d[ok]
        return P[ok], Q[ok], r

    k = min(len(pts) * 20, 6000)
    ii = g.integers(0, len(pts), k)
    jj = g.integers(0, len(pts), k)
    keep = ii != jj
    P, Q, r = pair_ratios(pts[ii[keep]], pts[jj[keep]])
    worst = float(np.max(r))
    for rnd in range(refine_rounds):
        top = np.argsort(r)[-24:]
        sigma = 0.25 * np.linalg.norm(P[top] - Q[top], axis=1) / 2 ** rnd
        reps = 8
        base_p = np.repeat(P[top], reps, axis=0)
        base_q = np.repeat(Q[top], reps, axis=0)
        jit = g.standard_normal((len(base_p), man.ambient)) \
            * np.repeat(sigma, reps)[:, None]
        cand_p = man.retract(base_p + jit, check=False)
        jit2 = g.standard_normal((len(base_q), man.ambient)) \
            * np.repeat(sigma, reps)[:, None]
        cand_q = man.retract(base_q + jit2, check=False)
        inside = (np.linalg.norm(cand_p, axis=1) <= radius) \
            & (np.linalg.norm(cand_q, axis=1) <= radius)
        if not np.any(inside):
            continue
        P2, Q2, r2 = pair_ratios(cand_p[inside], cand_q[inside])
        if len(r2):
            worst = max(worst, float(np.max(r2)))
            P, Q, r = P2, Q2, r2
    pou.H_sampled = worst
    pou.H = max(1.0, worst)
    pou.H_inflated = max(1.0, worst * 1.1)
    return pou


def glue(pou: PartitionOfUnity, pieces: Sequence[Callable], f_ref: Callable,
         eps: float, norm: Norm, sample_count: int = 400,
         seed: int = 606, slack: float = 0.01) -> tuple:
    """Glue chart-local pieces with the partition and report the bounds
    sup |g - f| <= eps and Lip(g - f) <= (1 + mH) eps.

    Pieces are ambient-callable stand-ins for their chart-local selves;
    the hypothesis (each piece within eps of f on its chart, in sup and
    Lipschitz senses) is validated by sampling before gluing.
    """
    cover = pou.cover
    man = cover.manifold
    proj = lambda Y: man.retract(Y, check=False)
    radius = float(cover.n) ** 2
    pts = man.sample(sample_count, seed, "glue", radius=radius)

    for i, (sel, u) in enumerate(pou.memberships(pts)):
        if not len(sel):
            continue
        local = pts[sel]
        gap = np.abs(np.asarray(pieces[i](local)) - np.asarray(f_ref(local)))
        if np.max(gap) > eps * (1 + 1e-9):
            return None, BoundRow(
                bound_name="glue-hypothesis",
                paper_value=eps, sampled_value=float(np.max(gap)),
                witness=f"piece {i} strays from f in sup norm")
        if len(sel) >= 2:
            diff = lambda Y, i=i: (np.asarray(pieces[i](np.atleast_2d(Y)))
                                   - np.asarray(f_ref(np.atleast_2d(Y))))
            est = estimate_lip(diff, local, norm, seed=seed + i,
                               refine_rounds=0, project=proj, pair_cap=400)
            if est.value > eps * (1 + 1e-9):
                return None, BoundRow(
                    bound_name="glue-hypothesis",
                    paper_value=eps, sampled_value=est.value,
                    witness=f"piece {i} strays from f in Lipschitz sense")

    def g(Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        A = pou.alphas(Y)
        out = np.zeros(len(Y))
        for i in range(cover.m):
            on = A[:, i] > 0
            if np.any(on):
                out[on] += A[on, i] * np.asarray(pieces[i](Y[on]))
        return out

    sup = float(np.max(np.abs(g(pts) - np.asarray(f_ref(pts)))))
    H = pou.H_inflated if pou.H_inflated is not None else 1.0
    diff_fn = lambda Y: g(Y) - np.asarray(f_ref(np.atleast_2d(Y)))
    lip = estimate_lip(diff_fn, pts, norm, seed=seed, refine_rounds=1,
                       project=proj, pair_cap=1200)
    rows = [
        BoundRow("glue-sup", eps, sup, slack=slack),
        BoundRow("glue-lip", (1.0 + cover.m * H) * eps, lip.value,
                 witness=lip.witness, slack=slack),
    ]
    return g, rows


@dataclass(frozen=True)
class FlatteningCutoff:
    """mu(t) = 1 on [0, R], (2 log R - log t)/log R on [R, R^2], 0 beyond."""

    R: float

    def __post_init__(self):
        if not self.R > 1.0:
            raise ValueError("flattening requires R > 1 (log R > 0)")

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.ones_like(t)
        mid = (t > self.R) & (t < self.R * self.R)
        with np.errstate(divide="ignore"):
            out[mid] = (2.0 * math.log(self.R) - np.log(t[mid])) \
                / math.log(self.R)
        out[t >= self.R * self.R] = 0.0
        return out


def flatten(f: Callable, R: float, K: float, man: Manifold, norm: Norm,
            lip_claim: float = 1.0, sample_count: int = 500, seed: int = 707,
            slack: float = 0.01) -> tuple:
    """Phi(f)(x) = mu(|x|_2) f(x); report sampled Lip vs (1+K^2/log R)."""
    mu = FlatteningCutoff(R)

    def g(Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return mu(np.linalg.norm(Y, axis=1)) * np.asarray(f(Y))

    proj = lambda Y: man.retract(Y, check=False)
    pts = man.sample(sample_count, seed, "flatten", radius=R * R * 2.0)
    est = estimate_lip(g, pts, norm, seed=seed, refine_rounds=2, project=proj)
    bound = (1.0 + K * K / math.log(R)) * lip_claim
    row = BoundRow("flatten-lip", bound, est.value, witness=est.witness,
                   slack=slack)
    return g, row


class GammaOperator:
    """The finite-rank approximant Gamma_n = Phi_n(Q_n) assembled from a
    smoothing operator, a chart cover with per-chart interpolants, and a
    partition of unity.  Evaluation is lazy: each input function f
    materializes only the vertex values its queries touch, cached under
    the caller's token.
    """

    def __init__(self, man: Manifold, norm: Norm, n: int,
                 S: SmoothingOperator, cover: CoverData,
                 pou: PartitionOfUnity,
                 charts: List[FiniteRankChartOperator],
                 constants: dict):
        self.man = man
        self.norm = norm
        self.n = int(n)
        self.S = S
        self.cover = cover
        self.pou = pou
        self.charts = charts
        self.mu = FlatteningCutoff(float(n))
        self.constants = dict(constants)
        self._sn_cache: Dict[object, Callable] = {}

    @property
    def vertex_count(self) -> int:
        return sum(op.vertex_count for op in self.charts)

    def cached_vertex_count(self, token: object) -> int:
        return sum(op.cached_vertex_count(token) for op in self.charts)

    def _smoothed(self, f: Callable, token: object) -> Callable:
        if token is not None and token in self._sn_cache:
            return self._sn_cache[token]
        base = float(self.S.smooth_raw(f, np.zeros((1, self.man.ambient)))[0])

        def sn(pts, f=f, base=base):
            return self.S.smooth_raw(f, pts) - base

        if token is not None:
            self._sn_cache[token] = sn
        return sn

    def q_prime(self, f: Callable, y, token: object = None) -> np.ndarray:
        """Q_n'(f) = sum_i alpha_i P_i(S_n f) at points y on the manifold."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        sn = self._smoothed(f, token)
        B = np.zeros((len(y), self.cover.m))
        V = np.zeros((len(y), self.cover.m))
        for i, (sel, u) in enumerate(self.pou.memberships(y)):
            if not len(sel):
                continue
            B[sel, i] = self.pou.beta_from_u(u)
            V[sel, i] = self.charts[i].evaluate(sn, u, token=token)
        tot = B.sum(axis=1)
        bad = tot <= 0.0
        if np.any(bad):
            w = y[np.argmax(bad)]
            raise CoverageGapError(
                f"no chart covers query {w} (|w| = {np.linalg.norm(w):.4f})")
        return np.sum(B * V, axis=1) / tot

    def q(self, f: Callable, y, token: object = None) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        at0 = self.q_prime(f, np.zeros((1, self.man.ambient)), token=token)
        return self.q_prime(f, y, token=token) - at0[0]

    def __call__(self, f: Callable, y, token: object = None) -> np.ndarray:
        """Gamma_n(f) at manifold points y; exact zero outside B_{n^2}."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        r = np.linalg.norm(y, axis=1)
        out = np.zeros(len(y))
        inside = r < float(self.n) ** 2
        if np.any(inside):
            out[inside] = self.mu(r[inside]) * self.q(f, y[inside], token=token)
        return out

    def drop(self, token: object) -> None:
        self._sn_cache.pop(token, None)
        for op in self.charts:
            op.drop(token)


def build_gamma(man: Manifold, norm: Norm, n: int,
                halfwidth: float = 0.3, margin: float = 0.9,
                seed: int = 0, nodes: int = 24, check_nodes: int = 32,
                pool_size: int = 4096, suite_size: int = 6,
                pou_samples: int = 600) -> GammaOperator:
    """Assemble Gamma_n, calibrating every stage and recording constants."""
    if n < 2:
        raise ValueError("flattening needs n >= 2 (log n > 0)")
    t0 = time.time()
    K, K_src = working_K(norm)
    cover = build_cover(man, n, halfwidth=halfwidth, margin=margin,
                        seed=seed, sample_count=pool_size)
    estimate_Ln(cover)
    estimate_Jn(cover)
    L_inf = max(1.0, cover.L_n.inflated)
    J_inf = max(1.0, cover.J_n.inflated)

    S = SmoothingOperator(man, K, L_n=L_inf, n=n, nodes=nodes,
                          check_nodes=check_nodes, seed=seed + 404)
    pou = build_partition(cover, norm, sample_count=pou_samples,
                          seed=seed + 505)

    d = man.dim
    eps_target = 1.0 / (2.0 * cover.m * n * pou.H_inflated * K
                        * (1.0 + math.sqrt(d)) * max(L_inf, J_inf))
    G = kernel_constants(man.ambient).G
    budget_slope = G * K * L_inf ** 3 * math.sqrt(d) / S.s_n

    cal_suite = random_lip_suite(seed=seed + 808, count=suite_size,
                                 manifold=man, norm=norm)
    smooth_apply = lambda f, pts: S.smooth_raw(f, pts)
    charts = []
    pitches = []
    moduli = []
    for i in range(cover.m):
        cp = lambda u, i=i: cover.chart_point(i, u)
        pitch, mod = calibrate_pitch(smooth_apply, cp, d, halfwidth,
                                     eps_target, cal_suite, seed=seed + i,
                                     budget_slope=budget_slope)
        mesh = HypercubeMesh.from_pitch([-halfwidth] * d, [halfwidth] * d,
                                        pitch)
        charts.append(FiniteRankChartOperator(mesh, cp, label=f"chart-{i}"))
        pitches.append(pitch)
        moduli.append(mod)

    constants = {
        "n": n,
        "K": K,
        "K_source": K_src,
        "L_n": cover.L_n.value,
        "L_n_inflated": L_inf,
        "J_n": cover.J_n.value,
        "J_n_inflated": J_inf,
        "m": cover.m,
        "H_sampled": pou.H_sampled,
        "H": pou.H,
        "H_inflated": pou.H_inflated,
        "halfwidth": halfwidth,
        "margin": margin,
        "delta_n": S.delta_n,
        "delta": S.delta,
        "s_n": S.s_n,
        "calibration_defect": S.calibration_defect,
        "eps_target": eps_target,
        "budget_slope": budget_slope,
        "pitch_min": min(pitches),
        "pitch_max": max(pitches),
        "modulus_max": max(moduli),
        "quad_nodes": nodes,
        "quad_tol": S.quad_tol,
        "vertex_count": sum(op.vertex_count for op in charts),
        "seed": seed,
        "build_seconds": time.time() - t0,
    }
    return GammaOperator(man, norm, n, S, cover, pou, charts, constants)


def rank_certificate(G: GammaOperator, seed: int = 909,
                     cap: int = 256) -> BoundRow:
    """Numerical rank of a sampled evaluation matrix of Gamma_n, which can
    never exceed the total vertex count (the operator factors through the
    vertex value functionals)."""
    V = G.vertex_count
    k = int(min(5 * V, cap))
    fns = random_lip_suite(seed=seed, count=k, manifold=G.man, norm=G.norm)
    pts = G.man.sample(k, seed, "rank-pts", radius=float(G.n) ** 2)
    M = np.empty((len(pts), len(fns)))
    for j, f in enumerate(fns):
        M[:, j] = G(f, pts, token=("rank", j))
        G.drop(("rank", j))
    sv = np.linalg.svd(M, compute_uv=False)
    rank = int(np.sum(sv > 1e-8 * sv[0])) if sv[0] > 0 else 0
    return BoundRow("rank-certificate", float(V), float(rank),
                    witness=f"{k} functions at {len(pts)} points")


def verify_gamma(G: GammaOperator, suite: Sequence[LipschitzFunction],
                 probe_count: int = 200, seed: int = 1001,
                 slack: float = 0.05, uniform_slack: float = 0.0,
                 lip_points: int = 160) -> List[BoundRow]:
    """Check every bound in the chain on the given unit suite.

    `slack` relaxes the sampled side of the Lipschitz and intermediate
    rows; the end-to-end uniform defect row gets `uniform_slack` plus a
    fixed 1e-4 absolute allowance instead.
    """
    man, norm, n = G.man, G.norm, G.n
    K = G.constants["K"]
    quad_tol = G.constants["quad_tol"]
    proj = lambda Y: man.retract(Y, check=False)

    r_small = float(n)
    r_big = float(n) ** 2
    probes_small = np.concatenate([
        man.sample(probe_count, seed, "probes-small", radius=r_small),
        np.zeros((1, man.ambient))])
    centers = G.cover.centers
    cs = centers[np.linalg.norm(centers, axis=1) <= r_small]
    if len(cs):
        probes_small = np.concatenate([probes_small, cs])
    probes_big = np.concatenate([
        man.sample(probe_count, seed, "probes-big", radius=r_big),
        centers, np.zeros((1, man.ambient))])
    lip_pts = man.sample(lip_points, seed, "lip-pts", radius=r_big)

    lip_budget = (1.0 + K * K / math.log(n)) * (1.0 + 3.0 / n)
    rows: List[BoundRow] = []

    for j, f in enumerate(suite):
        tok = ("verify", j)
        t0 = time.time()
        row_start = len(rows)
        sn = G._smoothed(f, tok)

        fv_small = np.asarray(f(probes_small))
        fv_big = np.asarray(f(probes_big))

        sn_big = sn(probes_big)
        rows.append(BoundRow("smoothing-uniform", 1.0 / n,
                             float(np.max(np.abs(sn_big - fv_big))),
                             witness=f"f{j}", slack=slack, abs_tol=quad_tol))
        est = estimate_lip(lambda Y: sn(np.atleast_2d(Y)), lip_pts, norm,
                           seed=seed + j, refine_rounds=1, project=proj,
                           pair_cap=900)
        rows.append(BoundRow("smoothing-lip", 1.0 + 1.0 / n, est.value,
                             witness=f"f{j}: {est.witness}", slack=slack,
                             abs_tol=quad_tol))

        qp_big = G.q_prime(f, probes_big, token=tok)
        diff = qp_big - sn_big
        rows.append(BoundRow("interp-glue-uniform", 1.0 / n,
                             float(np.max(np.abs(diff))),
                             witness=f"f{j}", slack=slack, abs_tol=quad_tol))
        est = estimate_lip(
            lambda Y: G.q_prime(f, np.atleast_2d(Y), token=tok)
            - sn(np.atleast_2d(Y)),
            lip_pts, norm, seed=seed + 31 * j, refine_rounds=1, project=proj,
            pair_cap=900)
        rows.append(BoundRow("interp-glue-lip", 2.0 / n, est.value,
                             witness=f"f{j}: {est.witness}", slack=slack,
                             abs_tol=quad_tol))

        qp0 = float(G.q_prime(f, np.zeros((1, man.ambient)), token=tok)[0])
        rows.append(BoundRow("rebase-at-origin", 2.0 / n, abs(qp0),
                             witness=f"f{j}", slack=slack, abs_tol=quad_tol))

        q_big = qp_big - qp0
        rows.append(BoundRow("centered-uniform", 4.0 / n,
                             float(np.max(np.abs(q_big - fv_big))),
                             witness=f"f{j}", slack=slack, abs_tol=quad_tol))
        est = estimate_lip(lambda Y: G.q(f, np.atleast_2d(Y), token=tok),
                           lip_pts, norm, seed=seed + 53 * j,
                           refine_rounds=1, project=proj, pair_cap=900)
        rows.append(BoundRow("centered-lip", 1.0 + 3.0 / n, est.value,
                             witness=f"f{j}: {est.witness}", slack=slack,
                             abs_tol=quad_tol))

        gv_small = G(f, probes_small, token=tok)
        rows.append(BoundRow("gamma-uniform", 4.0 / n,
                             float(np.max(np.abs(gv_small - fv_small))),
                             witness=f"f{j}", slack=uniform_slack,
                             abs_tol=1e-4))
        est = estimate_lip(lambda Y: G(f, np.atleast_2d(Y), token=tok),
                           lip_pts, norm, seed=seed + 97 * j,
                           refine_rounds=1, project=proj, pair_cap=900)
        rows.append(BoundRow("gamma-lip", lip_budget, est.value,
                             witness=f"f{j}: {est.witness}", slack=slack,
                             abs_tol=quad_tol))
        rows[-1].seconds = time.time() - t0
        for r in rows[row_start:]:
            r.f_index = j

    # origin pin and support rows are exact by construction
    f0 = suite[0]
    rows.append(BoundRow("gamma-at-basepoint", 0.0,
                         abs(float(G(f0, np.zeros((1, man.ambient)),
                                     token=("verify", 0))[0])),
                         witness="f0", abs_tol=1e-15))

    far = _far_probes(man, r_big, seed)
    gv = G(f0, far, token=("verify", 0))
    rows.append(BoundRow("support-outside", 0.0,
                         float(np.max(np.abs(gv))),
                         witness=f"{len(far)} probes outside B_n^2"))

    # linearity at probes
    g1, g2 = suite[0], suite[-1]
    a, b = 1.7, -0.6
    combo = lambda Y: a * np.asarray(g1(Y)) + b * np.asarray(g2(Y))
    lhs = G(combo, probes_small, token=("verify", "combo"))
    rhs = a * G(g1, probes_small, token=("verify", 0)) \
        + b * G(g2, probes_small, token=("verify", len(suite) - 1))
    rows.append(BoundRow("linearity", 1e-8 * (abs(a) + abs(b)),
                         float(np.max(np.abs(lhs - rhs))),
                         witness=f"a={a}, b={b}", abs_tol=0.0))

    # pointwise-convergence surrogate: f_k -> f uniformly forces
    # Gamma f_k -> Gamma f at probes
    base = G(g1, probes_small, token=("verify", 0))
    prev = np.inf
    ok = True
    for k in (1, 2, 4, 8):
        fk = lambda Y, k=k: np.asarray(g1(Y)) + np.asarray(g2(Y)) / k
        gap = float(np.max(np.abs(G(fk, probes_small, token=("conv", k))
                                  - base)))
        G.drop(("conv", k))
        if gap > prev * (1 + 1e-9):
            ok = False
        prev = gap
    rows.append(BoundRow("pointwise-convergence", 0.0,
                         0.0 if ok and prev <= lip_budget * 2.0 / 8 else 1.0,
                         witness=f"residual at k=8: {prev:.3e}",
                         abs_tol=0.5))

    # partition sums over the covered ball
    pts = man.sample(400, seed, "alpha-sum", radius=r_big)
    A = G.pou.alphas(pts)
    rows.append(BoundRow("partition-sum", 0.0,
                         float(np.max(np.abs(A.sum(axis=1) - 1.0))),
                         witness=f"{len(pts)} points", abs_tol=1e-10))

    rows.append(rank_certificate(G, seed=seed + 7))
    for r in rows:
        r.n = n
    return rows


def _far_probes(man: Manifold, r_big: float, seed: int,
                count: int = 64) -> np.ndarray:
    """Ambient points outside B_(r_big), plus manifold points out there
    when the manifold extends that far."""
    g = generator(seed, "far-probes", "ambient")
    dirs = g.standard_normal((count, man.ambient))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = r_big * (1.0 + g.uniform(1e-6, 1.0, size=(count, 1)))
    probes = dirs * radii
    try:
        pts = man.sample(count * 4, seed, "far-probes")
    except DomainError:
        return probes
    far = pts[np.linalg.norm(pts, axis=1) > r_big * (1 + 1e-9)]
    if len(far):
        probes = np.concatenate([far[:count], probes])
    return probes
