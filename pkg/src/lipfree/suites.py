"""Named verification suites: each one runs a slice of the bound chain
and returns report rows.

Suite names are part of the CLI contract: kernel, lemma1, lemma2, grid,
glue, flatten, smoothing, gamma, counterexample, all.  The geometry
suites (lemma1/lemma2) always run on the fixed circle/sphere/torus trio;
kernel and grid are manifold-free; glue, smoothing and gamma follow the
configured manifold and norm; flatten uses a long flat curve so the
cutoff's decay zone is actually exercised.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List

import numpy as np

from ._rng import generator
from .assembly import (FlatteningCutoff, build_gamma, build_partition,
                       flatten, glue, verify_gamma)
from .charts import build_cover
from .config import ExperimentConfig
from .counterexample import (average_derivative, flat_patch_check,
                             min_projection_norm, projection_candidate,
                             synthetic_candidate, tension_check,
                             CandidateRetraction)
from .interpolation import HypercubeMesh, lambda_on_cube, lambda_piecewise
from .lipschitz import estimate_lip, random_lip_suite
from .manifolds import (Circle, Sphere, Torus, make_manifold,
                        tangent_flatness_defect, tangent_identity_defect,
                        translation_defect)
from .mollify import BallQuadrature, SmoothingOperator, kernel_constants
from .norms import EuclideanNorm, PNorm, WeightedL1Norm, make_norm, working_K
from .reporting import BoundRow

__all__ = ["SUITE_NAMES", "run_suite", "counterexample_report",
           "worker_count"]

SUITE_NAMES = ("kernel", "lemma1", "lemma2", "grid", "glue", "flatten",
               "smoothing", "gamma", "counterexample", "all")

KERNEL_CHECK_NODES = 48

# Report provenance per bound name (keys into reporting.REFS).
_GAMMA_REFS = {
    "smoothing-uniform": "smoothing",
    "smoothing-lip": "smoothing-lip",
    "interp-glue-uniform": "gamma-def",
    "interp-glue-lip": "gamma-def",
    "rebase-at-origin": "gamma-def",
    "centered-uniform": "gamma-bounds",
    "centered-lip": "gamma-bounds",
    "gamma-uniform": "gamma-bounds",
    "gamma-lip": "gamma-bounds",
    "gamma-at-basepoint": "gamma-def",
    "support-outside": "gamma-bounds",
    "linearity": "plumbing",
    "pointwise-convergence": "plumbing",
    "partition-sum": "partition",
    "rank-certificate": "plumbing",
}


def _kernel_suite(cfg: ExperimentConfig) -> List[BoundRow]:
    rows = []
    for N in (1, 2, 3):
        kc = kernel_constants(N)
        rows.append(BoundRow(
            "kernel-identity", 0.0, abs(kc.identity_residual),
            witness="N=%d A=%.17g G=%.17g" % (N, kc.A, kc.G),
            abs_tol=1e-6).tagged(suite="kernel", ref="kernel-identity", n=N))
        for si, s in enumerate((0.05, 0.1, 0.5)):
            q = BallQuadrature(N, s, nodes=KERNEL_CHECK_NODES)
            rows.append(BoundRow(
                "kernel-mass", 0.0, abs(q.kernel_mass() - 1.0),
                witness="N=%d s=%g nodes=%d" % (N, s, KERNEL_CHECK_NODES),
                abs_tol=1e-6).tagged(suite="kernel", ref="kernel-mass",
                                     n=N, f_index=si))
            rows.append(BoundRow(
                "kernel-grad", kc.G / s, q.gradient_mass(),
                witness="N=%d s=%g" % (N, s),
                slack=cfg.slack_for("kernel-grad", 1e-3)).tagged(
                    suite="kernel", ref="kernel-g", n=N, f_index=si))
    return rows


_GEOMETRY = (("circle", lambda: Circle(1.0)),
             ("sphere", lambda: Sphere(1.0)),
             ("torus", lambda: Torus(2.0, 0.5)))


def _lemma1_suite(cfg: ExperimentConfig) -> List[BoundRow]:
    rows = []
    seed = cfg.seed
    for mi, (name, mk) in enumerate(_GEOMETRY):
        man = mk()
        rep = tangent_identity_defect(man, 50, seed)
        rows.append(BoundRow(
            "tangent-identity", 0.0, rep.value,
            witness="%s: %d points" % (name, rep.pairs),
            abs_tol=1e-6).tagged(suite="lemma1", ref="tangent-identity",
                                 f_index=mi))
        if name in ("circle", "sphere"):
            # unit radius: the worst ratio over chords <= delta is
            # sin(theta/2) at chord length delta, i.e. delta/2
            delta = 0.1
            rep = tangent_flatness_defect(man, None, delta, 400, seed)
            oracle = delta / 2.0
            rows.append(BoundRow(
                "near-tangent-ratio", 0.0, abs(rep.value / oracle - 1.0),
                witness="%s: sampled=%.17g oracle=%.17g" % (name, rep.value,
                                                            oracle),
                abs_tol=cfg.slack_for("near-tangent-ratio", 0.01)).tagged(
                    suite="lemma1", ref="near-tangent", f_index=mi))
        cov = build_cover(man, 2, cfg.gamma.halfwidth, cfg.gamma.margin,
                          seed)
        worst = 0.0
        rng = generator(seed, "roundtrip", name)
        for i in range(cov.m):
            u = rng.uniform(-0.9, 0.9, size=(100, man.dim)) * cov.halfwidth
            y = cov.chart_point(i, u)
            u2, _res = cov.chart_coords(i, y)
            worst = max(worst, float(np.max(np.abs(u2 - u))))
        rows.append(BoundRow(
            "chart-roundtrip", 0.0, worst,
            witness="%s: m=%d, 100 points per chart" % (name, cov.m),
            abs_tol=1e-8).tagged(suite="lemma1", ref="chart-inverse",
                                 f_index=mi))
    return rows


def _lemma2_suite(cfg: ExperimentConfig) -> List[BoundRow]:
    rows = []
    deltas = (0.2, 0.1, 0.05)
    for mi, (name, mk) in enumerate(_GEOMETRY):
        man = mk()
        defs = [translation_defect(man, None, d, d, 300, cfg.seed).value
                for d in deltas]
        for k in range(len(deltas) - 1):
            rows.append(BoundRow(
                "translation-monotone", 0.0, defs[k + 1] - defs[k],
                witness="%s: defect(%g)=%.17g defect(%g)=%.17g" % (
                    name, deltas[k + 1], defs[k + 1], deltas[k], defs[k]),
                abs_tol=cfg.slack_for("translation-monotone", 0.01)).tagged(
                    suite="lemma2", ref="translation", n=k, f_index=mi))
    return rows


def _mesh_vertices(mesh: HypercubeMesh) -> np.ndarray:
    axes = [mesh.lo[k] + mesh.pitch[k] * np.arange(mesh.cells[k] + 1)
            for k in range(mesh.dim)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def _grid_suite(cfg: ExperimentConfig) -> List[BoundRow]:
    rows = []
    seed = cfg.seed
    for d in (1, 2):
        rng = generator(seed, "grid-suite", d)

        def smooth(u, w=rng.uniform(0.5, 1.5, size=d),
                   ph=rng.uniform(0, 2 * math.pi)):
            u = np.atleast_2d(u)
            return np.sin(u @ w + ph)

        mesh = HypercubeMesh.from_pitch([0.0] * d, [1.0] * d, 0.25)
        shape = tuple(b + 1 for b in mesh.cells)
        verts = _mesh_vertices(mesh)
        vv = smooth(verts).reshape(shape)
        res = float(np.max(np.abs(lambda_piecewise(mesh, vv, verts)
                                  - smooth(verts))))
        rows.append(BoundRow(
            "interp-vertex-exact", 0.0, res, witness="d=%d" % d,
            abs_tol=1e-12).tagged(suite="grid", ref="interpolant", n=d))

        a = rng.uniform(-2, 2, size=d)
        c = float(rng.uniform(-1, 1))
        affine = lambda u: np.atleast_2d(u) @ a + c
        av = affine(verts).reshape(shape)
        pts = rng.uniform(0, 1, size=(200, d))
        res = float(np.max(np.abs(lambda_piecewise(mesh, av, pts)
                                  - affine(pts))))
        rows.append(BoundRow(
            "interp-affine", 0.0, res, witness="d=%d, 200 points" % d,
            abs_tol=1e-12).tagged(suite="grid", ref="interpolant", n=d))

        rows.append(BoundRow(
            "interp-face", 0.0, _face_consistency(mesh, vv, rng),
            witness="d=%d" % d,
            abs_tol=1e-12).tagged(suite="grid", ref="interp-face", n=d))

        # quadratic test function on a delta-pitch mesh: the modulus of
        # its gradient over sqrt(d)*delta is exactly sqrt(d)*delta
        delta = 0.1
        fine = HypercubeMesh.from_pitch([0.0] * d, [1.0] * d, delta)
        fshape = tuple(b + 1 for b in fine.cells)
        g = lambda u: 0.5 * np.sum(np.atleast_2d(u) ** 2, axis=-1)
        gv = g(_mesh_vertices(fine)).reshape(fshape)
        probes = rng.uniform(0, 1, size=(400, d))
        diff_fn = lambda u: lambda_piecewise(fine, gv, u) - g(u)
        eps = math.sqrt(d) * delta
        enorm = EuclideanNorm(d)
        est = estimate_lip(diff_fn, probes, enorm, seed=seed,
                           refine_rounds=2, pair_cap=1500)
        rows.append(BoundRow(
            "interp-lip-defect", (1.0 + math.sqrt(d)) * eps, est.value,
            witness="d=%d g=|u|^2/2 delta=%g" % (d, delta),
            slack=cfg.slack_for("interp-lip-defect", 0.01)).tagged(
                suite="grid", ref="interp-error", n=d))
        lip_g = estimate_lip(g, probes, enorm, seed=seed + 1,
                             refine_rounds=2, pair_cap=1500)
        rows.append(BoundRow(
            "interp-sup-defect", eps * lip_g.value,
            float(np.max(np.abs(diff_fn(probes)))),
            witness="d=%d Lip-sample(g)=%.17g" % (d, lip_g.value),
            slack=cfg.slack_for("interp-sup-defect", 0.01)).tagged(
                suite="grid", ref="interp-error", n=d))
    return rows


def _eval_in_cell(mesh: HypercubeMesh, vv: np.ndarray, p: np.ndarray,
                  cell_idx) -> float:
    """Interpolant value at p using the given cell's corner patch."""
    d = mesh.dim
    t = np.array([(p[k] - mesh.lo[k]) / mesh.pitch[k] - cell_idx[k]
                  for k in range(d)])
    corners = [vv[tuple(cell_idx[k] + g[k] for k in range(d))]
               for g in itertools.product((0, 1), repeat=d)]
    return float(lambda_on_cube(corners, t)[0])


def _face_consistency(mesh: HypercubeMesh, vv: np.ndarray, rng) -> float:
    """Evaluate the interpolant on shared faces from both adjacent cells."""
    d = mesh.dim
    lo = np.asarray(mesh.lo)
    hi = np.asarray(mesh.hi)
    worst = 0.0
    for axis in range(d):
        for face in range(1, mesh.cells[axis]):
            pts = lo + rng.uniform(0, 1, size=(40, d)) * (hi - lo)
            pts[:, axis] = mesh.lo[axis] + face * mesh.pitch[axis]
            base_idx, _ = mesh.locate(pts)
            for p, base in zip(pts, base_idx):
                left = list(base)
                left[axis] = face - 1
                right = list(base)
                right[axis] = face
                worst = max(worst, abs(_eval_in_cell(mesh, vv, p, left)
                                       - _eval_in_cell(mesh, vv, p, right)))
    return worst


def _bounded_wave(norm, K: float, dim: int, rng) -> Callable:
    """sin wave with both sup and Lipschitz constant (for `norm`) <= 1."""
    a = rng.standard_normal(dim)
    b = float(rng.uniform(0, 2 * math.pi))
    scale = 1.0 / max(1.0, float(np.linalg.norm(a)) * K)

    def w(Y):
        return scale * np.sin(np.atleast_2d(Y) @ a + b)
    return w


def _glue_suite(cfg: ExperimentConfig) -> List[BoundRow]:
    man = make_manifold(cfg.manifold)
    norm = make_norm(cfg.norm)
    K, _ = working_K(norm)
    cover = build_cover(man, 2, cfg.gamma.halfwidth, cfg.gamma.margin,
                        cfg.seed)
    pou = build_partition(cover, norm, sample_count=cfg.gamma.pou_samples,
                          seed=cfg.seed + 505)
    suite = random_lip_suite(cfg.seed, 4, man, norm)
    eps = 0.05
    rows = []
    for k in range(20):
        f = suite[k % len(suite)]
        rng = generator(cfg.seed, "glue-instance", k)
        waves = [_bounded_wave(norm, K, man.ambient, rng)
                 for _ in range(cover.m)]
        pieces = [(lambda Y, f=f, w=w: np.asarray(f(Y)) + 0.9 * eps
                   * w(Y).ravel()) for w in waves]
        g, grows = glue(pou, pieces, f, eps, norm, sample_count=250,
                        seed=cfg.seed + 606 + k,
                        slack=cfg.slack_for("glue", 0.01))
        if g is None:
            grows = [grows]
        for r in grows:
            rows.append(r.tagged(suite="glue", ref="glue", f_index=k))
    return rows


def _flatten_suite(cfg: ExperimentConfig) -> List[BoundRow]:
    man = make_manifold({"kind": "graph", "name": "line",
                         "box": [[-250.0, 250.0]]})
    norm = PNorm(2, math.inf)
    K, _ = working_K(norm)
    suite = random_lip_suite(cfg.seed, 10, man, norm)
    rows = []
    for ri, R in enumerate((5.0, 10.0)):
        mu = FlatteningCutoff(R)
        vals = mu(np.array([R, R * R, R ** 1.5]))
        rows.append(BoundRow(
            "mu-at-radius", 0.0, abs(float(vals[0]) - 1.0),
            witness="R=%g" % R, abs_tol=0.0).tagged(
                suite="flatten", ref="mu", n=ri))
        rows.append(BoundRow(
            "mu-at-radius-squared", 0.0, abs(float(vals[1])),
            witness="R=%g" % R, abs_tol=0.0).tagged(
                suite="flatten", ref="mu", n=ri))
        # midpoint 0.5 is exact up to one ulp of the two logarithms
        rows.append(BoundRow(
            "mu-at-midpoint", 0.0, abs(float(vals[2]) - 0.5),
            witness="R=%g abs_tol=1e-15" % R, abs_tol=1e-15).tagged(
                suite="flatten", ref="mu", n=ri))
        for j, f in enumerate(suite):
            _, row = flatten(f, R, K, man, norm, lip_claim=1.0,
                             sample_count=400, seed=cfg.seed + 707 + j,
                             slack=cfg.slack_for("flatten-lip", 0.01))
            rows.append(row.tagged(suite="flatten", ref="flatten",
                                   n=ri, f_index=j))
    return rows


def _smoothing_suite(cfg: ExperimentConfig) -> List[BoundRow]:
    man = Circle(1.0)
    norm = PNorm(2, math.inf)
    K, _ = working_K(norm)
    n = 5
    suite = random_lip_suite(cfg.seed, 3, man, norm)
    L_n = 1.0
    S = SmoothingOperator(man, K, L_n, n, nodes=cfg.quad.nodes,
                          check_nodes=cfg.quad.check_nodes,
                          seed=cfg.seed + 404)
    c = S.constants()
    rows = [BoundRow(
        "smoothing-scale", 0.0,
        max(c["s_n"] - c["delta"], c["delta"] - c["delta_n"]),
        witness="s_n=%.17g delta=%.17g delta_n=%.17g" % (
            c["s_n"], c["delta"], c["delta_n"])).tagged(
        suite="smoothing", ref="smoothing")]

    probes = np.concatenate([man.sample(150, cfg.seed, "smoothing-probes",
                                        radius=float(n)),
                             np.zeros((1, man.ambient))])
    proj = lambda Y: man.retract(Y, check=False)
    lip_pts = man.sample(100, cfg.seed, "smoothing-lip-pts")
    for j, f in enumerate(suite):
        tok = "smoothing-%d" % j
        sf = lambda Y, f=f, tok=tok: S.apply(f, np.atleast_2d(Y),
                                             f_token=tok)
        gap = float(np.max(np.abs(sf(probes) - np.asarray(f(probes)))))
        rows.append(BoundRow(
            "smoothing-uniform", 1.0 / n, gap, witness="f%d" % j,
            slack=cfg.slack_for("smoothing-uniform", 0.05),
            abs_tol=c["quad_tol"]).tagged(suite="smoothing",
                                          ref="smoothing", n=n, f_index=j))
        est = estimate_lip(sf, lip_pts, norm, seed=cfg.seed + j,
                           refine_rounds=1, project=proj, pair_cap=900)
        rows.append(BoundRow(
            "smoothing-lip", 1.0 + 1.0 / n, est.value,
            witness="f%d: %s" % (j, est.witness),
            slack=cfg.slack_for("smoothing-lip", 0.05),
            abs_tol=c["quad_tol"]).tagged(suite="smoothing",
                                          ref="smoothing-lip", n=n,
                                          f_index=j))
        rows.append(BoundRow(
            "smoothing-at-basepoint", 0.0,
            abs(float(S.apply(f, np.zeros((1, man.ambient)),
                              f_token=tok)[0]))).tagged(
            suite="smoothing", ref="smoothing", n=n, f_index=j))

    # flat manifold: the translation defect vanishes, so calibration
    # accepts the whole tube budget on the first try
    line = make_manifold({"kind": "graph", "name": "line",
                          "box": [[-30.0, 30.0]]})
    S2 = SmoothingOperator(line, K, L_n, n, nodes=cfg.quad.nodes,
                           check_nodes=cfg.quad.check_nodes,
                           seed=cfg.seed + 404)
    c2 = S2.constants()
    rows.append(BoundRow(
        "smoothing-flat-delta", 0.0, abs(c2["delta"] - c2["delta_n"]),
        witness="delta=%.17g delta_n=%.17g" % (c2["delta"], c2["delta_n"])
    ).tagged(suite="smoothing", ref="smoothing-lip"))
    return rows


def _gamma_suite(cfg: ExperimentConfig) -> List[BoundRow]:
    man = make_manifold(cfg.manifold)
    norm = make_norm(cfg.norm)
    rows: List[BoundRow] = []
    max_defect: Dict[int, float] = {}
    for n in cfg.n_list:
        G = build_gamma(man, norm, n, halfwidth=cfg.gamma.halfwidth,
                        margin=cfg.gamma.margin, seed=cfg.seed,
                        nodes=cfg.quad.nodes,
                        check_nodes=cfg.quad.check_nodes,
                        pool_size=cfg.gamma.pool_size,
                        suite_size=min(6, cfg.gamma.suite_size),
                        pou_samples=cfg.gamma.pou_samples)
        suite = random_lip_suite(cfg.seed + 1001, cfg.gamma.suite_size,
                                 man, norm)
        vrows = verify_gamma(
            G, suite, probe_count=cfg.gamma.probe_count,
            seed=cfg.seed + 1001,
            slack=cfg.slack_for("gamma", 0.05),
            uniform_slack=cfg.slack_for("gamma-uniform", 0.0),
            lip_points=cfg.gamma.lip_points)
        defects = [r.sampled_value for r in vrows
                   if r.bound_name == "gamma-uniform"]
        max_defect[n] = max(defects) if defects else float("nan")
        for r in vrows:
            rows.append(r.tagged(suite="gamma",
                                 ref=_GAMMA_REFS.get(r.bound_name,
                                                     "plumbing")))
    ns = sorted(set(cfg.n_list))
    if len(ns) >= 2:
        first, last = ns[0], ns[-1]
        rows.append(BoundRow(
            "gamma-uniform-monotone", 0.0,
            max_defect[last] - max_defect[first],
            witness="defect(n=%d)=%.17g defect(n=%d)=%.17g" % (
                last, max_defect[last], first, max_defect[first])).tagged(
            suite="gamma", ref="gamma-bounds"))
    return rows


def counterexample_report(cfg: ExperimentConfig) -> tuple:
    """Rows plus the artifacts behind them (search result, averaged
    derivative, norm matrix) for CLI display."""
    ce = cfg.counterexample
    norm = WeightedL1Norm(ce.matrix)
    rows = [r.tagged(suite="counterexample", ref="flat-patch")
            for r in flat_patch_check(count=ce.grid)]

    cand = synthetic_candidate(ce.xi, seed=cfg.seed)
    rows += [r.tagged(suite="counterexample", ref="retraction-budget")
             for r in cand.validate(norm, seed=cfg.seed + 711)]

    T = average_derivative(cand, nodes=cfg.quad.nodes)
    res = min_projection_norm(norm, dir_count=ce.dir_count,
                              refine_rounds=ce.refine_rounds,
                              starts=ce.starts, seed=2718 + cfg.seed)
    rows += [r.tagged(suite="counterexample", ref="projection")
             for r in res.rows(floor=1.02)]
    for r in tension_check(T, norm, res, ce.xi, dir_count=ce.dir_count,
                           seed=3141 + cfg.seed):
        ref = "avg-derivative" if r.bound_name.startswith("averaged") \
            else "projection"
        rows.append(r.tagged(suite="counterexample", ref=ref))

    Tp = average_derivative(projection_candidate(), nodes=cfg.quad.nodes)
    P = np.diag([1.0, 1.0, 0.0])
    rows.append(BoundRow(
        "averaged-projection-exact", 0.0,
        float(np.max(np.abs(Tp.matrix - P))),
        witness="orthogonal projection candidate",
        abs_tol=1e-8).tagged(suite="counterexample", ref="avg-derivative"))

    c1 = synthetic_candidate(ce.xi, seed=cfg.seed + 1)
    c2 = synthetic_candidate(ce.xi, seed=cfg.seed + 2)
    slab = min(c1.slab, c2.slab)
    csum = CandidateRetraction(
        lambda x: c1.psi(x) + c2.psi(x), xi=2 * ce.xi, slab=slab,
        claims_displacement=False, label="sum")
    Ts = average_derivative(csum, nodes=cfg.quad.nodes)
    T1 = average_derivative(c1, nodes=cfg.quad.nodes)
    T2 = average_derivative(c2, nodes=cfg.quad.nodes)
    rows.append(BoundRow(
        "averaged-linearity", 0.0,
        float(np.max(np.abs(Ts.matrix - T1.matrix - T2.matrix))),
        witness="pointwise sum of two candidates",
        abs_tol=1e-9).tagged(suite="counterexample", ref="avg-derivative"))
    artifacts = {"matrix": ce.matrix, "xi": ce.xi, "search": res,
                 "T": T.matrix, "candidate": cand.label}
    return rows, artifacts


def _counterexample_suite(cfg: ExperimentConfig) -> List[BoundRow]:
    return counterexample_report(cfg)[0]


_SUITES: Dict[str, Callable] = {
    "kernel": _kernel_suite,
    "lemma1": _lemma1_suite,
    "lemma2": _lemma2_suite,
    "grid": _grid_suite,
    "glue": _glue_suite,
    "flatten": _flatten_suite,
    "smoothing": _smoothing_suite,
    "gamma": _gamma_suite,
    "counterexample": _counterexample_suite,
}


def worker_count() -> int:
    raw = os.environ.get("LIPFREE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_suite(cfg: ExperimentConfig, name: str) -> List[BoundRow]:
    """Rows for one named suite; 'all' runs every suite (in parallel when
    LIPFREE_THREADS allows) and concatenates in fixed suite order."""
    if name not in SUITE_NAMES:
        raise ValueError("unknown suite %r (choose from %s)" % (
            name, ", ".join(SUITE_NAMES)))
    if name != "all":
        return _SUITES[name](cfg)
    order = [s for s in SUITE_NAMES if s != "all"]
    workers = min(worker_count(), len(order))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_SUITES[s], cfg) for s in order]
            chunks = [f.result() for f in futures]
    else:
        chunks = [_SUITES[s](cfg) for s in order]
    return [r for chunk in chunks for r in chunk]
