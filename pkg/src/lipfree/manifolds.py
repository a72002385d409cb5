"""Embedded C^1 submanifolds of R^N with nearest-point retractions.

All public coordinates are centered: the configured basepoint sits at the
origin, so Euclidean balls B_R used by the pipeline are centered on it.
Each variant implements its geometry in raw (uncentered) coordinates and
the base class shifts.

The retraction psi maps a tube neighborhood of width tube_radius() onto
the manifold; tangent frames are orthonormal row bases of the tangent
spaces.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._rng import generator, halton
from .norms import ProfileBody, minkowski_gauge

__all__ = [
    "Manifold",
    "Circle",
    "Sphere",
    "Torus",
    "GraphOfFunction",
    "NormSphere",
    "DomainError",
    "DefectReport",
    "tangent_identity_defect",
    "tangent_flatness_defect",
    "translation_defect",
    "tube_sample",
    "make_manifold",
]


class DomainError(ValueError):
    """Raised when sampling preconditions cannot be met."""


def _unit(v, axis=-1):
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    return v / np.where(n == 0, 1.0, n)


def _shifted_halton(count, dim, seed, tags):
    """Halton points under a seeded toroidal shift: low discrepancy is
    preserved while distinct (seed, tags) give distinct point sets."""
    g = generator(seed, "cp-shift", *tags)
    return (halton(count, dim) + g.uniform(0.0, 1.0, dim)) % 1.0


class Manifold:
    dim: int
    ambient: int
    kind: str

    def __init__(self, basepoint_raw: np.ndarray):
        self.basepoint_raw = np.asarray(basepoint_raw, dtype=float)

    # raw-coordinate interface implemented by variants
    def _residual_raw(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _retract_raw(self, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _sample_raw(self, count: int, seed: int, tags: tuple) -> np.ndarray:
        raise NotImplementedError

    def _frame_raw(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def tube_radius(self) -> float:
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError

    # centered wrappers
    def contains_residual(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self._residual_raw(x + self.basepoint_raw)

    def retract(self, y, check: bool = True) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        p = self._retract_raw(y + self.basepoint_raw) - self.basepoint_raw
        if check:
            d = float(np.max(np.linalg.norm(np.atleast_2d(y) - np.atleast_2d(p),
                                            axis=-1)))
            if d > self.tube_radius() * (1.0 + 1e-9):
                raise DomainError(
                    f"query at distance {d:.6g} from the manifold exceeds "
                    f"the tube radius {self.tube_radius():.6g}")
        return p

    def tangent_frame(self, x) -> np.ndarray:
        """Orthonormal rows spanning T_x, shape (dim, ambient)."""
        return self._frame_raw(np.asarray(x, dtype=float) + self.basepoint_raw)

    def tangent_frames(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.stack([self.tangent_frame(p) for p in pts])

    def project_tangent(self, x, v) -> np.ndarray:
        """Orthogonal projection of v onto T_x (single point, batch of v)."""
        E = self.tangent_frame(x)
        v = np.asarray(v, dtype=float)
        return (v @ E.T) @ E

    def sample(self, count, seed, *tags, radius=None) -> np.ndarray:
        """Deterministic low-discrepancy points on M, centered coordinates.

        With `radius`, restricted to the Euclidean ball B_radius around the
        basepoint; raises DomainError if the restriction is empty.
        """
        pts = self._sample_raw(count, seed, tags) - self.basepoint_raw
        if radius is not None:
            pts = pts[np.linalg.norm(pts, axis=1) <= radius]
            if len(pts) == 0:
                raise DomainError(f"no manifold samples inside B_{radius}")
        return pts

    def dpsi_apply(self, x, v, h: float = 1e-6) -> np.ndarray:
        """Directional derivative of the retraction, central differences."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return (self.retract(x + h * v) - self.retract(x - h * v)) / (2.0 * h)


class Circle(Manifold):
    dim = 1
    ambient = 2
    kind = "circle"

    def __init__(self, radius: float, basepoint="auto"):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        if isinstance(basepoint, str) and basepoint == "auto":
            base = np.array([self.radius, 0.0])
        else:
            base = np.asarray(basepoint, dtype=float)
        super().__init__(base)
        if self._residual_raw(base[None])[0] > 1e-9 * self.radius:
            raise ValueError("basepoint is not on the circle")

    def _residual_raw(self, p):
        return np.abs(np.linalg.norm(p, axis=-1) - self.radius)

    def _retract_raw(self, w):
        return self.radius * _unit(w)

    def _sample_raw(self, count, seed, tags):
        u = _shifted_halton(count, 1, seed, tags)[:, 0]
        th = 2.0 * np.pi * u
        return self.radius * np.stack([np.cos(th), np.sin(th)], axis=1)

    def _frame_raw(self, p):
        t = np.array([-p[1], p[0]]) / np.linalg.norm(p)
        return t[None, :]

    def normals(self, pts) -> np.ndarray:
        return _unit(np.asarray(pts, dtype=float) + self.basepoint_raw)

    def tube_radius(self):
        return self.radius / 2.0

    def to_config(self):
        return {"kind": "circle", "radius": self.radius}


class Sphere(Manifold):
    dim = 2
    ambient = 3
    kind = "sphere"

    def __init__(self, radius: float, basepoint="auto"):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        if isinstance(basepoint, str) and basepoint == "auto":
            base = np.array([0.0, 0.0, -self.radius])
        else:
            base = np.asarray(basepoint, dtype=float)
        super().__init__(base)

    def _residual_raw(self, p):
        return np.abs(np.linalg.norm(p, axis=-1) - self.radius)

    def _retract_raw(self, w):
        return self.radius * _unit(w)

    def _sample_raw(self, count, seed, tags):
        uv = _shifted_halton(count, 2, seed, tags)
        th = 2.0 * np.pi * uv[:, 0]
        z = self.radius * (2.0 * uv[:, 1] - 1.0)
        rho = np.sqrt(np.maximum(self.radius ** 2 - z ** 2, 0.0))
        return np.stack([rho * np.cos(th), rho * np.sin(th), z], axis=1)

    def _frame_raw(self, p):
        n = p / np.linalg.norm(p)
        k = int(np.argmin(np.abs(n)))
        e = np.zeros(3)
        e[k] = 1.0
        v1 = e - n[k] * n
        v1 /= np.linalg.norm(v1)
        v2 = np.cross(n, v1)
        return np.stack([v1, v2])

    def normals(self, pts) -> np.ndarray:
        return _unit(np.asarray(pts, dtype=float) + self.basepoint_raw)

    def tube_radius(self):
        return self.radius / 2.0

    def to_config(self):
        return {"kind": "sphere", "radius": self.radius}


class Torus(Manifold):
    dim = 2
    ambient = 3
    kind = "torus"

    def __init__(self, major: float, minor: float, basepoint="auto"):
        if not (major > minor > 0):
            raise ValueError("torus requires major > minor > 0")
        self.major = float(major)
        self.minor = float(minor)
        if isinstance(basepoint, str) and basepoint == "auto":
            base = np.array([self.major + self.minor, 0.0, 0.0])
        else:
            base = np.asarray(basepoint, dtype=float)
        super().__init__(base)

    def _ring(self, w):
        rho = np.linalg.norm(w[..., :2], axis=-1, keepdims=True)
        q = np.zeros_like(w)
        q[..., :2] = self.major * w[..., :2] / np.where(rho == 0, 1.0, rho)
        return q

    def _residual_raw(self, p):
        rho = np.linalg.norm(p[..., :2], axis=-1)
        return np.abs(np.sqrt((rho - self.major) ** 2 + p[..., 2] ** 2) - self.minor)

    def _retract_raw(self, w):
        q = self._ring(w)
        return q + self.minor * _unit(w - q)

    def _sample_raw(self, count, seed, tags):
        uv = _shifted_halton(count, 2, seed, tags)
        th = 2.0 * np.pi * uv[:, 0]
        # area-uniform in phi: invert CDF(phi) ~ R*phi + r*sin(phi)
        target = 2.0 * np.pi * uv[:, 1]
        ph = target.copy()
        for _ in range(12):
            ph -= (self.major * ph + self.minor * np.sin(ph)
                   - self.major * target) / (self.major + self.minor * np.cos(ph))
        rho = self.major + self.minor * np.cos(ph)
        return np.stack([rho * np.cos(th), rho * np.sin(th),
                         self.minor * np.sin(ph)], axis=1)

    def _frame_raw(self, p):
        t_th = np.array([-p[1], p[0], 0.0])
        t_th /= np.linalg.norm(t_th)
        n = (p - self._ring(p[None])[0]) / self.minor
        t_ph = np.cross(n, t_th)
        t_ph /= np.linalg.norm(t_ph)
        return np.stack([t_th, t_ph])

    def normals(self, pts) -> np.ndarray:
        p = np.asarray(pts, dtype=float) + self.basepoint_raw
        return (p - self._ring(p)) / self.minor

    def tube_radius(self):
        return self.minor / 2.0

    def to_config(self):
        return {"kind": "torus", "R": self.major, "r": self.minor}


class GraphOfFunction(Manifold):
    """Graph {(u, g(u)) : u in box} of a C^1 map g: R^d -> R^(N-d)."""

    kind = "graph"

    def __init__(self, g: Callable, domain_box, codim: int = 1,
                 jac: Optional[Callable] = None, basepoint="auto",
                 name: str = "graph"):
        self.g = g
        self.jac = jac
        self.box = np.asarray(domain_box, dtype=float)  # (d, 2)
        self.dim = len(self.box)
        self.codim = int(codim)
        self.ambient = self.dim + self.codim
        self.name = name
        uc = self.box.mean(axis=1)
        gc = np.atleast_2d(self.g(uc[None]))[0]
        if gc.shape != (self.codim,):
            raise ValueError("g output does not match declared codimension")
        if isinstance(basepoint, str) and basepoint == "auto":
            base = np.concatenate([uc, gc])
        else:
            base = np.asarray(basepoint, dtype=float)
        super().__init__(base)

    def _g(self, u):
        return np.atleast_2d(np.asarray(self.g(u), dtype=float)).reshape(len(u), self.codim)

    def _J(self, u, h: float = 1e-6):
        if self.jac is not None:
            return np.asarray(self.jac(u), dtype=float).reshape(len(u), self.codim, self.dim)
        J = np.empty((len(u), self.codim, self.dim))
        for j in range(self.dim):
            step = np.zeros(self.dim)
            step[j] = h
            J[:, :, j] = (self._g(u + step) - self._g(u - step)) / (2.0 * h)
        return J

    def _residual_raw(self, p):
        p = np.atleast_2d(p)
        return np.linalg.norm(p[:, self.dim:] - self._g(p[:, :self.dim]), axis=1)

    def _retract_raw(self, w):
        # Newton on the normal equations of min_u |(u, g(u)) - w|^2,
        # Gauss-Newton approximation of the Hessian.
        w = np.atleast_2d(np.asarray(w, dtype=float))
        u = w[:, :self.dim].copy()
        for _ in range(60):
            J = self._J(u)
            r = self._g(u) - w[:, self.dim:]
            F = (u - w[:, :self.dim]) + np.einsum("bcd,bc->bd", J, r)
            if np.max(np.linalg.norm(F, axis=1)) < 1e-12:
                break
            H = np.eye(self.dim)[None] + np.einsum("bcd,bce->bde", J, J)
            u = u - np.linalg.solve(H, F[..., None])[..., 0]
        return np.concatenate([u, self._g(u)], axis=1)

    def _sample_raw(self, count, seed, tags):
        u = self.box[:, 0] + _shifted_halton(count, self.dim, seed, tags) * (self.box[:, 1] - self.box[:, 0])
        return np.concatenate([u, self._g(u)], axis=1)

    def _frame_raw(self, p):
        u = np.atleast_2d(p[:self.dim])
        J = self._J(u)[0]  # (codim, dim)
        rows = np.concatenate([np.eye(self.dim), J.T], axis=1)  # (d, N)
        # Gram-Schmidt
        out = []
        for r in rows:
            for o in out:
                r = r - (r @ o) * o
            out.append(r / np.linalg.norm(r))
        return np.stack(out)

    def tube_radius(self):
        if getattr(self, "_tube", None) is not None:
            return self._tube
        u = self.box[:, 0] + halton(128, self.dim) * (self.box[:, 1] - self.box[:, 0])
        h = 1e-4
        kappa = 0.0
        for j in range(self.dim):
            step = np.zeros(self.dim)
            step[j] = h
            second = (self._g(u + step) - 2.0 * self._g(u) + self._g(u - step)) / h ** 2
            kappa = max(kappa, float(np.max(np.abs(second))) * self.dim)
        J = self._J(u)
        stretch = 1.0 + float(np.max(np.sum(J ** 2, axis=(1, 2))))
        self._tube = 1e6 if kappa <= 1e-12 else min(0.5 / (kappa * stretch), 1e6)
        return self._tube

    def to_config(self):
        return {"kind": "graph", "name": self.name,
                "box": [list(map(float, row)) for row in self.box],
                "codim": self.codim}


class NormSphere(Manifold):
    """Unit sphere {gauge = 1} of the profile body, a smooth hypersurface."""

    kind = "normsphere"

    def __init__(self, dim: int = 3, basepoint="auto"):
        self.body = ProfileBody(dim)
        self.dim = dim - 1
        self.ambient = dim
        if isinstance(basepoint, str) and basepoint == "auto":
            base = np.zeros(dim)
            base[0] = 2.0  # gauge((2,0,..,0)) = 1 since phi(1) = 1
        else:
            base = np.asarray(basepoint, dtype=float)
        super().__init__(base)

    def _residual_raw(self, p):
        p = np.atleast_2d(p)
        val = self.body.value(p) - 1.0
        gn = np.linalg.norm(self.body.grad(p), axis=-1)
        return np.abs(val) / np.maximum(gn, 1e-9)

    def _retract_raw(self, w):
        # Lagrange-Newton for the nearest point on {Phi = 1}; the body
        # function has a diagonal Hessian, so each step is a small KKT solve.
        w = np.atleast_2d(np.asarray(w, dtype=float))
        B, N = w.shape
        p = w / minkowski_gauge(self.body, w)[:, None]
        grad = self.body.grad(p)
        gn2 = np.sum(grad ** 2, axis=1)
        lam = np.einsum("bi,bi->b", w - p, grad) / np.maximum(gn2, 1e-30)
        for _ in range(60):
            grad = self.body.grad(p)
            G1 = p - w + lam[:, None] * grad
            G2 = self.body.value(p) - 1.0
            res = np.sqrt(np.sum(G1 ** 2, axis=1) + G2 ** 2)
            if np.max(res) < 1e-13:
                break
            Hd = self.body.hess_diag(p)
            KKT = np.zeros((B, N + 1, N + 1))
            KKT[:, :N, :N] = np.eye(N)[None] + lam[:, None, None] * (
                Hd[:, :, None] * np.eye(N)[None])
            KKT[:, :N, N] = grad
            KKT[:, N, :N] = grad
            rhs = np.concatenate([G1, G2[:, None]], axis=1)
            step = np.linalg.solve(KKT, rhs[..., None])[..., 0]
            p = p - step[:, :N]
            lam = lam - step[:, N]
        return p

    def _sample_raw(self, count, seed, tags):
        uv = _shifted_halton(count, self.ambient - 1, seed, tags)
        if self.ambient == 3:
            th = 2.0 * np.pi * uv[:, 0]
            z = 2.0 * uv[:, 1] - 1.0
            rho = np.sqrt(np.maximum(1.0 - z ** 2, 0.0))
            d = np.stack([rho * np.cos(th), rho * np.sin(th), z], axis=1)
        else:
            d = _unit(2.0 * uv - 1.0)
        return d / minkowski_gauge(self.body, d)[:, None]

    def _frame_raw(self, p):
        n = self.body.grad(p)
        n = n / np.linalg.norm(n)
        k = int(np.argmin(np.abs(n)))
        e = np.zeros(self.ambient)
        e[k] = 1.0
        v1 = e - n[k] * n
        v1 /= np.linalg.norm(v1)
        if self.ambient == 3:
            v2 = np.cross(n, v1)
            return np.stack([v1, v2])
        rows = [v1]
        for i in range(self.ambient):
            if len(rows) == self.dim:
                break
            cand = np.zeros(self.ambient)
            cand[i] = 1.0
            cand = cand - (cand @ n) * n
            for r in rows:
                cand = cand - (cand @ r) * r
            nn = np.linalg.norm(cand)
            if nn > 1e-8:
                rows.append(cand / nn)
        return np.stack(rows)

    def normals(self, pts) -> np.ndarray:
        p = np.asarray(pts, dtype=float) + self.basepoint_raw
        return _unit(self.body.grad(p))

    def tube_radius(self):
        # probe along normals: the largest offset that still retracts back
        if getattr(self, "_tube", None) is not None:
            return self._tube
        pts = self.sample(64, 0, "tube-probe")
        raw = pts + self.basepoint_raw
        nrm = self.normals(pts)
        t_ok = np.full(len(pts), 1.0)
        for sign in (1.0, -1.0):
            lo = np.zeros(len(pts))
            hi = np.full(len(pts), 1.0)
            for _ in range(20):
                mid = 0.5 * (lo + hi)
                back = self._retract_raw(raw + sign * mid[:, None] * nrm)
                ok = np.linalg.norm(back - raw, axis=1) <= 1e-6 * (1.0 + mid)
                lo = np.where(ok, mid, lo)
                hi = np.where(ok, hi, mid)
            t_ok = np.minimum(t_ok, lo)
        self._tube = float(max(np.min(t_ok) / 2.0, 1e-3))
        return self._tube

    def to_config(self):
        return {"kind": "normsphere", "dim": self.ambient,
                "profile": self.body.profile}


@dataclass(frozen=True)
class DefectReport:
    value: float
    pairs: int
    witness: tuple


def _near_pairs(man: Manifold, radius, delta, count, seed, tag):
    """Pairs x, y on M cap B_radius with 0 < |x - y|_2 <= delta."""
    x = man.sample(count, seed, tag, "base", radius=radius)
    g = generator(seed, tag, "steps")
    reps = max(1, (3 * count) // max(len(x), 1))
    xs = np.repeat(x, reps, axis=0)
    frames = np.repeat(man.tangent_frames(x), reps, axis=0)
    coef = g.standard_normal((len(xs), man.dim))
    v = _unit(np.einsum("bd,bdn->bn", coef, frames))
    # overshoot the tangent step so chords after retraction still reach delta
    t = g.uniform(0.05, 1.15, len(xs)) * delta
    y = man.retract(xs + t[:, None] * v)
    d = np.linalg.norm(y - xs, axis=1)
    keep = (d > 1e-12) & (d <= delta)
    if radius is not None:
        keep &= np.linalg.norm(y, axis=1) <= radius
    if not np.any(keep):
        raise DomainError("no admissible close pairs on the manifold")
    return xs[keep], y[keep]


def tangent_identity_defect(man: Manifold, count: int, seed: int,
                            h: float = 1e-4, radius=None) -> DefectReport:
    """max_j |Dpsi(x) t_j - t_j|_2 over tangent frame vectors, by central
    differences: the retraction's derivative restricted to T_x is the
    identity."""
    pts = man.sample(count, seed, "tangent-identity", radius=radius)
    worst = -1.0
    wit = None
    for x in pts:
        E = man.tangent_frame(x)
        for t in E:
            fd = (man.retract(x + h * t) - man.retract(x - h * t)) / (2.0 * h)
            d = float(np.linalg.norm(fd - t))
            if d > worst:
                worst, wit = d, (tuple(map(float, x)), tuple(map(float, t)))
    return DefectReport(value=worst, pairs=len(pts), witness=wit)


def tangent_flatness_defect(man: Manifold, radius, delta: float, count: int,
                            seed: int) -> DefectReport:
    """max |y - x - P_x(y - x)|_2 / |y - x|_2 over sampled close pairs."""
    x, y = _near_pairs(man, radius, delta, count, seed, "flatness")
    worst = -1.0
    wit = None
    for xi, yi in zip(x, y):
        diff = yi - xi
        res = diff - man.project_tangent(xi, diff)
        r = float(np.linalg.norm(res) / np.linalg.norm(diff))
        if r > worst:
            worst, wit = r, (tuple(map(float, xi)), tuple(map(float, yi)))
    return DefectReport(value=worst, pairs=len(x), witness=wit)


def translation_defect(man: Manifold, radius, pair_delta: float,
                       z_delta: float, count: int, seed: int) -> DefectReport:
    """max |psi(x+z) - psi(y+z) - (x-y)|_2 / |x-y|_2 over sampled pairs and
    offsets |z|_2 <= z_delta.  Requires z_delta <= 0.95 * tube_radius() so
    the shifted points stay strictly inside the retraction tube."""
    if z_delta > 0.95 * man.tube_radius() + 1e-12:
        raise DomainError(
            f"offset radius {z_delta} exceeds the tube safety bound "
            f"{0.95 * man.tube_radius()}")
    x, y = _near_pairs(man, radius, pair_delta, count, seed, "translation")
    g = generator(seed, "translation", "offsets")
    z = g.standard_normal((len(x), man.ambient))
    z = _unit(z) * (g.uniform(0.0, 1.0, (len(x), 1)) * z_delta)
    num = np.linalg.norm(man.retract(x + z) - man.retract(y + z) - (x - y), axis=1)
    den = np.linalg.norm(x - y, axis=1)
    r = num / den
    i = int(np.argmax(r))
    return DefectReport(value=float(r[i]), pairs=len(x),
                        witness=(tuple(map(float, x[i])), tuple(map(float, y[i])),
                                 tuple(map(float, z[i]))))


def tube_sample(man: Manifold, radius, thickness: float, count: int,
                seed: int, *tags) -> np.ndarray:
    """Points in the tube {dist(q, M) <= thickness} within B_(radius)."""
    base = man.sample(count, seed, "tube", *tags, radius=radius)
    g = generator(seed, "tube-offsets", *tags)
    if hasattr(man, "normals"):
        n = man.normals(base)
        t = g.uniform(-thickness, thickness, (len(base), 1))
        q = base + t * n
    else:
        # general codimension: random offsets rejected against the tube
        off = g.standard_normal((len(base), man.ambient))
        off = _unit(off) * g.uniform(0, thickness, (len(base), 1))
        q = base + off
        q = q[np.linalg.norm(q - man.retract(q), axis=1) <= thickness]
    if radius is not None:
        q = q[np.linalg.norm(q, axis=1) <= radius]
    if len(q) == 0:
        raise DomainError("tube sampling produced no admissible points")
    return q


def make_manifold(cfg: dict) -> Manifold:
    kind = cfg.get("kind")
    basepoint = cfg.get("basepoint", "auto")
    if kind == "circle":
        return Circle(float(cfg["radius"]), basepoint)
    if kind == "sphere":
        return Sphere(float(cfg["radius"]), basepoint)
    if kind == "torus":
        return Torus(float(cfg["R"]), float(cfg["r"]), basepoint)
    if kind == "normsphere":
        return NormSphere(int(cfg.get("dim", 3)), basepoint)
    if kind == "graph":
        name = cfg.get("name", "line")
        box = np.asarray(cfg["box"], dtype=float)
        fn = _named_graph(name)
        return GraphOfFunction(fn, box, codim=int(cfg.get("codim", 1)),
                               basepoint=basepoint, name=name)
    raise ValueError(f"unknown manifold kind {kind!r}")


def _named_graph(name: str) -> Callable:
    """Config-addressable graph functions (closures cannot go in TOML)."""
    if name == "line":
        return lambda u: np.zeros((len(np.atleast_2d(u)), 1))
    if name == "plane":
        return lambda u: np.zeros((len(np.atleast_2d(u)), 1))
    if name == "sine":
        return lambda u: 0.3 * np.sin(np.atleast_2d(u)).sum(axis=1, keepdims=True)
    if name == "saddle":
        u2 = np.atleast_2d
        return lambda u: 0.25 * (u2(u)[:, :1] ** 2 - u2(u)[:, 1:2] ** 2)
    raise ValueError(f"unknown graph function {name!r}")
