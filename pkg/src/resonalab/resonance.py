"""Resonance sets, their neighbourhoods, lattice shifts and intersections.

For a characteristic phase ``(omega, k)`` and branches ``(i, j)`` the
resonance set is the zero set of

    phase_ij(xi) = lambda_i(xi + k) - lambda_j(xi) - omega.

Sets are stored as point clouds together with the system, so every point can
be re-evaluated through :func:`resonance_phase`.  A stored ``shift`` of ``m``
means the cloud represents ``R_ij + m k``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .symbol import SystemSpec, bilinear_apply, branch_values, canonical_gauge, symbol_at

__all__ = [
    "AdmissibilityReport",
    "NotCharacteristicError",
    "PhasePair",
    "PolarizationError",
    "ResonanceSet",
    "characteristic_phase",
    "default_box",
    "intersect_shifted",
    "locate_resonance_set",
    "neighborhood_membership",
    "phase_admissibility",
    "resonance_phase",
]


class NotCharacteristicError(ValueError):
    """``omega`` is not an eigenvalue of the symbol at ``k``."""


class PolarizationError(ValueError):
    """The characteristic kernel at ``k`` is not one-dimensional."""


@dataclass(frozen=True, eq=False)
class PhasePair:
    """A characteristic phase ``(omega, k)`` with its unit polarization ``e1``.

    ``e1`` spans the kernel of ``H(k) - omega``; ``B(e_{-1})`` uses its
    complex conjugate.  Build instances with :func:`characteristic_phase`.
    """

    omega: float
    k: np.ndarray
    e1: np.ndarray | None = field(default=None, repr=False)
    branch: int | None = None

    @property
    def e_minus(self) -> np.ndarray:
        return np.conj(self.polarization)

    @property
    def polarization(self) -> np.ndarray:
        if self.e1 is None:
            raise PolarizationError("characteristic kernel is not one-dimensional")
        return self.e1

    def as_dict(self) -> dict[str, Any]:
        return {"omega": self.omega, "k": self.k.tolist(), "branch": self.branch}


def characteristic_phase(
    spec: SystemSpec,
    k,
    omega: float | None = None,
    branch: int = 1,
    tol: float = 1e-10,
) -> PhasePair:
    """Validate ``(omega, k)`` against the dispersion relation.

    With ``omega=None`` the frequency of branch ``branch`` at ``k`` is used.
    Raises :class:`NotCharacteristicError` when no branch matches within
    ``tol``.  The polarization is left unset (``e1=None``) when the kernel is
    degenerate; coefficient evaluations then raise :class:`PolarizationError`.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    if k.shape != (spec.d,):
        raise ValueError(f"k must have length {spec.d}")
    lam = branch_values(spec, k[None])[0]
    if omega is None:
        omega = float(lam[branch - 1])
    hits = np.flatnonzero(np.abs(lam - omega) <= tol)
    if hits.size == 0:
        raise NotCharacteristicError(
            f"omega={omega} is not a branch value at k={k.tolist()} (values {lam.tolist()})"
        )
    w, V = np.linalg.eigh(symbol_at(spec, k))
    kernel = np.flatnonzero(np.abs(w - omega) <= max(1e-8, tol))
    e1 = canonical_gauge(V[:, kernel[0]]) if kernel.size == 1 else None
    k.setflags(write=False)
    return PhasePair(omega=float(omega), k=k, e1=e1, branch=int(hits[0]) + 1)


def _phase_batch(spec, i, j, beta: PhasePair, xis: np.ndarray, shift: int = 0) -> np.ndarray:
    xis = np.asarray(xis, dtype=float).reshape(-1, spec.d)
    base = xis - shift * beta.k
    li = branch_values(spec, base + beta.k)[:, i - 1]
    lj = branch_values(spec, base)[:, j - 1]
    return li - lj - beta.omega


def resonance_phase(spec: SystemSpec, i: int, j: int, beta: PhasePair, xi, shift: int = 0):
    """``lambda_i(xi - m k + k) - lambda_j(xi - m k) - omega`` with ``m = shift``.

    Accepts a single d-vector (returns a float) or an ``(n, d)`` batch.
    """
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim <= 1 and xi.size == spec.d
    out = _phase_batch(spec, i, j, beta, xi, shift)
    return float(out[0]) if single else out


def default_box(spec: SystemSpec, beta: PhasePair) -> np.ndarray:
    """Bounding box ``|xi_a| <= 4 (|k| + |omega| + |A0|)`` per coordinate."""
    half = 4.0 * (np.linalg.norm(beta.k) + abs(beta.omega) + np.linalg.norm(spec.A0, 2))
    return np.tile([-half, half], (spec.d, 1))


def _as_box(spec: SystemSpec, beta: PhasePair, box) -> np.ndarray:
    if box is None:
        return default_box(spec, beta)
    box = np.asarray(box, dtype=float)
    if box.ndim == 0:
        return np.tile([-float(box), float(box)], (spec.d, 1))
    if box.shape == (2,):
        return np.tile(box, (spec.d, 1))
    if box.shape != (spec.d, 2):
        raise ValueError(f"box must be a half-width, a pair, or shape ({spec.d}, 2)")
    return box


def _default_grid(d: int) -> int:
    return 64 if d <= 2 else 24


@dataclass(frozen=True, eq=False)
class ResonanceSet:
    """Sampled resonance set ``R_ij + shift k``."""

    spec: SystemSpec = field(repr=False)
    pair: tuple[int, int]
    beta: PhasePair = field(repr=False)
    points: np.ndarray
    shift: int
    tol: float
    box: np.ndarray
    spacing: float = 0.0

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def empty(self) -> bool:
        return self.points.shape[0] == 0

    def phase(self, xi) -> np.ndarray:
        i, j = self.pair
        return resonance_phase(self.spec, i, j, self.beta, xi, shift=self.shift)

    def shifted(self, m: int) -> "ResonanceSet":
        """The same set translated by ``m k``."""
        return ResonanceSet(
            spec=self.spec,
            pair=self.pair,
            beta=self.beta,
            points=self.points + m * self.beta.k,
            shift=self.shift + m,
            tol=self.tol,
            box=self.box + m * self.beta.k[:, None],
            spacing=self.spacing,
        )

    def with_points(self, points: np.ndarray) -> "ResonanceSet":
        points = np.asarray(points, dtype=float).reshape(-1, self.spec.d)
        return ResonanceSet(
            self.spec, self.pair, self.beta, points, self.shift, self.tol, self.box, self.spacing
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "pair": list(self.pair),
            "shift": self.shift,
            "points": self.points.tolist(),
            "tol": self.tol,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"xi{a + 1}" for a in range(self.spec.d)] + ["phase_residual"])
        residuals = self.phase(self.points) if len(self) else np.zeros(0)
        for p, r in zip(self.points, np.atleast_1d(residuals)):
            writer.writerow([format(x, ".17g") for x in p] + [format(float(r), ".17g")])
        return buf.getvalue()


def _sort_points(points: np.ndarray) -> np.ndarray:
    if points.shape[0] == 0:
        return points
    # round before ordering so that root-finding noise does not reorder points
    order = np.lexsort(np.round(points, 8).T[::-1])
    return points[order]


def _dedupe(points: np.ndarray, radius: float) -> np.ndarray:
    if points.shape[0] <= 1:
        return points
    drop = set()
    for a, b in sorted(cKDTree(points).query_pairs(radius)):
        if a not in drop:
            drop.add(b)
    keep = [n for n in range(points.shape[0]) if n not in drop]
    return points[keep]


def locate_resonance_set(
    spec: SystemSpec,
    i: int,
    j: int,
    beta: PhasePair,
    box=None,
    grid_n: int | None = None,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> ResonanceSet:
    """Sample ``R_ij`` inside ``box``.

    The phase is evaluated on a ``grid_n^d`` lattice; every lattice edge whose
    endpoints carry opposite signs is bisected to ``|phase| <= tol``.  Edges
    where the phase jumps instead of crossing zero are discarded.  Points are
    sorted lexicographically.
    """
    box = _as_box(spec, beta, box)
    n = grid_n or _default_grid(spec.d)
    axes = [np.linspace(lo, hi, n) for lo, hi in box]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    phase = _phase_batch(spec, i, j, beta, mesh.reshape(-1, spec.d)).reshape(mesh.shape[:-1])
    spacing = float(max((hi - lo) / (n - 1) for lo, hi in box))

    exact = mesh[np.abs(phase) <= tol].reshape(-1, spec.d)
    lo_pts, hi_pts = [], []
    for a in range(spec.d):
        s0 = [slice(None)] * spec.d
        s1 = [slice(None)] * spec.d
        s0[a] = slice(0, -1)
        s1[a] = slice(1, None)
        p0, p1 = phase[tuple(s0)], phase[tuple(s1)]
        flip = (np.sign(p0) * np.sign(p1) < 0) & (np.abs(p0) > tol) & (np.abs(p1) > tol)
        lo_pts.append(mesh[tuple(s0)][flip])
        hi_pts.append(mesh[tuple(s1)][flip])
    a_pts = np.concatenate(lo_pts) if lo_pts else np.zeros((0, spec.d))
    b_pts = np.concatenate(hi_pts) if hi_pts else np.zeros((0, spec.d))

    found = [exact]
    if a_pts.shape[0]:
        fa = _phase_batch(spec, i, j, beta, a_pts)
        for _ in range(max_iter):
            mid = 0.5 * (a_pts + b_pts)
            fm = _phase_batch(spec, i, j, beta, mid)
            left = np.sign(fm) == np.sign(fa)
            a_pts = np.where(left[:, None], mid, a_pts)
            fa = np.where(left, fm, fa)
            b_pts = np.where(left[:, None], b_pts, mid)
            if np.all(np.abs(fm) <= tol) or np.max(np.abs(a_pts - b_pts)) < 1e-15:
                break
        found.append(mid[np.abs(fm) <= tol])
    points = np.concatenate(found)
    points = _sort_points(_dedupe(_sort_points(points), 1e-12))
    return ResonanceSet(spec, (i, j), beta, points, 0, tol, box, spacing)


def neighborhood_membership(spec: SystemSpec, i: int, j: int, beta: PhasePair, h: float, xi) -> bool:
    """Whether ``|lambda_i(xi + k) - lambda_j(xi) - omega| <= h``."""
    return bool(abs(resonance_phase(spec, i, j, beta, xi)) <= h)


def _gauss_newton(funcs, x0: np.ndarray, tol: float, max_iter: int = 60, fd: float = 1e-7):
    x = x0.astype(float).copy()

    def F(y):
        return np.array([f(y) for f in funcs])

    fx = F(x)
    for _ in range(max_iter):
        if np.max(np.abs(fx)) <= tol:
            return x, fx
        Jm = np.empty((len(funcs), x.size))
        for a in range(x.size):
            e = np.zeros_like(x)
            e[a] = fd
            Jm[:, a] = (F(x + e) - F(x - e)) / (2 * fd)
        step = np.linalg.lstsq(Jm, -fx, rcond=None)[0]
        t = 1.0
        while t > 1e-4:
            trial = x + t * step
            ft = F(trial)
            if np.linalg.norm(ft) < np.linalg.norm(fx):
                x, fx = trial, ft
                break
            t *= 0.5
        else:
            return x, fx
    return x, fx


def intersect_shifted(
    setA: ResonanceSet,
    shiftA: int,
    setB: ResonanceSet,
    shiftB: int,
    setC: ResonanceSet | None = None,
    shiftC: int = 0,
    tol: float = 1e-8,
    seed_radius: float | None = None,
) -> np.ndarray:
    """Common points of ``setA + shiftA k``, ``setB + shiftB k`` (and ``setC``).

    Seeds are proximity pairs (or triples) of the shifted point clouds; each
    seed is refined by damped Gauss-Newton on the vector of shifted phases and
    kept if every residual is at most ``tol``.  Returns an ``(n, d)`` array
    sorted lexicographically; empty when nothing converges.
    """
    sets = [(setA, shiftA), (setB, shiftB)] + ([(setC, shiftC)] if setC is not None else [])
    spec = setA.spec
    d = spec.d
    for s, _ in sets[1:]:
        if s.spec is not spec or s.beta is not setA.beta:
            raise ValueError("sets must share the system and the phase")
    if any(s.empty for s, _ in sets):
        return np.zeros((0, d))
    clouds = [s.points + m * s.beta.k for s, m in sets]
    spacing = max(s.spacing for s, _ in sets)
    radius = seed_radius if seed_radius is not None else 2.0 * max(spacing, 1e-6) * np.sqrt(d)

    trees = [cKDTree(c) for c in clouds[1:]]
    seeds = []
    for p in clouds[0]:
        near = []
        for tree, cloud in zip(trees, clouds[1:]):
            dist, idx = tree.query(p)
            if dist > radius:
                break
            near.append(cloud[idx])
        else:
            seeds.append(np.mean([p] + near, axis=0))
    if not seeds:
        return np.zeros((0, d))
    seeds = _dedupe(np.array(seeds), 0.25 * radius)

    funcs = []
    for s, m in sets:
        i, j = s.pair
        total = s.shift + m
        funcs.append(
            lambda y, i=i, j=j, total=total: float(
                _phase_batch(spec, i, j, s.beta, y[None], total)[0]
            )
        )
    roots = []
    for seed in seeds:
        x, fx = _gauss_newton(funcs, seed, tol)
        if np.max(np.abs(fx)) <= tol:
            roots.append(x)
    if not roots:
        return np.zeros((0, d))
    return _sort_points(_dedupe(np.array(roots), 1e-6))


@dataclass
class AdmissibilityReport:
    """Harmonic and auto-resonance conditions on the phase."""

    conditions: dict[str, bool]
    details: dict[str, Any]

    @property
    def ok(self) -> bool:
        return all(self.conditions.values())

    def as_dict(self) -> dict[str, Any]:
        return {"conditions": dict(self.conditions), "details": self.details, "ok": self.ok}


def phase_admissibility(
    spec: SystemSpec,
    beta: PhasePair,
    fast: Sequence[int] | None = None,
    slow: Sequence[int] | None = None,
    box=None,
    p_max: int = 4,
    grid_n: int | None = None,
    harmonic_tol: float = 1e-9,
    auto_floor: float = 1e-6,
) -> AdmissibilityReport:
    """Check the harmonic conditions on ``(omega, k)``.

    (a) ``p^2 omega^2 = lambda_b(p k)^2`` for fast branches only when
    ``|p| = 1``; (b) no slow branch satisfies it for ``1 <= |p| <= p_max``;
    (c) no auto-resonance ``lambda_b(xi + k) = lambda_b(xi) +- omega`` on the
    box for any listed branch.

    By default the fast branches are those with ``|lambda_b(k)| = |omega|``
    and the slow branches are the remaining ones that are not identically
    zero on the grid.
    """
    J = branch_values(spec, beta.k[None]).shape[1]
    lam_k = branch_values(spec, beta.k[None])[0]
    box = _as_box(spec, beta, box)
    n = grid_n or _default_grid(spec.d)
    axes = [np.linspace(lo, hi, n) for lo, hi in box]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, spec.d)
    if fast is None:
        fast = [b + 1 for b in range(J) if abs(abs(lam_k[b]) - abs(beta.omega)) <= harmonic_tol]
    if slow is None:
        vals = branch_values(spec, grid)
        slow = [
            b + 1
            for b in range(J)
            if (b + 1) not in fast and np.max(np.abs(vals[:, b])) > harmonic_tol
        ]
    ps = [p for p in range(-p_max, p_max + 1) if p != 0]
    fast_hits, slow_hits = [], []
    for p in ps:
        lam_p = branch_values(spec, (p * beta.k)[None])[0]
        target = (p * beta.omega) ** 2
        scale = max(1.0, target)
        for b in fast:
            if abs(lam_p[b - 1] ** 2 - target) <= harmonic_tol * scale:
                fast_hits.append((p, b))
        for b in slow:
            if abs(lam_p[b - 1] ** 2 - target) <= harmonic_tol * scale:
                slow_hits.append((p, b))
    cond_a = bool(fast) and all(abs(p) == 1 for p, _ in fast_hits) and any(
        abs(p) == 1 for p, _ in fast_hits
    )
    cond_b = not slow_hits

    auto_min = np.inf
    auto_cross = []
    for b in list(fast) + list(slow):
        lb_shift = branch_values(spec, grid + beta.k)[:, b - 1]
        lb = branch_values(spec, grid)[:, b - 1]
        for sign in (+1, -1):
            ph = (lb_shift - lb - sign * beta.omega).reshape([n] * spec.d)
            auto_min = min(auto_min, float(np.min(np.abs(ph))))
            for a in range(spec.d):
                s0 = [slice(None)] * spec.d
                s1 = [slice(None)] * spec.d
                s0[a] = slice(0, -1)
                s1[a] = slice(1, None)
                if np.any(np.sign(ph[tuple(s0)]) * np.sign(ph[tuple(s1)]) < 0):
                    auto_cross.append((b, sign))
                    break
    cond_c = auto_min > auto_floor and not auto_cross
    return AdmissibilityReport(
        conditions={
            "fast_harmonics_only_first": bool(cond_a),
            "no_slow_harmonic": bool(cond_b),
            "no_auto_resonance": bool(cond_c),
        },
        details={
            "fast": list(fast),
            "slow": list(slow),
            "p_max": p_max,
            "fast_hits": [list(h) for h in fast_hits],
            "slow_hits": [list(h) for h in slow_hits],
            "auto_resonance_min_phase": auto_min,
            "auto_resonance_crossings": [list(c) for c in auto_cross],
        },
    )


def polarization_matrices(spec: SystemSpec, beta: PhasePair) -> tuple[np.ndarray, np.ndarray]:
    """Matrices of ``B(e_1)`` and ``B(e_{-1})``."""
    e1 = beta.polarization
    return (
        bilinear_apply(spec, e1, mode="directional"),
        bilinear_apply(spec, np.conj(e1), mode="directional"),
    )
