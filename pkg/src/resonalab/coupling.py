"""Interaction coefficients, transparency, the trace invariant and the stability index.

For a resonant pair ``(i, j)`` the two interaction coefficients are

    b_ij^+ (xi) = g   Pi_i(xi + k) B(e_1)  Pi_j(xi)
    b_ji^- (xi) = g*  Pi_j(xi)     B(e_-1) Pi_i(xi + k)

where ``B(u) v = B(u, v) + B(v, u)``.  Their product has the trace invariant
``Gamma_ij(xi) = tr Pi_i(xi+k) B(e_1) Pi_j(xi) B(e_-1) Pi_i(xi+k)``, whose
principal square root gives the growth rate of the resonant 2x2 flow.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ._parallel import pmap
from .resonance import (
    PhasePair,
    ResonanceSet,
    _phase_batch,
    intersect_shifted,
    locate_resonance_set,
    polarization_matrices,
)
from .symbol import SystemSpec, branch_values, spectral_decompose

__all__ = [
    "CouplingRecord",
    "SeparationReport",
    "StabilityVerdict",
    "TransparencyVerdict",
    "classify_resonances",
    "coefficient_name",
    "coupling_scalars",
    "gamma_trace",
    "interaction_coefficient",
    "principal_sqrt",
    "separation_check",
    "transparency_test",
]

IM_THRESHOLD = 1e-9
RE_THRESHOLD = 1e-12
ON_SET_TRANSPARENT = 1e-8
ON_SET_NONTRANSPARENT = 1e-6
ZERO_NORM = 1e-12


def coefficient_name(pair: tuple[int, int], direction: str) -> str:
    """``b{i}{j}+`` for the plus coefficient of ``(i, j)``, ``b{j}{i}-`` for minus."""
    i, j = pair
    sep = "," if max(i, j) >= 10 else ""
    if direction == "+":
        return f"b{i}{sep}{j}+"
    return f"b{j}{sep}{i}-"


def _check_direction(direction: str) -> None:
    if direction not in ("+", "-"):
        raise ValueError(f"direction must be '+' or '-', got {direction!r}")


def interaction_coefficient(
    spec: SystemSpec,
    i: int,
    j: int,
    beta: PhasePair,
    xi,
    direction: str = "+",
    g: complex = 1.0,
) -> np.ndarray:
    """The ``N x N`` interaction coefficient of pair ``(i, j)`` at ``xi``."""
    _check_direction(direction)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    Be1, Bem1 = polarization_matrices(spec, beta)
    here = spectral_decompose(spec, xi)
    there = spectral_decompose(spec, xi + beta.k)
    Pi_k = there.projector(i)
    Pj = here.projector(j)
    if direction == "+":
        return g * (Pi_k @ Be1 @ Pj)
    return np.conj(g) * (Pj @ Bem1 @ Pi_k)


def gamma_trace(spec: SystemSpec, i: int, j: int, beta: PhasePair, xi) -> complex:
    """``tr Pi_i(xi+k) B(e_1) Pi_j(xi) B(e_-1) Pi_i(xi+k)`` with unit amplitude."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    Be1, Bem1 = polarization_matrices(spec, beta)
    Pi_k = spectral_decompose(spec, xi + beta.k).projector(i)
    Pj = spectral_decompose(spec, xi).projector(j)
    return complex(np.trace(Pi_k @ Be1 @ Pj @ Bem1 @ Pi_k))


def coupling_scalars(spec: SystemSpec, i: int, j: int, beta: PhasePair, xi) -> tuple[complex, complex]:
    """Rank-one couplings ``(Omega_i(xi+k), B(e_1) Omega_j(xi))`` and
    ``(Omega_j(xi), B(e_-1) Omega_i(xi+k))`` for simple branches.

    The inner product is conjugate-linear in its first argument.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    Be1, Bem1 = polarization_matrices(spec, beta)
    wi = spectral_decompose(spec, xi + beta.k).vector(i)
    wj = spectral_decompose(spec, xi).vector(j)
    return complex(wi.conj() @ Be1 @ wj), complex(wj.conj() @ Bem1 @ wi)


def principal_sqrt(z) -> np.ndarray:
    """Square root with nonnegative real part (numpy's principal branch)."""
    return np.sqrt(np.asarray(z, dtype=complex))


@dataclass(frozen=True)
class TransparencyVerdict:
    """Outcome of the annulus ratio test for one coefficient direction.

    ``kind`` is one of ``transparent``, ``identically-zero``,
    ``non-transparent``, ``inconclusive`` or ``empty``.
    """

    kind: str
    constant: float
    on_set_norm: float
    max_norm: float
    n_set: int
    n_ring: int

    @property
    def transparent(self) -> bool:
        return self.kind in ("transparent", "identically-zero")

    def as_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "constant": self.constant,
            "on_set_norm": self.on_set_norm,
            "max_norm": self.max_norm,
            "n_set": self.n_set,
            "n_ring": self.n_ring,
        }


def _subsample(points: np.ndarray, n: int) -> np.ndarray:
    if points.shape[0] <= n:
        return points
    idx = np.unique(np.linspace(0, points.shape[0] - 1, n).round().astype(int))
    return points[idx]


def _ring_points(spec, pair, beta, base: np.ndarray, h: float, n_levels: int = 4, fd: float = 1e-6):
    """Points with ``h/10 <= |phase| <= h`` obtained by stepping along the phase gradient."""
    i, j = pair
    out = []
    levels = np.geomspace(h / 10.0, h, n_levels)
    for p in base:
        grad = np.empty(spec.d)
        for a in range(spec.d):
            e = np.zeros(spec.d)
            e[a] = fd
            grad[a] = (
                _phase_batch(spec, i, j, beta, (p + e)[None])[0]
                - _phase_batch(spec, i, j, beta, (p - e)[None])[0]
            ) / (2 * fd)
        g2 = grad @ grad
        if g2 < 1e-24:
            continue
        targets = np.concatenate([levels, -levels])
        base_phase = _phase_batch(spec, i, j, beta, p[None])[0]
        # march along the gradient line and correct so each point sits on its level
        t = (targets - base_phase) / g2
        for _ in range(8):
            pts = p[None] + t[:, None] * grad[None]
            ph = _phase_batch(spec, i, j, beta, pts)
            t = t - (ph - targets) / g2
        out.extend(p[None] + t[:, None] * grad[None])
    if not out:
        return np.zeros((0, spec.d)), np.zeros(0)
    pts = np.array(out)
    ph = _phase_batch(spec, i, j, beta, pts)
    keep = (np.abs(ph) >= h / 10.0 * (1 - 1e-9)) & (np.abs(ph) <= h * (1 + 1e-9))
    return pts[keep], ph[keep]


def _verdict(on_set: np.ndarray, ring_norms: np.ndarray, ring_phase: np.ndarray, C_cap: float):
    on_max = float(on_set.max()) if on_set.size else 0.0
    ring_max = float(ring_norms.max()) if ring_norms.size else 0.0
    all_max = max(on_max, ring_max)
    ratio = float(np.max(ring_norms / np.abs(ring_phase))) if ring_norms.size else 0.0
    if all_max <= ZERO_NORM:
        kind = "identically-zero"
    elif on_max > ON_SET_NONTRANSPARENT:
        kind = "non-transparent"
    elif on_max <= ON_SET_TRANSPARENT and ratio <= C_cap:
        kind = "transparent"
    else:
        kind = "inconclusive"
    return TransparencyVerdict(kind, ratio, on_max, all_max, int(on_set.size), int(ring_norms.size))


def transparency_test(
    spec: SystemSpec,
    i: int,
    j: int,
    beta: PhasePair,
    rset: ResonanceSet,
    ring_h: float = 0.05,
    n_samples: int = 64,
    C_cap: float = 1e3,
    directions: Sequence[str] = ("+", "-"),
) -> dict[str, TransparencyVerdict]:
    """Decide transparency of both coefficients of ``(i, j)`` near ``rset``.

    Coefficients are sampled on (up to ``n_samples``) set points and on an
    annulus ``ring_h/10 <= |phase| <= ring_h`` around them.  A coefficient is
    transparent when it vanishes on the set and ``|b| / |phase|`` stays below
    ``C_cap`` on the annulus.
    """
    if tuple(rset.pair) != (i, j):
        raise ValueError(f"set is for pair {rset.pair}, not {(i, j)}")
    if rset.empty:
        empty = TransparencyVerdict("empty", 0.0, 0.0, 0.0, 0, 0)
        return {dr: empty for dr in directions}
    base = _subsample(rset.points - rset.shift * beta.k, n_samples)
    ring, ring_phase = _ring_points(spec, (i, j), beta, base, ring_h)
    out = {}
    for dr in directions:
        _check_direction(dr)
        on = np.array(
            [np.linalg.norm(interaction_coefficient(spec, i, j, beta, p, dr), 2) for p in base]
        )
        rn = np.array(
            [np.linalg.norm(interaction_coefficient(spec, i, j, beta, p, dr), 2) for p in ring]
        )
        out[dr] = _verdict(on, rn, ring_phase, C_cap)
    return out


@dataclass
class CouplingRecord:
    """Sampled coefficient data for one resonant pair."""

    pair: tuple[int, int]
    samples: list[dict[str, Any]]
    transparency_plus: TransparencyVerdict
    transparency_minus: TransparencyVerdict
    amplitude: float
    rank_one: bool

    @property
    def nontransparent(self) -> bool:
        return not (self.transparency_plus.transparent and self.transparency_minus.transparent)


@dataclass
class StabilityVerdict:
    """Classification of all branch pairs for one phase.

    ``gamma_pair`` holds the amplitude-free rate ``max Re sqrt(Gamma_ij)`` over
    ``R_ij``; ``gamma_plus_per_pair`` the amplitude-weighted rate over the
    ``h``-neighbourhood.  ``gamma_index`` is ``+1``, ``-1`` or ``0`` (marginal).
    """

    resonant: list[tuple[int, int]]
    Re0: list[tuple[int, int]]
    sets: dict[tuple[int, int], ResonanceSet] = field(repr=False)
    records: dict[tuple[int, int], CouplingRecord] = field(repr=False)
    gamma_index: int
    gamma_pair: dict[tuple[int, int], float]
    gamma_plus_per_pair: dict[tuple[int, int], float]
    gamma_plus: float
    argmax_pair: tuple[int, int] | None
    argmax_xi: np.ndarray | None
    max_re_gamma: float
    max_abs_im_gamma: float
    amplitude: float
    h: float

    @property
    def index_label(self) -> str:
        return {1: "+1", -1: "-1", 0: "marginal"}[self.gamma_index]

    def transparency(self, pair: tuple[int, int]) -> dict[str, TransparencyVerdict]:
        rec = self.records[pair]
        return {"+": rec.transparency_plus, "-": rec.transparency_minus}

    def to_dict(self) -> dict[str, Any]:
        def key(p):
            return f"{p[0]},{p[1]}"

        return {
            "resonant": [list(p) for p in self.resonant],
            "Re0": [list(p) for p in self.Re0],
            "gamma_index": self.index_label,
            "gamma_plus": self.gamma_plus,
            "gamma_plus_per_pair": {key(p): v for p, v in self.gamma_plus_per_pair.items()},
            "gamma_pair": {key(p): v for p, v in self.gamma_pair.items()},
            "argmax_pair": list(self.argmax_pair) if self.argmax_pair else None,
            "argmax_xi": self.argmax_xi.tolist() if self.argmax_xi is not None else None,
            "max_re_gamma": self.max_re_gamma,
            "max_abs_im_gamma": self.max_abs_im_gamma,
            "amplitude": self.amplitude,
            "h": self.h,
            "transparency": {
                key(p): {
                    "+": r.transparency_plus.as_dict(),
                    "-": r.transparency_minus.as_dict(),
                    "rank_one": r.rank_one,
                }
                for p, r in self.records.items()
            },
            "gamma_samples": {
                key(p): [
                    {"xi": s["xi"].tolist(), "re": s["gamma"].real, "im": s["gamma"].imag}
                    for s in r.samples
                ]
                for p, r in self.records.items()
            },
        }


def _analyse_pair(spec, beta, rset, amplitude, h, ring_h, n_samples, C_cap):
    i, j = rset.pair
    verdicts = transparency_test(spec, i, j, beta, rset, ring_h, n_samples, C_cap)
    base = rset.points
    samples = []
    rank_one = True
    for p in base:
        bp = interaction_coefficient(spec, i, j, beta, p, "+", amplitude)
        bm = interaction_coefficient(spec, i, j, beta, p, "-", amplitude)
        for b in (bp, bm):
            sv = np.linalg.svd(b, compute_uv=False)
            if sv[0] > ZERO_NORM and sv[1] > 1e-8 * sv[0]:
                rank_one = False
        samples.append(
            {
                "xi": p,
                "b_plus": bp,
                "b_minus": bm,
                "gamma": gamma_trace(spec, i, j, beta, p),
                "phase": float(rset.phase(p)),
            }
        )
    ring, _ = _ring_points(spec, (i, j), beta, _subsample(base, n_samples), h)
    nbhd = [gamma_trace(spec, i, j, beta, p) for p in ring]
    record = CouplingRecord(
        pair=(i, j),
        samples=samples,
        transparency_plus=verdicts["+"],
        transparency_minus=verdicts["-"],
        amplitude=amplitude,
        rank_one=rank_one,
    )
    return record, np.array(nbhd, dtype=complex)


def classify_resonances(
    spec: SystemSpec,
    beta: PhasePair,
    box=None,
    amplitude: float = 1.0,
    h: float = 0.05,
    grid_n: int | None = None,
    tol: float = 1e-10,
    ring_h: float | None = None,
    n_samples: int = 64,
    C_cap: float = 1e3,
    pairs: Sequence[tuple[int, int]] | None = None,
    workers: int | None = None,
) -> StabilityVerdict:
    """Locate every resonance set and classify the pairs.

    The trace invariant is sampled on each set and on the ``h``-neighbourhood
    (points with ``|phase| <= h`` reached from the set along the phase
    gradient).  The stability index uses the samples on the sets themselves.
    """
    J = branch_values(spec, beta.k[None]).shape[1]
    if pairs is None:
        pairs = [(i, j) for i in range(1, J + 1) for j in range(1, J + 1)]
    pairs = [tuple(p) for p in pairs]
    located = pmap(
        lambda p: locate_resonance_set(spec, p[0], p[1], beta, box, grid_n, tol), pairs, workers
    )
    sets = {p: s for p, s in zip(pairs, located) if not s.empty}
    resonant = sorted(sets)
    ring_h = h if ring_h is None else ring_h
    analysed = pmap(
        lambda p: _analyse_pair(spec, beta, sets[p], amplitude, h, ring_h, n_samples, C_cap),
        resonant,
        workers,
    )
    records = {p: a[0] for p, a in zip(resonant, analysed)}
    nbhd = {p: a[1] for p, a in zip(resonant, analysed)}
    Re0 = [p for p in resonant if records[p].nontransparent]

    gamma_pair, gamma_plus_pp = {}, {}
    best_val, best_pair, best_xi = -np.inf, None, None
    max_re, max_im = -np.inf, 0.0
    for p in Re0:
        on = np.array([s["gamma"] for s in records[p].samples])
        roots = principal_sqrt(on).real
        gamma_pair[p] = float(roots.max())
        both = np.concatenate([on, nbhd[p]])
        gamma_plus_pp[p] = float(amplitude * abs(principal_sqrt(both).real.max()))
        max_re = max(max_re, float(on.real.max()))
        max_im = max(max_im, float(np.abs(on.imag).max()))
        n = int(np.argmax(roots))
        val = amplitude * roots[n]
        if best_pair is None or val > best_val * (1 + 1e-8) + 1e-300:
            best_val, best_pair, best_xi = val, p, records[p].samples[n]["xi"]
    if not Re0:
        index, gamma_plus, max_re = 0, 0.0, 0.0
    else:
        gamma_plus = max(gamma_plus_pp.values())
        if max_re > RE_THRESHOLD or max_im > IM_THRESHOLD:
            index = 1
        elif max_re < -RE_THRESHOLD:
            index = -1
        else:
            index = 0
    return StabilityVerdict(
        resonant=resonant,
        Re0=Re0,
        sets=sets,
        records=records,
        gamma_index=index,
        gamma_pair=gamma_pair,
        gamma_plus_per_pair=gamma_plus_pp,
        gamma_plus=float(gamma_plus),
        argmax_pair=best_pair,
        argmax_xi=None if best_xi is None else np.array(best_xi),
        max_re_gamma=float(max_re),
        max_abs_im_gamma=float(max_im),
        amplitude=amplitude,
        h=h,
    )


# --------------------------------------------------------------------------
# separation conditions


@dataclass
class SeparationReport:
    """Which separation regime covers each coupled pattern in ``Re0``."""

    entries: list[dict[str, Any]]
    reasonable: dict[str, Any]

    @property
    def ok(self) -> bool:
        return all(e["supported"] for e in self.entries)

    def entry(self, *pairs: tuple[int, int]) -> dict[str, Any]:
        want = sorted(tuple(p) for p in pairs)
        for e in self.entries:
            if sorted(tuple(p) for p in e["pairs"]) == want:
                return e
        raise KeyError(want)

    def to_dict(self) -> dict[str, Any]:
        def clean(e):
            out = dict(e)
            out["pairs"] = [list(p) for p in e["pairs"]]
            out["intersection"] = np.asarray(e["intersection"]).tolist()
            return out

        return {
            "entries": [clean(e) for e in self.entries],
            "reasonable": self.reasonable,
            "ok": self.ok,
        }


def _transparent_at(spec, beta, base_set: ResonanceSet, direction: str, points, ring_h, C_cap):
    if len(points) == 0:
        return True
    restricted = base_set.with_points(np.asarray(points))
    i, j = base_set.pair
    v = transparency_test(spec, i, j, beta, restricted, ring_h, len(points), C_cap, (direction,))
    return v[direction]


def _frame(pairs: Sequence[tuple[int, int]], anchor: tuple[int, int]) -> dict[int, int] | None:
    """Offsets ``q`` with ``q_i = q_j + 1`` for every pair, ``q_j(anchor) = 0``.

    Returns ``None`` when the pairs admit no consistent offsets.
    """
    q = {anchor[1]: 0, anchor[0]: 1}
    changed = True
    while changed:
        changed = False
        for i, j in pairs:
            if j in q and i not in q:
                q[i] = q[j] + 1
                changed = True
            elif i in q and j not in q:
                q[j] = q[i] - 1
                changed = True
    for i, j in pairs:
        if i not in q or j not in q or q[i] != q[j] + 1:
            return None
    return q


def _max_scc(nodes: Sequence[int], edges: Sequence[tuple[int, int]]) -> int:
    index = {n: a for a, n in enumerate(nodes)}
    if not edges:
        return 1
    rows = [index[a] for a, _ in edges]
    cols = [index[b] for _, b in edges]
    graph = csr_matrix((np.ones(len(edges)), (rows, cols)), shape=(len(nodes), len(nodes)))
    _, labels = connected_components(graph, directed=True, connection="strong")
    return int(np.bincount(labels).max())


def _coefficient_edges(pair, direction):
    i, j = pair
    # plus feeds row i from column j; minus feeds row j from column i
    return (j, i) if direction == "+" else (i, j)


def _pair_couple(spec, beta, verdict, P, Q, ring_h, C_cap, tol):
    sets = verdict.sets
    (a, b), (c, d) = P, Q
    if b == c:
        pattern, clause = "chain", "relaxed-1"
        X = intersect_shifted(sets[P], 0, sets[Q], 1, tol=tol)
        frames = {P: 0, Q: -1}
    elif d == a:
        return _pair_couple(spec, beta, verdict, Q, P, ring_h, C_cap, tol)
    elif a == c:
        pattern, clause = "shared-first", "relaxed-2"
        X = intersect_shifted(sets[P], 0, sets[Q], 0, tol=tol)
        frames = {P: 0, Q: 0}
    else:
        pattern, clause = "shared-second", "relaxed-3"
        X = intersect_shifted(sets[P], 0, sets[Q], 0, tol=tol)
        frames = {P: 0, Q: 0}
    entry = {
        "pairs": [P, Q],
        "pattern": pattern,
        "intersection": X,
        "witnesses": [],
    }
    if len(X) == 0:
        entry.update(clause="disjoint", supported=True, reason="resonance sets do not meet")
        return entry
    candidates = [(Q, "+"), (Q, "-"), (P, "+"), (P, "-")]
    failures = []
    for pair, dr in candidates:
        pts = X + frames[pair] * beta.k
        v = _transparent_at(spec, beta, sets[pair], dr, pts, ring_h, C_cap)
        if v is True or v.transparent:
            entry.update(
                clause=clause,
                supported=True,
                witnesses=[coefficient_name(pair, dr)],
                reason="transparent coefficient at the intersection",
            )
            return entry
        failures.append(f"{coefficient_name(pair, dr)}:{v.kind}")
    entry.update(clause="unsupported", supported=False, reason="; ".join(failures))
    return entry


def _connected(pairs) -> bool:
    nodes = sorted({n for p in pairs for n in p})
    edges = [(p[0], p[1]) for p in pairs] + [(p[1], p[0]) for p in pairs]
    index = {n: a for a, n in enumerate(nodes)}
    g = csr_matrix(
        (np.ones(len(edges)), ([index[x] for x, _ in edges], [index[y] for _, y in edges])),
        shape=(len(nodes), len(nodes)),
    )
    return connected_components(g, directed=False)[0] == 1


def _triple(spec, beta, verdict, triple, ring_h, C_cap, tol):
    sets = verdict.sets
    share = {
        p: sum(1 for q in triple if q != p and set(p) & set(q)) for p in triple
    }
    anchor = max(triple, key=lambda p: (share[p], -triple.index(p)))
    q = _frame(triple, anchor)
    entry = {"pairs": list(triple), "witnesses": [], "intersection": np.zeros((0, spec.d))}
    if q is not None:
        entry["pattern"] = "triple-chain"
        entry["anchor"] = list(anchor)
        others = [p for p in triple if p != anchor]
        shifts = {p: -q[p[1]] for p in triple}
        X = intersect_shifted(
            sets[anchor], shifts[anchor], sets[others[0]], shifts[others[0]],
            sets[others[1]], shifts[others[1]], tol=tol,
        )
        entry["intersection"] = X
        entry["offsets"] = {str(n): v for n, v in sorted(q.items())}
        if len(X) == 0:
            entry.update(clause="disjoint", supported=True, reason="triple intersection empty")
            return entry
        nodes = sorted(q)
        edges, dropped = [], []
        for p in triple:
            pts = X + q[p[1]] * beta.k
            for dr in ("+", "-"):
                v = _transparent_at(spec, beta, sets[p], dr, pts, ring_h, C_cap)
                if v is True or v.transparent:
                    dropped.append(coefficient_name(p, dr))
                else:
                    edges.append(_coefficient_edges(p, dr))
        size = _max_scc(nodes, edges)
        supported = size <= 2
        entry.update(
            clause="three-coupled" if supported else "unsupported",
            supported=supported,
            witnesses=dropped,
            reason=f"largest strongly coupled group has {size} components",
        )
        return entry

    # inconsistent offsets: the triangle (i,j), (i,j'), (j,j') with i < j < j'
    entry["pattern"] = "triangle"
    nodes = sorted({n for p in triple for n in p})
    if len(nodes) != 3:
        entry.update(clause="unsupported", supported=False, reason="pattern outside catalogue")
        return entry
    i, j, jj = nodes
    need = {(i, j), (i, jj), (j, jj)}
    if set(triple) != need:
        entry.update(clause="unsupported", supported=False, reason="pattern outside catalogue")
        return entry

    def whole(pair, dr):
        return verdict.transparency(pair)[dr].transparent

    def any_other(excluded):
        return any(whole(p, dr) for p in need if p != excluded for dr in ("+", "-"))

    Rij, Rijj, Rjjj = sets[(i, j)], sets[(i, jj)], sets[(j, jj)]
    clauses = [
        (
            "three-coupled-1",
            intersect_shifted(Rij, 0, Rijj, 0, Rjjj, 0, tol=tol),
            (whole((j, jj), "+") and any_other((j, jj)))
            or (whole((i, j), "-") and any_other((i, j))),
        ),
        (
            "three-coupled-2",
            intersect_shifted(Rij, 0, Rijj, 0, Rjjj, 1, tol=tol),
            (whole((j, jj), "-") and any_other((j, jj)))
            or (whole((i, jj), "-") and any_other((i, jj))),
        ),
        (
            "three-coupled-3",
            intersect_shifted(Rij, 0, Rijj, 1, Rjjj, 1, tol=tol),
            (whole((i, jj), "+") and any_other((i, jj)))
            or (whole((i, j), "+") and any_other((i, j))),
        ),
    ]
    active = [(name, X, ok) for name, X, ok in clauses if len(X)]
    if not active:
        entry.update(clause="disjoint", supported=True, reason="no triple intersection")
        return entry
    entry["intersection"] = np.concatenate([X for _, X, _ in active])
    failed = [name for name, _, ok in active if not ok]
    entry.update(
        clause=",".join(name for name, _, _ in active) if not failed else "unsupported",
        supported=not failed,
        reason="all active clauses witnessed" if not failed else f"failed {failed}",
    )
    return entry


def separation_check(
    spec: SystemSpec,
    beta: PhasePair,
    verdict: StabilityVerdict,
    tol: float = 1e-8,
    ring_h: float | None = None,
    C_cap: float = 1e3,
) -> SeparationReport:
    """Check the separation conditions for every coupled pattern in ``Re0``.

    Couples of pairs sharing a branch are classified as chains
    ``(i,j)&(j,j')``, shared-first ``(i,j)&(i,j')`` or shared-second
    ``(i,j')&(j,j')``.  Their intersection is computed in the frame of the
    first pair and a transparent coefficient is searched for on it.  Connected
    triples are handled either with a consistent frequency-shift frame (the
    surviving couplings must not form a strongly coupled group larger than
    two) or as the triangle pattern with its three clauses.
    """
    ring_h = verdict.h if ring_h is None else ring_h
    Re0 = list(verdict.Re0)
    entries = []
    for P, Q in itertools.combinations(Re0, 2):
        if set(P) & set(Q):
            entries.append(_pair_couple(spec, beta, verdict, P, Q, ring_h, C_cap, tol))
    for triple in itertools.combinations(Re0, 3):
        if _connected(triple):
            entries.append(_triple(spec, beta, verdict, list(triple), ring_h, C_cap, tol))
    self_shift = {}
    for p in Re0:
        X = intersect_shifted(verdict.sets[p], 0, verdict.sets[p], 1, tol=tol)
        self_shift[f"{p[0]},{p[1]}"] = X.tolist()
    reasonable = {
        "ordered": all(i < j for i, j in Re0),
        "self_shift_intersections": self_shift,
        "self_shift_disjoint": all(len(v) == 0 for v in self_shift.values()),
    }
    return SeparationReport(entries=entries, reasonable=reasonable)
