"""Coupled Klein-Gordon system with two propagation speeds.

Two Klein-Gordon fields with mass ``omega0`` and speeds ``1`` and ``theta0``
are written as a first-order system.  Each field contributes a block
``(u1, u2, u3)`` with ``u1`` in R^d; the state is the fast block followed by
the slow block, so ``N = 2 (d + 2)``.

Branch labels follow the closed-form ordering

    lambda_1 = sqrt(w0^2 + |xi|^2),        lambda_4 = -lambda_1,
    lambda_2 = sqrt(w0^2 + t0^2 |xi|^2),   lambda_3 = -lambda_2,
    lambda_5 = 0 (multiplicity 2d),

which is not the descending order (label 5 sits between 3 and 2 in value).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .symbol import BranchDecomposition, SystemSpec, bilinear_apply

__all__ = [
    "KGBranchModel",
    "KGParams",
    "KGReport",
    "ReportCheck",
    "build_kg",
    "kg_closed_forms",
    "kg_eigenvector",
    "kg_kernel_vector",
    "kg_report",
    "kg_system",
]


@dataclass(frozen=True)
class KGParams:
    """Parameters of the coupled Klein-Gordon example.

    ``k`` defaults to the first unit vector.  ``omega`` is the fast-branch
    characteristic frequency ``sqrt(omega0^2 + |k|^2)``.
    """

    d: int = 1
    omega0: float = 1.0
    theta0: float = 0.5
    k: tuple[float, ...] | None = None
    amplitude: float = 1.0
    omega: float = field(init=False)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be positive")
        if not self.omega0 > 0:
            raise ValueError("omega0 must be positive")
        if not 0 < self.theta0 < 1:
            raise ValueError("theta0 must lie in (0, 1)")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")
        k = np.zeros(self.d)
        if self.k is None:
            k[0] = 1.0
        else:
            k = np.atleast_1d(np.asarray(self.k, dtype=float))
            if k.shape != (self.d,):
                raise ValueError(f"k must have length {self.d}")
        object.__setattr__(self, "k", tuple(float(x) for x in k))
        object.__setattr__(self, "omega", float(np.sqrt(self.omega0**2 + k @ k)))

    @property
    def k_vec(self) -> np.ndarray:
        return np.array(self.k)

    def as_dict(self) -> dict:
        return {
            "d": self.d,
            "omega0": self.omega0,
            "theta0": self.theta0,
            "k": list(self.k),
            "amplitude": self.amplitude,
            "omega": self.omega,
        }


def _layout(d: int) -> dict[str, object]:
    s = d + 2
    return {
        "u1": np.arange(d),
        "u2": d,
        "u3": d + 1,
        "v1": s + np.arange(d),
        "v2": s + d,
        "v3": s + d + 1,
    }


def kg_eigenvector(xi, label: int, omega0: float, theta0: float) -> np.ndarray:
    """Closed-form unit eigenvector for the simple branches 1-4."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    d = xi.size
    lay = _layout(d)
    v = np.zeros(2 * (d + 2), dtype=complex)
    if label in (1, 4):
        lam = np.sqrt(omega0**2 + xi @ xi) * (1 if label == 1 else -1)
        v[lay["u1"]] = xi / lam
        v[lay["u2"]] = 1.0
        v[lay["u3"]] = 1j * omega0 / lam
    elif label in (2, 3):
        lam = np.sqrt(omega0**2 + theta0**2 * (xi @ xi)) * (1 if label == 2 else -1)
        v[lay["v1"]] = theta0 * xi / lam
        v[lay["v2"]] = 1.0
        v[lay["v3"]] = 1j * omega0 / lam
    else:
        raise ValueError("closed-form eigenvectors exist for labels 1-4 only")
    return v / np.sqrt(2.0)


def kg_kernel_vector(xi, u1, v1, omega0: float, theta0: float) -> np.ndarray:
    """Element of the zero-branch range built from free vectors ``u1, v1``.

    ``(u1, 0, -i xi.u1/omega0, v1, 0, -i theta0 xi.v1/omega0)``.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    d = xi.size
    lay = _layout(d)
    U = np.zeros(2 * (d + 2), dtype=complex)
    U[lay["u1"]] = u1
    U[lay["u3"]] = -1j * (xi @ np.asarray(u1)) / omega0
    U[lay["v1"]] = v1
    U[lay["v3"]] = -1j * theta0 * (xi @ np.asarray(v1)) / omega0
    return U


@dataclass(frozen=True)
class KGBranchModel:
    """Closed-form branch data registered on the Klein-Gordon system."""

    d: int
    omega0: float
    theta0: float
    n_branches: int = 5

    def eigenvalues(self, xis: np.ndarray) -> np.ndarray:
        xis = np.asarray(xis, dtype=float).reshape(-1, self.d)
        r2 = np.einsum("nj,nj->n", xis, xis)
        l1 = np.sqrt(self.omega0**2 + r2)
        l2 = np.sqrt(self.omega0**2 + self.theta0**2 * r2)
        return np.stack([l1, l2, -l2, -l1, np.zeros_like(l1)], axis=1)

    def decompose(self, xi: np.ndarray) -> BranchDecomposition:
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        N = 2 * (self.d + 2)
        lambdas = self.eigenvalues(xi[None])[0]
        vecs = [kg_eigenvector(xi, j, self.omega0, self.theta0) for j in (1, 2, 3, 4)]
        projs = [np.outer(v, v.conj()) for v in vecs]
        P5 = np.eye(N) - sum(projs)
        # Orthonormal basis of the zero branch from its explicit generators.
        gens = []
        for a in range(self.d):
            e = np.zeros(self.d)
            e[a] = 1.0
            gens.append(kg_kernel_vector(xi, e, np.zeros(self.d), self.omega0, self.theta0))
        for a in range(self.d):
            e = np.zeros(self.d)
            e[a] = 1.0
            gens.append(kg_kernel_vector(xi, np.zeros(self.d), e, self.omega0, self.theta0))
        basis5, _ = np.linalg.qr(np.array(gens).T)
        projs.append(P5)
        return BranchDecomposition(
            xi=xi,
            lambdas=lambdas,
            projectors=np.array(projs),
            multiplicities=(1, 1, 1, 1, 2 * self.d),
            vectors=tuple([v[:, None] for v in vecs] + [basis5]),
        )


def kg_system(d: int = 1, omega0: float = 1.0, theta0: float = 0.5, B=None) -> SystemSpec:
    """Assemble the Klein-Gordon system without range checks on ``theta0``.

    ``B`` replaces the default quadratic coupling when given (for experimenting
    with other nonlinearities on the same linear part); the closed-form branch
    data only depends on the linear part.
    """
    if d < 1 or not omega0 > 0 or not theta0 > 0:
        raise ValueError("need d >= 1, omega0 > 0, theta0 > 0")
    lay = _layout(d)
    N = 2 * (d + 2)
    A0 = np.zeros((N, N))
    for two, three in ((lay["u2"], lay["u3"]), (lay["v2"], lay["v3"])):
        A0[two, three] = omega0
        A0[three, two] = -omega0
    A = np.zeros((d, N, N))
    for j in range(d):
        A[j, lay["u1"][j], lay["u2"]] = A[j, lay["u2"], lay["u1"][j]] = 1.0
        A[j, lay["v1"][j], lay["v2"]] = A[j, lay["v2"], lay["v1"][j]] = theta0
    if B is None:
        B = np.zeros((N, N, N))
        u2, v2, u3, v3 = lay["u2"], lay["v2"], lay["u3"], lay["v3"]
        # first field: (u2 v2' + u2' v2 + u2 u2') / 2
        B[u2, u2, v2] = B[u2, v2, u2] = 0.5
        B[u2, u2, u2] = 0.5
        # second field: (u3 v3' + u3' v3 + u3 u3') / 2
        B[v2, u3, v3] = B[v2, v3, u3] = 0.5
        B[v2, u3, u3] = 0.5
    model = KGBranchModel(d=d, omega0=float(omega0), theta0=float(theta0))
    return SystemSpec(A0, A, B, closed_form=model, name="klein-gordon")


def build_kg(params: KGParams) -> SystemSpec:
    """Klein-Gordon system for validated parameters."""
    return kg_system(params.d, params.omega0, params.theta0)


def kg_closed_forms(params: KGParams, xi) -> tuple[BranchDecomposition, dict[int, np.ndarray]]:
    """Closed-form decomposition at ``xi`` with the eigenvectors of branches 1-4.

    The eigenvalues are cross-checked against a dense eigensolver; a mismatch
    above ``1e-10`` raises ``AssertionError``.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    model = KGBranchModel(params.d, params.omega0, params.theta0)
    dec = model.decompose(xi)
    spec = build_kg(params)
    H = -1j * spec.A0 + np.tensordot(xi, spec.A, axes=1)
    numeric = np.sort(np.linalg.eigvalsh(H))
    closed = np.sort(np.repeat(dec.lambdas, dec.multiplicities))
    err = float(np.max(np.abs(numeric - closed)))
    if err > 1e-10:
        raise AssertionError(f"closed-form eigenvalues off by {err:.3g} at xi={xi.tolist()}")
    vectors = {j: dec.vector(j) for j in (1, 2, 3, 4)}
    return dec, vectors


# --------------------------------------------------------------------------
# verification bundle

REPORT_SCHEMA = "resonalab.kg-report/1"
RE_EXPECTED = [(1, 2), (1, 5), (2, 5), (3, 4), (5, 3), (5, 4)]
RE0_EXPECTED = [(1, 2), (2, 5), (3, 4), (5, 3)]


@dataclass
class ReportCheck:
    """One verification with its measured value and tolerance."""

    name: str
    anchor: str
    value: Any
    tolerance: Any
    passed: bool
    details: dict[str, Any] | None = None

    def as_dict(self) -> dict[str, Any]:
        out = {
            "name": self.name,
            "anchor": self.anchor,
            "value": self.value,
            "tolerance": self.tolerance,
            "passed": bool(self.passed),
        }
        if self.details:
            out["details"] = self.details
        return out


@dataclass
class KGReport:
    params: KGParams
    checks: list[ReportCheck]
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> ReportCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def as_dict(self) -> dict[str, Any]:
        return {
            "schema": REPORT_SCHEMA,
            "params": self.params.as_dict(),
            "passed": self.passed,
            "n_checks": len(self.checks),
            "failures": self.failures(),
            "checks": [c.as_dict() for c in self.checks],
        }


def _samples(rng: np.random.Generator, d: int, n: int, radius: float) -> np.ndarray:
    """Uniform samples in the ball of the given radius."""
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / d)
    return g * r[:, None]


def _planar_points(k: np.ndarray, dot: float, norm2: float) -> np.ndarray:
    """Points ``x`` in the plane with ``x.k = dot`` and ``|x|^2 = norm2`` (d = 2)."""
    kn = np.linalg.norm(k)
    e = k / kn
    perp = np.array([-e[1], e[0]])
    a = dot / kn
    b2 = norm2 - a * a
    if b2 < -1e-12:
        return np.zeros((0, 2))
    b = np.sqrt(max(b2, 0.0))
    pts = np.array([a * e + s * b * perp for s in (-1.0, 1.0)])
    from .resonance import _sort_points

    return _sort_points(pts)


def kg_geometry(params: KGParams) -> dict[str, Any]:
    """Closed-form intersection geometry in the plane.

    Returns the points of ``R12 cap (R25 + k)``, ``R25 cap (R53 + k)``,
    ``R53 cap (R34 + k)`` and the derived and alternative radius values.
    Only meaningful for ``d = 2``.
    """
    w0, t0 = params.omega0, params.theta0
    k = params.k_vec
    k2 = float(k @ k)
    slow_r2 = k2 / t0**2  # |x|^2 where lambda_2(x) = omega
    fast_r2 = 3 * w0**2 + 4 * k2  # |y|^2 where lambda_1(y) = 2 omega
    out = {
        "R12_R25": _planar_points(k, 0.5 * (fast_r2 - slow_r2 - k2), slow_r2),
        "R25_R53": _planar_points(k, 0.0, slow_r2 - k2),
        "R53_R34": _planar_points(k, -0.5 * (fast_r2 - slow_r2 - k2), slow_r2),
        "radius_derived": float(np.sqrt(max(slow_r2 - k2, 0.0))),
        "radius_without_theta": float(np.sqrt(k2 * (1 - t0**2))),
        "triple_lhs_derived": k2 * (1 - t0**2) / t0**2,
        "triple_lhs_alternative": (1 - t0**2) * np.sqrt(k2),
        "triple_rhs": 3 * w0**2,
        "fast_radius_sq": fast_r2,
    }
    out["triple_nonempty"] = bool(abs(out["triple_lhs_derived"] - out["triple_rhs"]) <= 1e-12 * max(1.0, out["triple_rhs"]))
    return out


def _closed_gamma12(params: KGParams, xi: np.ndarray) -> np.ndarray:
    xi = np.atleast_2d(xi)
    lam1 = np.sqrt(params.omega0**2 + np.sum((xi + params.k_vec) ** 2, axis=1))
    return params.omega0**2 / (8 * params.omega * lam1)


def kg_report(
    params: KGParams | None = None,
    box=None,
    n_samples: int = 1000,
    epsilons=(1e-3, 1e-4),
    seed: int = 0,
    h: float = 0.05,
    workers: int | None = None,
) -> KGReport:
    """Run the full Klein-Gordon verification battery.

    Every check records a descriptive anchor tag, the measured value, its
    tolerance and a pass flag.  The bundle passes when every check passes.
    """
    import time

    from ._parallel import pmap
    from .coupling import classify_resonances, coupling_scalars, gamma_trace, separation_check
    from .flow import build_block, integrate_flow, verify_flow_bound
    from .resonance import characteristic_phase, intersect_shifted, phase_admissibility, polarization_matrices
    from .symbol import spectral_decompose, validate_system

    t_start = time.perf_counter()
    params = params or KGParams()
    spec = build_kg(params)
    d, w0, t0 = params.d, params.omega0, params.theta0
    k = params.k_vec
    beta = characteristic_phase(spec, k, omega=params.omega, branch=1)
    rng = np.random.default_rng(seed)
    xis = _samples(rng, d, n_samples, 10.0)
    lay = _layout(d)
    N = spec.N
    checks: list[ReportCheck] = []

    def add(name, anchor, value, tol, passed, details=None):
        checks.append(ReportCheck(name, anchor, value, tol, bool(passed), details))

    # construction -------------------------------------------------------
    rep = validate_system(spec)
    add("construction.validate", "kg.construction", rep.ok, True, rep.ok)
    U = np.zeros(N)
    U[lay["u2"]] = 1.0
    slot = float(bilinear_apply(spec, U, U)[lay["u2"]])
    add("construction.bilinear_slot", "kg.bilinear", slot, 1e-15, abs(slot - 0.5) <= 1e-15)
    mult = spectral_decompose(spec, xis[0]).multiplicities
    add("construction.zero_multiplicity", "kg.spectrum", int(mult[4]), 2 * d, mult[4] == 2 * d)

    # closed forms and projector algebra --------------------------------
    eig_err = comp_err = idem_err = rec_err = norm_err = 0.0
    for xi in xis:
        dec, vecs = kg_closed_forms(params, xi)
        H = -1j * spec.A0 + np.tensordot(xi, spec.A, axes=1)
        num = np.sort(np.linalg.eigvalsh(H))
        eig_err = max(eig_err, float(np.max(np.abs(num - np.sort(np.repeat(dec.lambdas, dec.multiplicities))))))
        P = dec.projectors
        comp_err = max(comp_err, float(np.max(np.abs(P.sum(axis=0) - np.eye(N)))))
        idem_err = max(idem_err, float(np.max(np.abs(np.einsum("jab,jbc->jac", P, P) - P))))
        rec = np.einsum("j,jab->ab", dec.lambdas, P)
        rec_err = max(rec_err, float(np.max(np.abs(rec - H))))
        norm_err = max(norm_err, abs(float(np.linalg.norm(vecs[1])) - 1.0))
    add("spectrum.closed_vs_numeric", "kg.closed-forms", eig_err, 1e-10, eig_err <= 1e-10)
    add("spectrum.completeness", "projector-algebra", comp_err, 1e-10, comp_err <= 1e-10)
    add("spectrum.idempotence", "projector-algebra", idem_err, 1e-10, idem_err <= 1e-10)
    add("spectrum.reconstruction", "projector-algebra", rec_err, 1e-10, rec_err <= 1e-10)
    add("spectrum.unit_fast_vector", "kg.closed-forms", norm_err, 1e-12, norm_err <= 1e-12)
    pol_err = float(np.max(np.abs(beta.polarization - kg_eigenvector(k, 1, w0, t0))))
    add("phase.polarization", "kg.polarization", pol_err, 1e-12, pol_err <= 1e-12)
    k5_err = 0.0
    for xi in xis[:64]:
        u1, v1 = rng.standard_normal(d), rng.standard_normal(d)
        U5 = kg_kernel_vector(xi, u1, v1, w0, t0)
        P5 = spectral_decompose(spec, xi).projector(5)
        k5_err = max(k5_err, float(np.linalg.norm(P5 @ U5 - U5)))
    add("spectrum.zero_branch_range", "kg.zero-branch", k5_err, 1e-12, k5_err <= 1e-12)

    # admissibility -------------------------------------------------------
    adm = phase_admissibility(spec, beta, box=box)
    for cname, ok in adm.conditions.items():
        add(f"admissibility.{cname}", "phase-admissibility", ok, True, ok)

    # weak transparency ---------------------------------------------------
    P0 = spectral_decompose(spec, np.zeros(d)).projector(5)
    wt = 0.0
    for _ in range(n_samples):
        Ua = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        Ub = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        wt = max(
            wt,
            float(np.linalg.norm(P0 @ bilinear_apply(spec, Ua, Ub))),
            float(np.linalg.norm(bilinear_apply(spec, P0 @ Ua, Ub))),
            float(np.linalg.norm(bilinear_apply(spec, Ua, P0 @ Ub))),
        )
    add("transparency.weak", "weak-transparency", wt, 1e-12, wt <= 1e-12)

    # transparency facts --------------------------------------------------
    Be1, Bem1 = polarization_matrices(spec, beta)
    t12 = t13 = t14 = 0.0
    for xi in xis:
        P5 = spectral_decompose(spec, xi).projector(5)
        t12 = max(t12, float(np.linalg.norm(P5 @ Be1, 2)), float(np.linalg.norm(P5 @ Bem1, 2)))
        u1, v1 = rng.standard_normal(d), rng.standard_normal(d)
        U5 = kg_kernel_vector(xi, u1, v1, w0, t0)
        U5k = kg_kernel_vector(xi + k, u1, v1, w0, t0)
        t13 = max(t13, abs(np.vdot(kg_eigenvector(xi + k, 1, w0, t0), Be1 @ U5)))
        t14 = max(t14, abs(np.vdot(kg_eigenvector(xi, 4, w0, t0), Bem1 @ U5k)))
    add("transparency.zero_branch_output", "kg.transparency-zero-branch", t12, 1e-12, t12 <= 1e-12)
    add("transparency.fast_from_zero", "kg.transparency-fast-plus", float(t13), 1e-12, t13 <= 1e-12)
    add("transparency.fast_minus_from_zero", "kg.transparency-fast-minus", float(t14), 1e-12, t14 <= 1e-12)

    # coupling scalars ----------------------------------------------------
    e_plus = e_minus = g_err = 0.0
    for xi in xis:
        sp, sm = coupling_scalars(spec, 1, 2, beta, xi)
        lam1 = np.sqrt(w0**2 + (xi + k) @ (xi + k))
        e_plus = max(e_plus, abs(sp - 1 / (2 * np.sqrt(2))))
        e_minus = max(e_minus, abs(sm - w0**2 / (2 * np.sqrt(2) * params.omega * lam1)))
        g_err = max(g_err, abs(gamma_trace(spec, 1, 2, beta, xi) - _closed_gamma12(params, xi)[0]))
    add("coupling.b12_plus", "kg.coupling-table", float(e_plus), 1e-10, e_plus <= 1e-10)
    add("coupling.b12_minus", "kg.coupling-table", float(e_minus), 1e-10, e_minus <= 1e-10)
    add("coupling.gamma12", "kg.trace-invariant", float(g_err), 1e-10, g_err <= 1e-10)

    # resonance catalogue and stability -----------------------------------
    verdict = classify_resonances(spec, beta, box=box, amplitude=params.amplitude, h=h, workers=workers)
    add("resonance.catalogue", "kg.resonance-catalogue", [list(p) for p in verdict.resonant],
        [list(p) for p in RE_EXPECTED], verdict.resonant == RE_EXPECTED)
    add("resonance.non_transparent", "kg.non-transparent-catalogue", [list(p) for p in verdict.Re0],
        [list(p) for p in RE0_EXPECTED], verdict.Re0 == RE0_EXPECTED)
    add("stability.index", "kg.stability-index", verdict.index_label, "+1", verdict.gamma_index == 1)
    pts12 = verdict.sets[(1, 2)].points if (1, 2) in verdict.sets else np.zeros((0, d))
    if len(pts12):
        oracle = params.amplitude * float(np.sqrt(_closed_gamma12(params, pts12)).max())
        gerr = abs(params.amplitude * verdict.gamma_pair.get((1, 2), np.nan) - oracle)
        add("stability.gamma12_on_set", "kg.growth-rate", float(gerr), 1e-9, gerr <= 1e-9,
            {"measured": params.amplitude * verdict.gamma_pair.get((1, 2), np.nan), "closed_form": oracle})
    gamma12 = verdict.gamma_plus_per_pair.get((1, 2), verdict.gamma_plus)

    # separation ----------------------------------------------------------
    sep = separation_check(spec, beta, verdict)
    add("separation.supported", "separation", sep.ok, True, sep.ok,
        {"patterns": [[e["pattern"], e["clause"], e["witnesses"]] for e in sep.entries]})
    add("separation.self_shift_disjoint", "separation.reasonable",
        sep.reasonable["self_shift_disjoint"], "informational", True,
        {"self_shift_intersections": sep.reasonable["self_shift_intersections"]})

    # geometry (plane only) -----------------------------------------------
    cases = []
    if d == 2:
        geo = kg_geometry(params)
        sets = verdict.sets
        add("geometry.radius", "kg.geometry-radius", geo["radius_derived"], "derived",
            True, {"without_theta_factor": geo["radius_without_theta"]})
        add("geometry.triple_condition", "kg.geometry-triple",
            geo["triple_lhs_derived"], geo["triple_rhs"], True,
            {"alternative_lhs": geo["triple_lhs_alternative"], "nonempty": geo["triple_nonempty"]})
        found = {
            "R12_R25": intersect_shifted(sets[(1, 2)], 0, sets[(2, 5)], 1),
            "R25_R53": intersect_shifted(sets[(2, 5)], 0, sets[(5, 3)], 1),
            "R53_R34": intersect_shifted(sets[(5, 3)], 0, sets[(3, 4)], 1),
        }
        for key, X in found.items():
            want = geo[key]
            ok = X.shape == want.shape and (len(X) == 0 or np.max(np.abs(X - want)) <= 1e-7)
            err = float(np.max(np.abs(X - want))) if ok and len(X) else (0.0 if ok else float("inf"))
            add(f"geometry.{key}", "kg.geometry-intersections", err, 1e-7, ok,
                {"found": X.tolist(), "closed_form": want.tolist()})
        triple = intersect_shifted(sets[(2, 5)], 0, sets[(5, 3)], 1, sets[(1, 2)], -1)
        want = geo["R25_R53"] if geo["triple_nonempty"] else np.zeros((0, 2))
        ok = triple.shape == want.shape and (len(triple) == 0 or np.max(np.abs(triple - want)) <= 1e-7)
        add("geometry.triple", "kg.geometry-triple", triple.tolist(), want.tolist(), ok)
        if geo["triple_nonempty"]:
            x = geo["R25_R53"][-1]
            memb = float((x + 2 * k) @ (x + 2 * k))
            add("geometry.fast_membership", "kg.geometry-membership", memb, geo["fast_radius_sq"],
                abs(memb - geo["fast_radius_sq"]) <= 1e-12)
            cases += [
                ("T", [(1, 2), (2, 5), (5, 3)], x, ["b52-", "b53+"], (2, 5)),
                ("B1", [(2, 5), (5, 3)], x, ["b52-", "b53+"], (2, 5)),
            ]
            x2 = geo["R53_R34"][-1]
            cases.append(("T2", [(2, 5), (5, 3), (3, 4)], x2, ["b52-", "b53+"], (5, 3)))
        if len(geo["R12_R25"]):
            cases.append(("A", [(1, 2), (2, 5)], geo["R12_R25"][-1], ["b52-"], (1, 2)))
        if len(geo["R53_R34"]):
            cases.append(("B2", [(5, 3), (3, 4)], geo["R53_R34"][-1], ["b53+"], (5, 3)))
    if len(pts12):
        cases.insert(0, ("P", [(1, 2)], pts12[int(np.argmax(_closed_gamma12(params, pts12)))], [], (1, 2)))

    # blocks and flow bounds ----------------------------------------------
    jobs = [(c, eps) for c in cases for eps in epsilons]

    def run(job):
        (name, pairs, x, drop, anchor), eps = job
        blk = build_block(spec, beta, pairs, x, eps, params.amplitude, pattern=name, drop=drop, anchor=anchor)
        T = 10 * abs(np.log(eps))
        traj = integrate_flow(blk, T, n_times=401)
        bound = verify_flow_bound(traj, gamma12, log_power_cap=2.0)
        return name, eps, blk.size, bound

    for name, eps, size, bound in pmap(run, jobs, workers):
        add(f"flow.{name}.eps={eps:g}", "symbolic-flow-bound", bound.n_star, 2.0, bound.ok,
            {"size": size, "C": bound.C, "K": bound.K, "gamma_plus": bound.gamma_plus})

    return KGReport(params=params, checks=checks, elapsed=time.perf_counter() - t_start)
