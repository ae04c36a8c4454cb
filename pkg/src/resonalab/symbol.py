"""Symbol of a first-order hyperbolic system and its spectral decomposition.

The system is

    du/dt + A0 u / eps + sum_j A_j du/dx_j = B(u, u) / sqrt(eps)

with A0 skew-symmetric, A_j symmetric and B a symmetric bilinear map.  Its
symbol ``H(xi) = A0 / i + sum_j xi_j A_j`` is Hermitian; we resolve it into
distinct eigenvalue branches ``lambda_1 >= ... >= lambda_J`` with orthogonal
eigenprojectors.

Branch labels are 1-based throughout the package.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

import numpy as np

__all__ = [
    "BranchCrossingError",
    "BranchDecomposition",
    "BranchModel",
    "RegularityReport",
    "SystemSpec",
    "SymmetrizationWarning",
    "ValidationReport",
    "bilinear_apply",
    "branch_values",
    "canonical_gauge",
    "load_system",
    "spectral_decompose",
    "symbol_at",
    "symbol_regularity_check",
    "system_to_dict",
    "validate_system",
]

CLUSTER_TOL = 1e-8


class BranchCrossingError(RuntimeError):
    """Two numerically distinct branches merge and no closed form is registered."""


class SymmetrizationWarning(UserWarning):
    """The bilinear tensor was not symmetric in its last two indices."""


class BranchModel(Protocol):
    """Closed-form spectral data attached to a system (e.g. Klein-Gordon)."""

    n_branches: int

    def eigenvalues(self, xis: np.ndarray) -> np.ndarray:
        """Branch values at an ``(n, d)`` batch of frequencies, shape ``(n, J)``."""

    def decompose(self, xi: np.ndarray) -> "BranchDecomposition":
        """Full decomposition at a single frequency."""


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """Coefficients of the hyperbolic system.

    Parameters
    ----------
    A0 : (N, N) array
        Skew-symmetric zeroth-order matrix.
    A : (d, N, N) array
        Symmetric first-order matrices.
    B : (N, N, N) array
        ``B(u, v)_a = sum_{b,c} B[a, b, c] u_b v_c``.  Symmetrized in its last
        two indices on construction; ``symmetrized`` records whether that
        changed anything.
    closed_form : BranchModel, optional
        Closed-form branch labels, used in place of the numeric eigensolver.
    """

    A0: np.ndarray
    A: np.ndarray
    B: np.ndarray
    closed_form: BranchModel | None = field(default=None, repr=False)
    name: str = "custom"
    symmetrized: bool = field(default=False, init=False)
    B_asymmetry: float = field(default=0.0, init=False)

    def __post_init__(self):
        A0 = np.array(self.A0, dtype=float)
        A = np.array(self.A, dtype=float)
        B = np.array(self.B, dtype=float)
        if A0.ndim != 2 or A0.shape[0] != A0.shape[1]:
            raise ValueError("A0 must be a square matrix")
        N = A0.shape[0]
        if A.ndim == 2:
            A = A[None]
        if A.ndim != 3 or A.shape[1:] != (N, N) or A.shape[0] < 1:
            raise ValueError(f"A must have shape (d, {N}, {N}), got {A.shape}")
        if B.shape != (N, N, N):
            raise ValueError(f"B must have shape ({N}, {N}, {N}), got {B.shape}")
        asym = float(np.max(np.abs(B - B.transpose(0, 2, 1)))) if N else 0.0
        if asym > 0.0:
            warnings.warn(
                f"bilinear tensor asymmetric by {asym:.3g}; symmetrized",
                SymmetrizationWarning,
                stacklevel=3,
            )
            B = 0.5 * (B + B.transpose(0, 2, 1))
        for arr in (A0, A, B):
            arr.setflags(write=False)
        object.__setattr__(self, "A0", A0)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "symmetrized", asym > 0.0)
        object.__setattr__(self, "B_asymmetry", asym)

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.A0.shape[0]

    def with_B(self, B: np.ndarray) -> "SystemSpec":
        """Same linear part, different bilinear tensor."""
        return SystemSpec(self.A0, self.A, B, closed_form=self.closed_form, name=self.name)


@dataclass(frozen=True, eq=False)
class BranchDecomposition:
    """Distinct eigenvalues of the symbol at ``xi`` with their projectors.

    ``vectors[j]`` is an orthonormal basis (N, m_j) of the range of
    ``projectors[j]``; for simple branches it is the unit eigenvector in
    canonical gauge (see :func:`canonical_gauge`).
    """

    xi: np.ndarray
    lambdas: np.ndarray
    projectors: np.ndarray
    multiplicities: tuple[int, ...]
    vectors: tuple[np.ndarray, ...]

    @property
    def J(self) -> int:
        return len(self.lambdas)

    def projector(self, label: int) -> np.ndarray:
        return self.projectors[label - 1]

    def vector(self, label: int) -> np.ndarray:
        """Unit eigenvector of a simple branch."""
        v = self.vectors[label - 1]
        if v.shape[1] != 1:
            raise ValueError(f"branch {label} has multiplicity {v.shape[1]}")
        return v[:, 0]

    def eigenvalue(self, label: int) -> float:
        return float(self.lambdas[label - 1])


def _as_xi(spec: SystemSpec, xi) -> np.ndarray:
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape != (spec.d,):
        raise ValueError(f"xi has shape {xi.shape}, expected ({spec.d},)")
    return xi


def symbol_at(spec: SystemSpec, xi) -> np.ndarray:
    """Return ``A0 / i + sum_j xi_j A_j``."""
    xi = _as_xi(spec, xi)
    return -1j * spec.A0 + np.tensordot(xi, spec.A, axes=1)


def _symbols(spec: SystemSpec, xis: np.ndarray) -> np.ndarray:
    xis = np.asarray(xis, dtype=float).reshape(-1, spec.d)
    return -1j * spec.A0[None] + np.einsum("nj,jab->nab", xis, spec.A)


def canonical_gauge(v: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    """Fix the phase of a unit vector.

    The first component whose modulus is within ``rtol`` of the largest is made
    real and positive.  For the Klein-Gordon eigenvectors this reproduces the
    closed-form normalisation (the ``u_2`` slot equals ``1/sqrt(2)``).
    """
    mags = np.abs(v)
    top = mags.max()
    if top == 0.0:
        return v
    idx = int(np.flatnonzero(mags >= top * (1.0 - rtol))[0])
    return v * (np.conj(v[idx]) / mags[idx])


def _cluster(w: np.ndarray, tol: float) -> list[list[int]]:
    """Group descending eigenvalues whose consecutive gaps are below ``tol``."""
    groups = [[0]]
    scale = max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    for n in range(1, len(w)):
        if w[n - 1] - w[n] <= tol * scale:
            groups[-1].append(n)
        else:
            groups.append([n])
    return groups


def _reference_xi(d: int) -> np.ndarray:
    # A deterministic point with no special alignment with the coordinate axes.
    return 0.7 * np.sqrt(np.arange(d) + 2.0) / np.sqrt(2.0)


def _reference_pattern(spec: SystemSpec) -> tuple[int, ...]:
    H = symbol_at(spec, _reference_xi(spec.d))
    w = np.linalg.eigvalsh(H)[::-1]
    return tuple(len(g) for g in _cluster(w, CLUSTER_TOL))


def _numeric_decompose(spec: SystemSpec, xi: np.ndarray) -> BranchDecomposition:
    H = symbol_at(spec, xi)
    w, V = np.linalg.eigh(H)
    w, V = w[::-1], V[:, ::-1]
    groups = _cluster(w, CLUSTER_TOL)
    pattern = tuple(len(g) for g in groups)
    reference = _reference_pattern(spec)
    if pattern != reference:
        raise BranchCrossingError(
            f"multiplicity pattern {pattern} at xi={xi.tolist()} differs from the "
            f"generic pattern {reference}; branches cannot be labelled smoothly here"
        )
    lambdas, projectors, vectors = [], [], []
    for g in groups:
        Vg = V[:, g]
        if len(g) == 1:
            Vg = canonical_gauge(Vg[:, 0])[:, None]
        lambdas.append(float(np.mean(w[g])))
        projectors.append(Vg @ Vg.conj().T)
        vectors.append(Vg)
    return BranchDecomposition(
        xi=xi,
        lambdas=np.array(lambdas),
        projectors=np.array(projectors),
        multiplicities=pattern,
        vectors=tuple(vectors),
    )


def spectral_decompose(spec: SystemSpec, xi, method: str = "auto") -> BranchDecomposition:
    """Resolve the symbol at ``xi`` into branches.

    Parameters
    ----------
    method : {"auto", "numeric", "closed"}
        ``auto`` uses the registered closed form if the system has one and the
        dense eigensolver otherwise.  The numeric path orders branches by
        descending eigenvalue and clusters eigenvalues closer than ``1e-8``;
        it raises :class:`BranchCrossingError` when the multiplicity pattern
        differs from the generic one.
    """
    xi = _as_xi(spec, xi)
    if method not in ("auto", "numeric", "closed"):
        raise ValueError(f"unknown method {method!r}")
    if method == "closed" or (method == "auto" and spec.closed_form is not None):
        if spec.closed_form is None:
            raise ValueError("system has no closed-form branch model")
        return spec.closed_form.decompose(xi)
    return _numeric_decompose(spec, xi)


def branch_values(spec: SystemSpec, xis) -> np.ndarray:
    """Vectorised branch eigenvalues at an ``(n, d)`` batch, shape ``(n, J)``.

    The numeric path does not raise at crossings: eigenvalues are sorted and
    averaged within the generic multiplicity groups.  Callers that need the
    certified labelling use :func:`spectral_decompose`.
    """
    xis = np.asarray(xis, dtype=float).reshape(-1, spec.d)
    if spec.closed_form is not None:
        return spec.closed_form.eigenvalues(xis)
    w = np.linalg.eigvalsh(_symbols(spec, xis))[:, ::-1]
    pattern = _reference_pattern(spec)
    out = np.empty((xis.shape[0], len(pattern)))
    start = 0
    for j, m in enumerate(pattern):
        out[:, j] = w[:, start : start + m].mean(axis=1)
        start += m
    return out


def bilinear_apply(spec: SystemSpec, u, v=None, mode: str = "pair") -> np.ndarray:
    """Evaluate the bilinear source.

    ``mode="pair"`` returns ``B(u, v)``.  ``mode="directional"`` returns the
    matrix of ``v -> B(u, v) + B(v, u)``; ``v`` is ignored.
    """
    u = np.asarray(u)
    B = spec.B
    if mode == "pair":
        if v is None:
            raise ValueError("pair mode needs two vectors")
        return np.einsum("abc,b,c->a", B, u, np.asarray(v))
    if mode == "directional":
        return np.einsum("abc,b->ac", B, u) + np.einsum("abc,c->ab", B, u)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class ValidationReport:
    A0_skew: bool
    A0_violation: float
    A_symmetric: bool
    A_violation: float
    B_symmetric: bool
    B_violation: float
    B_symmetrized: bool

    @property
    def ok(self) -> bool:
        return self.A0_skew and self.A_symmetric and self.B_symmetric

    def as_dict(self) -> dict[str, Any]:
        return {
            "A0_skew": self.A0_skew,
            "A0_violation": self.A0_violation,
            "A_symmetric": self.A_symmetric,
            "A_violation": self.A_violation,
            "B_symmetric": self.B_symmetric,
            "B_violation": self.B_violation,
            "B_symmetrized": self.B_symmetrized,
            "ok": self.ok,
        }


def validate_system(spec: SystemSpec) -> ValidationReport:
    """Report exact skewness/symmetry of the stored coefficients.

    B is always symmetric after construction; ``B_violation`` reports the
    asymmetry of the tensor as it was supplied.
    """
    a0 = float(np.max(np.abs(spec.A0 + spec.A0.T))) if spec.N else 0.0
    aj = float(np.max(np.abs(spec.A - spec.A.transpose(0, 2, 1)))) if spec.N else 0.0
    return ValidationReport(
        A0_skew=a0 == 0.0,
        A0_violation=a0,
        A_symmetric=aj == 0.0,
        A_violation=aj,
        B_symmetric=not spec.symmetrized,
        B_violation=spec.B_asymmetry,
        B_symmetrized=spec.symmetrized,
    )


@dataclass(frozen=True)
class RegularityReport:
    """Empirical first-derivative constants of the branch data.

    ``lambda_constants[j]`` bounds ``|grad lambda_j|`` and
    ``projector_constants[j]`` bounds ``(1 + |xi|^2)^{1/2} |grad Pi_j|`` over
    the samples.  ``*_growth`` compares the outer and inner halves of the
    samples (by ``|xi|``); a ratio above ``growth_limit`` flags a violation.
    """

    lambda_constants: np.ndarray
    projector_constants: np.ndarray
    lambda_growth: float
    projector_growth: float
    growth_limit: float

    @property
    def ok(self) -> bool:
        return self.lambda_growth <= self.growth_limit and self.projector_growth <= self.growth_limit


def symbol_regularity_check(
    spec: SystemSpec,
    samples,
    step: float = 1e-6,
    growth_limit: float = 4.0,
    method: str = "auto",
) -> RegularityReport:
    """Estimate the order-one symbol constants of the branches by central differences."""
    samples = np.asarray(samples, dtype=float).reshape(-1, spec.d)
    n = samples.shape[0]
    lam_ratio, proj_ratio = [], []
    for xi in samples:
        base = spectral_decompose(spec, xi, method)
        gl = np.zeros((base.J, spec.d))
        gp = np.zeros((base.J, spec.d))
        for a in range(spec.d):
            e = np.zeros(spec.d)
            e[a] = step
            plus = spectral_decompose(spec, xi + e, method)
            minus = spectral_decompose(spec, xi - e, method)
            gl[:, a] = (plus.lambdas - minus.lambdas) / (2 * step)
            dP = (plus.projectors - minus.projectors) / (2 * step)
            gp[:, a] = np.linalg.norm(dP, ord=2, axis=(1, 2))
        weight = np.sqrt(1.0 + xi @ xi)
        grads_l = np.linalg.norm(gl, axis=1)
        grads_p = weight * np.linalg.norm(gp, axis=1)
        lam_ratio.append(grads_l)
        proj_ratio.append(grads_p)
    lam_ratio = np.array(lam_ratio)
    proj_ratio = np.array(proj_ratio)
    order = np.argsort(np.linalg.norm(samples, axis=1), kind="stable")
    inner, outer = order[: max(1, n // 2)], order[n // 2 :]

    def growth(r: np.ndarray) -> float:
        lo = float(r[inner].max())
        hi = float(r[outer].max())
        floor = 1e-8
        return (hi + floor) / (lo + floor)

    return RegularityReport(
        lambda_constants=lam_ratio.max(axis=0),
        projector_constants=proj_ratio.max(axis=0),
        lambda_growth=growth(lam_ratio),
        projector_growth=growth(proj_ratio),
        growth_limit=growth_limit,
    )


def system_to_dict(spec: SystemSpec) -> dict[str, Any]:
    return {
        "d": spec.d,
        "N": spec.N,
        "A0": spec.A0.tolist(),
        "A": spec.A.tolist(),
        "B": spec.B.tolist(),
    }


def load_system(doc: dict[str, Any] | str | Path) -> SystemSpec:
    """Build a :class:`SystemSpec` from a JSON document, path, or parsed dict.

    ``{"builtin": "klein-gordon", "omega0": .., "theta0": .., "d": ..}``
    selects the built-in coupled Klein-Gordon system.
    """
    if isinstance(doc, (str, Path)):
        with open(doc) as fh:
            doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError("system document must be a JSON object")
    if "builtin" in doc:
        if doc["builtin"] != "klein-gordon":
            raise ValueError(f"unknown builtin system {doc['builtin']!r}")
        from .kg import kg_system

        return kg_system(
            d=int(doc.get("d", 1)),
            omega0=float(doc.get("omega0", 1.0)),
            theta0=float(doc.get("theta0", 0.5)),
        )
    for key in ("d", "N", "A0", "A", "B"):
        if key not in doc:
            raise ValueError(f"system document missing {key!r}")
    spec = SystemSpec(np.array(doc["A0"]), np.array(doc["A"]), np.array(doc["B"]))
    if spec.d != int(doc["d"]) or spec.N != int(doc["N"]):
        raise ValueError("declared d/N do not match the matrices")
    return spec


def trivial_system(d: int = 1, N: int = 2) -> SystemSpec:
    """All-zero system: a single branch with eigenvalue 0."""
    return SystemSpec(np.zeros((N, N)), np.zeros((d, N, N)), np.zeros((N, N, N)))
