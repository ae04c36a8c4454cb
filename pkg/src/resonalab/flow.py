"""Reduced block symbols and their symbolic flow.

After the frequency shift and normal-form reduction, the amplitudes of the
resonant branches near a frequency ``xi`` obey

    dS/dt + M S / sqrt(eps) = 0,     M = diag(i mu) - sqrt(eps) C,

where ``mu`` are the shifted branch frequencies and ``C`` holds the
non-transparent interaction coefficients (evaluated against unit
eigenvectors, amplitude frozen).  This module assembles ``M``, integrates the
flow and checks exponential bounds of the form
``|S(t)| <= C |ln eps|^N exp(gamma t)``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.linalg import expm, orth

from ._parallel import pmap
from .coupling import coefficient_name
from .resonance import PhasePair, ResonanceSet, _phase_batch, polarization_matrices
from .symbol import SystemSpec, spectral_decompose

__all__ = [
    "BlockMatrix",
    "CutoffPair",
    "FlowBound",
    "FlowTrajectory",
    "OscillationResidueError",
    "SmallDivisorError",
    "StepSizeError",
    "build_block",
    "cutoff_pair",
    "fit_growth_rate",
    "flow_batch",
    "homological_solve",
    "integrate_flow",
    "smooth_step",
    "verify_flow_bound",
]


class SmallDivisorError(ArithmeticError):
    """A non-transparent coefficient cannot be removed near its resonance."""


class OscillationResidueError(RuntimeError):
    """An oscillating factor survives the frequency shift; no block is defined."""


class StepSizeError(RuntimeError):
    """The stepped integrator's local error estimate exceeded the limit."""


# --------------------------------------------------------------------------
# cutoffs


def smooth_step(x) -> np.ndarray:
    """C-infinity transition equal to 0 for ``x <= 0`` and 1 for ``x >= 1``."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True, eq=False)
class CutoffPair:
    """Frequency cutoffs around a resonance set.

    ``chi`` equals 1 for ``|phase| <= h`` and 0 for ``|phase| >= 1.5 h``;
    ``chi_sharp`` equals 1 for ``|phase| <= 1.5 h`` and 0 for
    ``|phase| >= 2 h``.  Hence ``(1 - chi_sharp) chi = 0`` identically.
    """

    center: ResonanceSet = field(repr=False)
    h: float

    def chi_of_phase(self, phase) -> np.ndarray:
        return 1.0 - smooth_step((np.abs(phase) - self.h) / (0.5 * self.h))

    def chi_sharp_of_phase(self, phase) -> np.ndarray:
        return 1.0 - smooth_step((np.abs(phase) - 1.5 * self.h) / (0.5 * self.h))

    def phase(self, xi) -> np.ndarray:
        return np.asarray(self.center.phase(xi))

    def chi(self, xi) -> np.ndarray:
        return self.chi_of_phase(self.phase(xi))

    def chi_sharp(self, xi) -> np.ndarray:
        return self.chi_sharp_of_phase(self.phase(xi))


def cutoff_pair(rset: ResonanceSet, h: float) -> CutoffPair:
    if not h > 0:
        raise ValueError("h must be positive")
    return CutoffPair(rset, float(h))


def homological_solve(
    phase_value: float,
    rhs: complex,
    on_support: bool = True,
    phase_floor: float = 0.025,
    certificate: float | None = None,
) -> complex:
    """Solve ``i * phase * Q = rhs`` for the normal-form corrector.

    Away from the resonance (``|phase| >= phase_floor``) this is a plain
    division.  Closer in, the quotient is only accepted when a transparency
    constant ``certificate`` bounds ``|rhs| <= C |phase|``; otherwise the
    small divisor is reported.  ``on_support=False`` means the cutoff already
    removed the term and ``Q = 0``.
    """
    if not on_support:
        return 0j
    phase_value = float(phase_value)
    rhs = complex(rhs)
    if abs(phase_value) >= phase_floor:
        return rhs / (1j * phase_value)
    if certificate is None:
        raise SmallDivisorError(
            f"|phase|={abs(phase_value):.3g} below floor {phase_floor:.3g} without certificate"
        )
    if abs(rhs) > certificate * abs(phase_value) * (1 + 1e-12):
        raise SmallDivisorError(
            f"|rhs|={abs(rhs):.3g} exceeds certified bound {certificate:.3g}*|phase|"
        )
    if phase_value == 0.0:
        return 0j
    return rhs / (1j * phase_value)


# --------------------------------------------------------------------------
# block assembly


@dataclass(frozen=True, eq=False)
class BlockMatrix:
    """Reduced block symbol ``M = diag(i mu) - sqrt(eps) C``.

    ``nodes`` lists ``(branch, offset)`` for each row: the row carries branch
    ``branch`` at frequency ``xi + offset * k`` with its phase shifted by
    ``offset * omega``.  ``couplings`` maps ``(row, col)`` to the entry of
    ``C`` (amplitude and cutoffs included, without the ``-sqrt(eps)`` factor).
    """

    mu: np.ndarray
    couplings: dict[tuple[int, int], complex]
    epsilon: float
    pattern: str
    nodes: tuple[tuple[int, int], ...]
    xi: np.ndarray
    dropped: tuple[str, ...] = ()

    @property
    def size(self) -> int:
        return len(self.mu)

    @property
    def coupling_matrix(self) -> np.ndarray:
        C = np.zeros((self.size, self.size), dtype=complex)
        for (r, c), v in self.couplings.items():
            C[r, c] = v
        return C

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(1j * self.mu) - np.sqrt(self.epsilon) * self.coupling_matrix

    def as_dict(self) -> dict[str, Any]:
        return {
            "pattern": self.pattern,
            "size": self.size,
            "epsilon": self.epsilon,
            "xi": self.xi.tolist(),
            "nodes": [list(n) for n in self.nodes],
            "mu": self.mu.tolist(),
            "couplings": [
                {"row": r, "col": c, "re": v.real, "im": v.imag}
                for (r, c), v in sorted(self.couplings.items())
            ],
            "dropped": list(self.dropped),
        }


def block_from_couplings(
    mu: Sequence[float],
    couplings: dict[tuple[int, int], complex],
    epsilon: float,
    pattern: str = "synthetic",
) -> BlockMatrix:
    """Block with explicitly given phases and couplings (rows labelled 1..n)."""
    mu = np.asarray(mu, dtype=float)
    nodes = tuple((a + 1, 0) for a in range(mu.size))
    cp = {tuple(k): complex(v) for k, v in couplings.items() if v != 0}
    return BlockMatrix(mu, cp, float(epsilon), pattern, nodes, np.zeros(1))


def _frame_offsets(pairs, anchor):
    from .coupling import _frame

    return _frame(pairs, anchor)


def build_block(
    spec: SystemSpec,
    beta: PhasePair,
    pairs: Sequence[tuple[int, int]],
    xi,
    epsilon: float,
    amplitude: float = 1.0,
    pattern: str = "",
    drop: Sequence[str] = (),
    anchor: tuple[int, int] | None = None,
    cutoffs: dict[tuple[int, int], CutoffPair] | None = None,
    certificate: dict[str, Any] | None = None,
    residue_h: float = 1e-8,
) -> BlockMatrix:
    """Assemble the reduced block for the resonant ``pairs`` near ``xi``.

    Parameters
    ----------
    pairs : sequence of (i, j)
        Interacting pairs; branch ``i`` of a pair sits one lattice shift above
        branch ``j``.  ``xi`` is the frequency of branch ``j`` of ``anchor``
        (default: the first pair).
    drop : names such as ``"b52-"``
        Coefficients certified transparent at ``xi``; they are set to zero.
    cutoffs : optional map pair -> :class:`CutoffPair`
        When given, couplings are multiplied by ``chi`` and the diagonal by
        the product of the ``chi_sharp`` factors.
    certificate : optional separation entry
        A report entry from :func:`separation_check`; an unsupported entry is
        refused.
    residue_h : float
        A pair whose own phase also (nearly) vanishes one lattice shift away
        would leave an oscillating coupling outside the block; this raises
        :class:`OscillationResidueError`.

    Raises
    ------
    OscillationResidueError
        Inconsistent shifts, refused certificate, or self-shift resonance.
    """
    pairs = [tuple(p) for p in pairs]
    anchor = tuple(anchor) if anchor is not None else pairs[0]
    if certificate is not None and not certificate.get("supported", False):
        raise OscillationResidueError(f"separation pattern not supported: {certificate.get('reason')}")
    q = _frame_offsets(pairs, anchor)
    if q is None:
        raise OscillationResidueError(f"pairs {pairs} admit no consistent frequency shift")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    k = beta.k
    drop = set(drop)
    nodes_order = sorted(q, key=lambda n: (-q[n], n))

    for i, j in pairs:
        eta = xi + q[j] * k
        for m in (-1, 1):
            if abs(_phase_batch(spec, i, j, beta, (eta + m * k)[None])[0]) <= residue_h and abs(
                _phase_batch(spec, i, j, beta, eta[None])[0]
            ) <= max(residue_h, 1e-6):
                raise OscillationResidueError(
                    f"pair {(i, j)} resonates again one lattice shift away from xi={xi.tolist()}"
                )

    dec = {n: spectral_decompose(spec, xi + q[n] * k) for n in nodes_order}
    Be1, Bem1 = polarization_matrices(spec, beta)
    g = amplitude

    coeffs = []  # (row node, col node, matrix, pair)
    for i, j in pairs:
        Pi = dec[i].projector(i)
        Pj = dec[j].projector(j)
        if coefficient_name((i, j), "+") not in drop:
            coeffs.append((i, j, g * (Pi @ Be1 @ Pj), (i, j)))
        if coefficient_name((i, j), "-") not in drop:
            coeffs.append((j, i, np.conj(g) * (Pj @ Bem1 @ Pi), (i, j)))

    bases = {}
    for n in nodes_order:
        V = dec[n].vectors[n - 1]
        if V.shape[1] == 1:
            bases[n] = V
            continue
        spans = []
        for r, c, mat, _ in coeffs:
            if r == n and np.linalg.norm(mat) > 1e-14:
                spans.append(orth(mat))
            if c == n and np.linalg.norm(mat) > 1e-14:
                spans.append(orth(mat.conj().T))
        if spans:
            W = orth(np.concatenate(spans, axis=1), rcond=1e-10)
            bases[n] = W
        else:
            bases[n] = V[:, :1]

    offsets, rows = {}, []
    for n in nodes_order:
        offsets[n] = len(rows)
        rows.extend([n] * bases[n].shape[1])
    size = len(rows)

    chi = {}
    sharp = 1.0
    for p in pairs:
        if cutoffs is not None and p in cutoffs:
            ph = _phase_batch(spec, p[0], p[1], beta, (xi + q[p[1]] * k)[None])[0]
            chi[p] = float(cutoffs[p].chi_of_phase(ph))
            sharp *= float(cutoffs[p].chi_sharp_of_phase(ph))
        else:
            chi[p] = 1.0

    mu = np.empty(size)
    for n in nodes_order:
        lam = dec[n].eigenvalue(n) - q[n] * beta.omega
        mu[offsets[n] : offsets[n] + bases[n].shape[1]] = sharp * lam

    C = np.zeros((size, size), dtype=complex)
    for r, c, mat, p in coeffs:
        Vr, Vc = bases[r], bases[c]
        blk = chi[p] * (Vr.conj().T @ mat @ Vc)
        C[offsets[r] : offsets[r] + Vr.shape[1], offsets[c] : offsets[c] + Vc.shape[1]] += blk
    couplings = {
        (a, b): complex(C[a, b]) for a in range(size) for b in range(size) if abs(C[a, b]) > 1e-15
    }
    node_labels = tuple((n, q[n]) for n in rows)
    return BlockMatrix(
        mu=mu,
        couplings=couplings,
        epsilon=float(epsilon),
        pattern=pattern or "+".join(f"({i},{j})" for i, j in pairs),
        nodes=node_labels,
        xi=xi,
        dropped=tuple(sorted(drop)),
    )


# --------------------------------------------------------------------------
# flow integration


@dataclass
class FlowTrajectory:
    """Operator norms ``|S(tau, t)|`` at the recorded times."""

    times: np.ndarray
    norms: np.ndarray
    params: dict[str, Any]
    snapshots: np.ndarray | None = None

    def to_csv(self, gamma_plus: float | None = None, C: float = 1.0, n_star: float = 0.0) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        eps = self.params.get("epsilon")
        w.writerow(["t", "norm", "bound"])
        tau = self.params.get("tau", 0.0)
        for t, n in zip(self.times, self.norms):
            if gamma_plus is None or eps is None:
                b = float("nan")
            else:
                b = C * abs(np.log(eps)) ** n_star * np.exp((t - tau) * gamma_plus)
            w.writerow([format(t, ".17g"), format(n, ".17g"), format(b, ".17g")])
        return buf.getvalue()


def _as_generator(M, epsilon):
    if isinstance(M, BlockMatrix):
        return M.matrix, M.epsilon, max(np.abs(M.mu).max(initial=0.0), 0.0)
    M = np.asarray(M, dtype=complex)
    if epsilon is None:
        raise ValueError("epsilon is required for a raw matrix")
    mu = np.abs(np.diag(M).imag).max(initial=0.0)
    return M, float(epsilon), mu


def integrate_flow(
    M,
    t_max: float,
    tau: float = 0.0,
    times: Sequence[float] | None = None,
    n_times: int = 201,
    mode: str = "frozen-exact",
    dt: float | None = None,
    epsilon: float | None = None,
    snapshots: bool = False,
    error_limit: float = 1e-8,
    check_every: int = 16,
    gamma_target: float | None = None,
) -> FlowTrajectory:
    """Solve ``dS/dt + M S / sqrt(eps) = 0`` with ``S(tau) = I``.

    ``M`` is a :class:`BlockMatrix`, a constant matrix (then ``epsilon`` is
    required) or, in ``stepped`` mode, a callable ``t -> matrix``.

    ``frozen-exact`` evaluates ``expm(-(t - tau) M / sqrt(eps))`` at every
    output time.  ``stepped`` uses classical RK4 with
    ``dt <= 0.01 sqrt(eps) / (1 + max|mu|)`` and a step-doubling error check
    every ``check_every`` steps.
    """
    if times is None:
        times = np.linspace(tau, tau + t_max, n_times)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0) or times[0] < tau:
        raise ValueError("times must be increasing and start at or after tau")
    if mode == "frozen-exact":
        G, eps, _ = _as_generator(M, epsilon)
        G = -G / np.sqrt(eps)
        mats = [expm((t - tau) * G) for t in times]
    elif mode == "stepped":
        mats = _stepped(M, times, tau, dt, epsilon, error_limit, check_every)
        eps = epsilon if epsilon is not None else M.epsilon
    else:
        raise ValueError(f"unknown mode {mode!r}")
    norms = np.array([np.linalg.norm(S, 2) for S in mats])
    return FlowTrajectory(
        times=times,
        norms=norms,
        params={"epsilon": eps, "tau": tau, "gamma_target": gamma_target, "mode": mode},
        snapshots=np.array(mats) if snapshots else None,
    )


def _stepped(M, times, tau, dt, epsilon, error_limit, check_every):
    if callable(M) and not isinstance(M, BlockMatrix):
        provider = M
        M0 = provider(tau)
    else:
        const = M
        provider = lambda t: const  # noqa: E731
        M0 = M
    G0, eps, mu = _as_generator(M0, epsilon)
    limit = 0.01 * np.sqrt(eps) / (1.0 + mu)
    dt = limit if dt is None else min(dt, limit)
    scale = 1.0 / np.sqrt(eps)

    def rhs(t, S):
        G = _as_generator(provider(t), eps)[0]
        return -scale * (G @ S)

    def rk4(t, S, h):
        k1 = rhs(t, S)
        k2 = rhs(t + h / 2, S + h / 2 * k1)
        k3 = rhs(t + h / 2, S + h / 2 * k2)
        k4 = rhs(t + h, S + h * k3)
        return S + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    S = np.eye(G0.shape[0], dtype=complex)
    t = tau
    out = []
    steps = 0
    for target in times:
        while t < target - 1e-14 * max(1.0, abs(target)):
            h = min(dt, target - t)
            if steps % check_every == 0:
                full = rk4(t, S, h)
                half = rk4(t + h / 2, rk4(t, S, h / 2), h / 2)
                err = np.linalg.norm(full - half) / max(1.0, np.linalg.norm(half))
                if err > error_limit:
                    raise StepSizeError(f"local error {err:.3g} at t={t:.6g} exceeds {error_limit:g}")
                S = half
            else:
                S = rk4(t, S, h)
            t += h
            steps += 1
        out.append(S.copy())
    return out


def flow_batch(blocks: Sequence[BlockMatrix], t_max: float, workers: int | None = None, **kw):
    """Integrate several frozen blocks, in parallel when allowed."""
    return pmap(lambda b: integrate_flow(b, t_max, **kw), blocks, workers)


# --------------------------------------------------------------------------
# growth analysis


def fit_growth_rate(traj: FlowTrajectory, window: Sequence[float] | None = None) -> tuple[float, float]:
    """Least-squares slope of ``log |S|`` against time over ``window``.

    The default window is the second half of the trajectory.
    """
    t = traj.times
    if window is None:
        window = (t[0] + 0.5 * (t[-1] - t[0]), t[-1])
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    if sel.sum() < 5:
        raise ValueError("fit window holds fewer than 5 samples")
    x = t[sel]
    y = np.log(traj.norms[sel])
    coef = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((np.polyval(coef, x) - y) ** 2)))
    return float(coef[0]), resid


@dataclass(frozen=True)
class FlowBound:
    """Outcome of :func:`verify_flow_bound`.

    ``n_star`` is the smallest exponent with ``K <= C_cap |ln eps|^n_star``
    where ``K = max_t |S(t)| exp(-gamma (t - tau))``; ``C = K / |ln eps|^n_star``.
    """

    ok: bool
    C: float
    n_star: float
    K: float
    gamma_plus: float
    log_eps: float

    def as_dict(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "C": self.C,
            "n_star": self.n_star,
            "K": self.K,
            "gamma_plus": self.gamma_plus,
            "abs_log_eps": self.log_eps,
        }


def verify_flow_bound(
    traj: FlowTrajectory,
    gamma_plus: float,
    log_power_cap: float = 6.0,
    C_cap: float = 10.0,
    epsilon: float | None = None,
) -> FlowBound:
    """Check ``|S(t)| <= C |ln eps|^N exp(gamma_plus (t - tau))`` at the recorded times."""
    eps = traj.params.get("epsilon") if epsilon is None else epsilon
    tau = traj.params.get("tau", 0.0)
    L = abs(np.log(eps))
    K = float(np.max(traj.norms * np.exp(-gamma_plus * (traj.times - tau))))
    if K <= C_cap:
        return FlowBound(True, K, 0.0, K, gamma_plus, L)
    if L <= 1.0:
        return FlowBound(False, K, 0.0, K, gamma_plus, L)
    n_star = float(np.log(K / C_cap) / np.log(L))
    ok = n_star <= log_power_cap
    return FlowBound(ok, K / L**n_star, n_star, K, gamma_plus, L)
