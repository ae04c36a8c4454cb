import json
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from resonalab.kg import KGParams, build_kg
from resonalab.symbol import (
    BranchCrossingError,
    SymmetrizationWarning,
    SystemSpec,
    bilinear_apply,
    branch_values,
    load_system,
    spectral_decompose,
    symbol_at,
    symbol_regularity_check,
    system_to_dict,
    trivial_system,
    validate_system,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def _check_algebra(spec, dec, xi, tol=1e-10):
    P = dec.projectors
    N = spec.N
    assert np.linalg.norm(P.sum(axis=0) - np.eye(N), 2) <= tol
    for a in range(dec.J):
        for b in range(dec.J):
            target = P[a] if a == b else np.zeros((N, N))
            assert np.linalg.norm(P[a] @ P[b] - target, 2) <= tol
    H = symbol_at(spec, xi)
    assert np.linalg.norm(np.einsum("j,jab->ab", dec.lambdas, P) - H, 2) <= tol


class TestSymbolAt:
    def test_kg_at_origin(self, kg1):
        spec, _ = kg1
        w = np.sort(np.linalg.eigvalsh(symbol_at(spec, [0.0])))
        # dense-solver oracle on A0/i
        oracle = np.sort(np.linalg.eigvals(-1j * np.array(spec.A0)).real)
        assert np.allclose(w, oracle, atol=1e-14)
        assert np.allclose(w, [-1, -1, 0, 0, 1, 1], atol=1e-14)

    def test_zero_system(self):
        spec = trivial_system(2, 3)
        assert np.array_equal(symbol_at(spec, [0.0, 0.0]), np.zeros((3, 3)))

    def test_kg_spectrum_at_two(self, kg1):
        spec, _ = kg1
        w = np.sort(np.linalg.eigvalsh(symbol_at(spec, [2.0])))
        expected = np.sort([np.sqrt(5), -np.sqrt(5), np.sqrt(2), -np.sqrt(2), 0, 0])
        assert np.allclose(w, expected, atol=1e-12)

    def test_dimension_mismatch(self, kg1):
        with pytest.raises(ValueError):
            symbol_at(kg1[0], [1.0, 2.0])

    @given(st.lists(finite, min_size=2, max_size=2))
    def test_hermitian(self, xi):
        spec = build_kg(KGParams(d=2))
        H = symbol_at(spec, xi)
        assert np.max(np.abs(H - H.conj().T)) <= 1e-12


class TestSpectralDecompose:
    def test_kg_origin_labels(self, kg2):
        spec, _ = kg2
        dec = spectral_decompose(spec, [0.0, 0.0])
        assert np.allclose(dec.lambdas, [1, 1, -1, -1, 0])
        assert dec.multiplicities == (1, 1, 1, 1, 4)

    def test_trivial_single_branch(self):
        spec = trivial_system(1, 3)
        dec = spectral_decompose(spec, [0.4])
        assert dec.J == 1
        assert np.allclose(dec.projectors[0], np.eye(3))
        assert dec.lambdas[0] == 0.0

    def test_kg_2d_point(self, kg2):
        spec, _ = kg2
        dec = spectral_decompose(spec, [3.0, 4.0])
        l1, l2 = np.sqrt(26.0), np.sqrt(7.25)
        assert np.allclose(dec.lambdas, [l1, l2, -l2, -l1, 0.0], atol=1e-12)
        w = np.sort(np.linalg.eigvalsh(symbol_at(spec, [3.0, 4.0])))
        assert np.allclose(w, np.sort(np.repeat(dec.lambdas, dec.multiplicities)), atol=1e-10)

    def test_numeric_matches_closed(self, kg2, rng):
        spec, _ = kg2
        for xi in rng.uniform(-7, 7, size=(50, 2)):
            a = spectral_decompose(spec, xi, "closed")
            b = spectral_decompose(spec, xi, "numeric")
            # numeric path orders descending: lambda1, lambda2, lambda5, lambda3, lambda4
            order = [0, 1, 4, 2, 3]
            assert np.allclose(a.lambdas[order], b.lambdas, atol=1e-10)
            assert np.allclose(a.projectors[order], b.projectors, atol=1e-9)

    def test_numeric_descending(self, kg1):
        spec, _ = kg1
        dec = spectral_decompose(spec, [0.3], "numeric")
        assert np.all(np.diff(dec.lambdas) < 0)

    def test_numeric_gauge_matches_closed_vectors(self, kg1):
        spec, _ = kg1
        a = spectral_decompose(spec, [1.7], "closed")
        b = spectral_decompose(spec, [1.7], "numeric")
        assert np.allclose(a.vector(1), b.vector(1), atol=1e-12)

    def test_crossing_detected(self):
        # two decoupled transport speeds meet at xi = 0 when A0 = 0
        A = np.diag([1.0, -1.0])[None]
        spec = SystemSpec(np.zeros((2, 2)), A, np.zeros((2, 2, 2)))
        spectral_decompose(spec, [0.5])
        with pytest.raises(BranchCrossingError):
            spectral_decompose(spec, [0.0])

    def test_small_perturbation_continuity(self, kg1):
        spec, _ = kg1
        a = spectral_decompose(spec, [0.8], "numeric")
        b = spectral_decompose(spec, [0.8 + 1e-4], "numeric")
        lip = max(np.linalg.norm(m, 2) for m in spec.A)
        assert np.all(np.abs(a.lambdas - b.lambdas) <= lip * 1e-4 + 1e-14)

    @given(st.lists(finite, min_size=1, max_size=1))
    def test_algebra_1d(self, xi):
        spec = build_kg(KGParams(d=1))
        # at xi = 0 the two positive branches touch; only the closed form labels them
        methods = ("closed", "numeric") if abs(xi[0]) > 1e-2 else ("closed",)
        for method in methods:
            _check_algebra(spec, spectral_decompose(spec, xi, method), xi)

    @given(st.lists(finite, min_size=2, max_size=2))
    def test_algebra_2d(self, xi):
        spec = build_kg(KGParams(d=2))
        _check_algebra(spec, spectral_decompose(spec, xi), xi)

    def test_branch_values_vectorised(self, kg2, rng):
        spec, _ = kg2
        xis = rng.uniform(-5, 5, size=(20, 2))
        vals = branch_values(spec, xis)
        for xi, row in zip(xis, vals):
            assert np.allclose(row, spectral_decompose(spec, xi).lambdas)

    def test_branch_values_numeric_path(self, rng):
        spec = build_kg(KGParams(d=1))
        bare = SystemSpec(spec.A0, spec.A, spec.B)
        xis = rng.uniform(-5, 5, size=(10, 1))
        vals = branch_values(bare, xis)
        for xi, row in zip(xis, vals):
            assert np.allclose(row, spectral_decompose(bare, xi).lambdas, atol=1e-12)


class TestValidateSystem:
    def test_kg_clean(self, kg1):
        rep = validate_system(kg1[0])
        assert rep.ok
        assert rep.A0_violation == 0.0 and rep.A_violation == 0.0 and rep.B_violation == 0.0

    def test_skew_defect(self, kg1):
        spec = kg1[0]
        A0 = np.array(spec.A0)
        A0[0, 1] += 1e-6
        rep = validate_system(SystemSpec(A0, spec.A, spec.B))
        assert not rep.A0_skew
        assert rep.A0_violation == pytest.approx(1e-6, rel=1e-9)

    def test_asymmetric_B_symmetrized(self, kg1):
        spec = kg1[0]
        B = np.array(spec.B)
        B[0, 1, 2] = 1.0
        with pytest.warns(SymmetrizationWarning):
            s2 = SystemSpec(spec.A0, spec.A, B)
        assert s2.symmetrized
        assert np.array_equal(s2.B, s2.B.transpose(0, 2, 1))
        assert not validate_system(s2).B_symmetric

    def test_arrays_frozen(self, kg1):
        with pytest.raises(ValueError):
            kg1[0].A0[0, 0] = 1.0


class TestBilinear:
    def test_directional_polarization(self, kg1):
        spec, beta = kg1
        M = bilinear_apply(spec, beta.polarization, mode="directional")
        U = np.arange(1, 7) + 0.5j
        got = M @ U
        # u-block: (u1, u2, u3), v-block: (v1, v2, v3)
        u2, u3, v2, v3 = U[1], U[2], U[4], U[5]
        w = np.sqrt(2.0)
        expected = np.array([0, u2 + v2, 0, 0, 1j / w * (u3 + v3), 0]) / np.sqrt(2)
        assert np.allclose(got, expected, atol=1e-14)

    def test_zero_direction(self, kg1):
        assert np.allclose(bilinear_apply(kg1[0], np.zeros(6), mode="directional"), 0)

    def test_pair_value(self, kg1):
        spec, _ = kg1
        U = np.zeros(6)
        U[1] = 1.0
        U[4] = 1.0
        out = bilinear_apply(spec, U, U)
        oracle = np.zeros(6)
        oracle[1] = (1 * 1 + 1 * 1 + 1 * 1) / 2
        assert np.allclose(out, oracle)

    def test_pair_needs_two(self, kg1):
        with pytest.raises(ValueError):
            bilinear_apply(kg1[0], np.zeros(6))

    @given(st.lists(finite, min_size=12, max_size=12))
    def test_pair_symmetric(self, vals):
        spec = build_kg(KGParams(d=1))
        u, v = np.array(vals[:6]), np.array(vals[6:])
        assert np.allclose(bilinear_apply(spec, u, v), bilinear_apply(spec, v, u), atol=0)


class TestRegularity:
    def test_kg_bounded(self, kg1, rng):
        spec, _ = kg1
        xs = np.linspace(-10, 10, 41)[:, None]
        rep = symbol_regularity_check(spec, xs)
        assert rep.ok
        assert np.all(rep.lambda_constants <= 1.0 + 1e-6)

    def test_trivial_projector_derivative(self):
        rep = symbol_regularity_check(trivial_system(1, 2), np.linspace(-1, 1, 5))
        assert np.all(rep.projector_constants == 0)

    def test_zero_branch_near_origin(self, kg2):
        spec, _ = kg2
        xs = np.array([[1e-3, 0.0], [0.0, 2e-3], [-1e-3, 1e-3], [0.5, 0.5]])
        rep = symbol_regularity_check(spec, xs)
        assert np.all(np.isfinite(rep.projector_constants))
        assert rep.projector_constants[4] < 10


class TestLoading:
    def test_builtin(self):
        spec = load_system({"builtin": "klein-gordon", "d": 2, "omega0": 1.0, "theta0": 0.5})
        assert spec.N == 8 and spec.closed_form is not None

    def test_round_trip(self, kg1, tmp_path):
        path = tmp_path / "sys.json"
        path.write_text(json.dumps(system_to_dict(kg1[0])))
        spec = load_system(path)
        assert np.array_equal(spec.A0, kg1[0].A0)
        assert np.array_equal(spec.B, kg1[0].B)

    def test_missing_field(self):
        with pytest.raises(ValueError):
            load_system({"d": 1, "N": 2, "A0": [[0, 0], [0, 0]]})

    def test_declared_size_mismatch(self):
        doc = system_to_dict(trivial_system(1, 2))
        doc["N"] = 3
        with pytest.raises(ValueError):
            load_system(doc)

    def test_unknown_builtin(self):
        with pytest.raises(ValueError):
            load_system({"builtin": "wave"})

    def test_with_B_keeps_closed_form(self, kg1):
        spec = kg1[0].with_B(np.zeros((6, 6, 6)))
        assert spec.closed_form is kg1[0].closed_form
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            spec.with_B(np.zeros((6, 6, 6)))
