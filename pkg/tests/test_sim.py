import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import R12_ROOT_POS, SQRT_GAMMA12_AT_POS
from resonalab.sim import (
    LatticeError,
    SimConfig,
    SimTrace,
    deviation_metrics,
    fourier_multiplier,
    lattice_frequencies,
    prepare_initial,
    step_run,
    wkb_profile,
)

L = np.pi / 2


def small(kg1, **kw):
    spec, beta = kg1
    opts = dict(seed_xi=[R12_ROOT_POS], seed_pair=(1, 2), t_end=0.2)
    opts.update(kw)
    return SimConfig(spec, beta, 0.01, 128, L, **opts)


class TestConfig:
    def test_defaults(self, kg1):
        cfg = small(kg1, t_end=None)
        assert cfg.dt == pytest.approx(0.005 * 0.1)
        assert cfg.t_end == pytest.approx(2 * 0.1 * np.log(100))
        assert cfg.seed_xi_lattice[0] == pytest.approx(1.44)

    def test_lattice_violation(self, kg1):
        spec, beta = kg1
        with pytest.raises(LatticeError):
            SimConfig(spec, beta, 0.01, 128, 1.0)

    def test_step_too_large(self, kg1):
        with pytest.raises(ValueError):
            small(kg1, dt=0.01)

    def test_seed_beyond_grid(self, kg1):
        spec, beta = kg1
        with pytest.raises(LatticeError):
            SimConfig(spec, beta, 0.01, 64, L, seed_xi=[1.5])

    def test_bad_mode(self, kg1):
        with pytest.raises(ValueError):
            small(kg1, mode="exact")

    def test_lattice_frequencies(self, kg1):
        eta = lattice_frequencies(small(kg1))
        assert eta.shape == (128, 1)
        assert np.allclose(np.sort(np.abs(eta[:, 0]))[:3], [0, 4, 4])


class TestPrepare:
    def test_seed_size(self, kg1):
        spec, beta = kg1
        e = np.zeros(6)
        e[1] = 1.0
        cfg = SimConfig(spec, beta, 1 / 400, 512, L, seed_xi=[1.46], seed_mode="vector",
                        seed_vector=e, mode="nonlinear")
        ua, u0 = prepare_initial(cfg)
        x = np.arange(512) * L / 512
        phi = sum(np.exp(-((x - L / 2 - m * L) ** 2) / (2 * 0.2**2)) for m in range(-3, 4))
        # the seed is added together with its complex conjugate
        assert np.max(np.abs(u0 - ua)) == pytest.approx(2 * (1 / 400) ** 2 * phi.max(), rel=1e-12)

    def test_zero_amplitude(self, kg1):
        ua, u0 = prepare_initial(small(kg1, amplitude=0.0))
        assert np.all(ua == 0) and np.any(u0 != 0)

    def test_wkb_is_real_and_moves(self, kg1):
        ua = wkb_profile(small(kg1))
        assert ua(0.0).dtype == float
        assert not np.allclose(ua(0.0), ua(0.01))

    def test_fourier_mass(self, kg1):
        spec, beta = kg1
        eps, n, width = 1 / 400, 512, 0.2
        e = np.zeros(6)
        e[0] = 1.0
        cfg = SimConfig(spec, beta, eps, n, L, seed_xi=[1.46], seed_mode="vector", seed_vector=e,
                        envelope_width=width)
        _, u0 = prepare_initial(cfg)
        spec_u = np.abs(np.fft.fft(u0[0])) ** 2
        eta = lattice_frequencies(cfg)[:, 0]
        centre = (1.46 + 1.0) / eps
        near = np.abs(np.abs(eta) - centre) <= 4 / width
        # oracle: a Gaussian of width sigma has spectral width 1/sigma; 4 widths hold all but ~e^-16
        assert spec_u[near].sum() / spec_u.sum() > 1 - 1e-6
        assert np.abs(eta[np.argmax(spec_u)]) == pytest.approx(centre)

    def test_growth_seed_needs_pair(self, kg1):
        with pytest.raises(ValueError):
            prepare_initial(small(kg1, seed_pair=None))

    def test_branch_seed(self, kg1):
        _, u0 = prepare_initial(small(kg1, seed_mode="branch", seed_branch=2, seed_xi=[0.5]))
        # branch 2 lives in the second field only
        assert np.all(u0[:3] == 0) and np.any(u0[3:] != 0)


class TestRun:
    def test_conservation_without_source(self, kg1):
        spec, beta = kg1
        cfg = small((spec.with_B(np.zeros((6, 6, 6))), beta), t_end=0.5)
        tr = step_run(cfg)
        assert np.max(np.abs(tr.deviation_L2 / tr.deviation_L2[0] - 1)) <= 1e-8

    def test_reality_nonlinear(self, kg1):
        tr = step_run(small(kg1, mode="nonlinear"))
        assert tr.imag_max <= 1e-10
        assert np.all(tr.deviation_L2 >= 0) and np.all(np.diff(tr.times) > 0)

    def test_superposition(self, kg1):
        a = step_run(small(kg1))
        b = step_run(small(kg1, seed_scale=2.0))
        assert np.allclose(b.deviation_L2, 2 * a.deviation_L2, rtol=1e-8)

    def test_step_convergence(self, kg1):
        a = step_run(small(kg1, t_end=0.4))
        b = step_run(small(kg1, t_end=0.4, dt=0.5 * 0.005 * 0.1))
        assert abs(a.deviation_L2[-1] / b.deviation_L2[-1] - 1) <= 0.01

    def test_growth_rate_small_grid(self, kg1):
        tr = step_run(small(kg1, t_end=None))
        rate = deviation_metrics(tr)[0]
        assert abs(rate * 0.1 - SQRT_GAMMA12_AT_POS) / SQRT_GAMMA12_AT_POS <= 0.2

    def test_non_resonant_control(self, kg1):
        tr = step_run(small(kg1, t_end=None, seed_mode="branch", seed_branch=2, seed_xi=[0.5]))
        assert deviation_metrics(tr)[0] * 0.1 <= 0.1 * SQRT_GAMMA12_AT_POS

    def test_blowup_guard(self, kg1):
        tr = step_run(small(kg1), blowup=1e-12)
        assert tr.status == "blowup"
        assert len(tr.times) < 101

    def test_semiclassical_index_zero_is_l2(self, kg1):
        tr = step_run(small(kg1, sobolev_index=0.0, t_end=0.05))
        assert np.allclose(tr.semiclassical, tr.deviation_L2, rtol=1e-12)

    def test_csv(self, kg1):
        tr = step_run(small(kg1, t_end=0.05, n_out=6))
        lines = tr.to_csv().strip().splitlines()
        assert lines[0] == "t,deviation_L2,deviation_Linf,running_rate" and len(lines) == 7


class TestMetrics:
    def test_exponential(self):
        t = np.linspace(0, 1, 50)
        r, res, amp = deviation_metrics(SimTrace(t, np.exp(3 * t), np.exp(3 * t)))
        assert r == pytest.approx(3, abs=1e-9) and res < 1e-9 and amp == pytest.approx(np.e**3)

    def test_constant(self):
        t = np.linspace(0, 1, 50)
        assert abs(deviation_metrics(SimTrace(t, np.ones(50), np.ones(50)))[0]) < 1e-12

    def test_degenerate(self):
        t = np.linspace(0, 1, 50)
        with pytest.raises(ValueError):
            deviation_metrics(SimTrace(t, np.ones(50), np.ones(50)), window=(0.5, 0.51))


class TestFrequencyShift:
    @staticmethod
    def _band_limited(rng, n, d, comps=None):
        shape = ((comps,) if comps else ()) + (n,) * d
        vh = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        idx = np.fft.fftfreq(n, 1 / n)
        mask = np.ones((n,) * d, dtype=bool)
        for a in range(d):
            sh = [1] * d
            sh[a] = n
            mask &= (np.abs(idx) < n // 4).reshape(sh)
        vh = vh * mask
        return np.fft.ifftn(vh, axes=tuple(range(-d, 0)))

    @given(st.integers(-2, 2), st.integers(0, 1000))
    def test_scalar_symbol(self, p, seed):
        rng = np.random.default_rng(seed)
        n, eps = 64, 1 / 8
        length = 2 * np.pi
        k = 1.0  # k/eps = 8 lattice steps
        x = np.arange(n) * length / n
        v = self._band_limited(rng, n, 1)
        sigma = lambda xi: np.sqrt(1 + xi[:, 0] ** 2) + 0.3 * xi[:, 0]  # noqa: E731
        theta = np.exp(1j * p * k * x / eps)
        lhs = fourier_multiplier(sigma, theta * v, eps, length)
        rhs = theta * fourier_multiplier(sigma, v, eps, length, shift=[p * k])
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(lhs)))

    def test_matrix_symbol_plane(self, kg2, rng):
        spec, beta = kg2
        n, eps, length = 32, 1 / 4, 2 * np.pi
        v = self._band_limited(rng, n, 2, comps=spec.N)
        from resonalab.symbol import _symbols

        sigma = lambda xi: _symbols(spec, xi)  # noqa: E731
        g = np.arange(n) * length / n
        X, Y = np.meshgrid(g, g, indexing="ij")
        theta = np.exp(1j * (beta.k[0] * X + beta.k[1] * Y) / eps)
        lhs = fourier_multiplier(sigma, theta[None] * v, eps, length)
        rhs = theta[None] * fourier_multiplier(sigma, v, eps, length, shift=beta.k)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(lhs)))
