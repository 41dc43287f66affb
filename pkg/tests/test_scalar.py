import numpy as np
import pytest

from forcedwave.errors import GammaOutOfRange, IterationStall
from forcedwave.grid import Grid, default_grid
from forcedwave.scalar import choose_lambda0, scalar_residual, solve_scalar_wave
from forcedwave.shift import ShiftProfile, normalize_translation

from conftest import PSET_C

EPS = 0.01
ALPHA = normalize_translation(ShiftProfile.sigmoid(2.0, 1.5), EPS)
GAMMA2 = 1 - PSET_C.h - PSET_C.b * (2 * PSET_C.a - 1)


def _grid(s):
    return default_grid(min(1.5, s), ALPHA.K, ALPHA.M)


class TestGrid:
    def test_minimum_points(self):
        with pytest.raises(ValueError):
            Grid(10.0, 100)

    def test_default_half_width(self):
        g = default_grid(0.5, K=1.0, M=3.0)
        assert g.L == 50.0 and g.n == 8001
        assert default_grid(5.0, K=4.0).L == 50.0
        assert default_grid(5.0, K=0.1, M=30.0).L == pytest.approx(40.1)

    def test_spacing(self):
        g = Grid(10.0, 401, center=2.0)
        assert g.z[0] == -8.0 and g.z[-1] == 12.0
        assert np.allclose(np.diff(g.z), g.h)


class TestScalarWave:
    @pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
    def test_chain_first_link(self, s):
        assert GAMMA2 == pytest.approx(0.4, abs=1e-15)
        w = solve_scalar_wave(1.0, s, 1.0, GAMMA2, ALPHA, _grid(s), rho=1.5, epsilon=EPS)
        assert w.residual <= 1e-10
        assert scalar_residual(w) == w.residual
        assert w.values[0] == GAMMA2 and w.values[-1] == 0.0
        assert np.min(w.values) >= 0.0 and np.max(w.values) <= GAMMA2
        assert w.sub_solution_margin() >= 0
        assert max(w.increase_history) <= 1e-13
        assert 0 < w.lambda0 <= 1.5

    def test_lambda0_condition(self):
        lam, off = choose_lambda0(1.0, 1.0, 1.0, 1.5, EPS)
        assert off == 0.0
        assert lam**2 - lam + EPS < 0
        assert lam == pytest.approx(0.999999 * min(1.5, 1.0, (1 + np.sqrt(1 - 4 * EPS)) / 2))

    def test_large_envelope_constant_uses_offset(self):
        lam, off = choose_lambda0(1.0, 1.0, 1.0, 0.8, 2.0)
        assert off > 0
        eps_t = 2.0 * np.exp(-0.8 * off)
        assert lam**2 - lam + eps_t < 0 and lam <= 0.8

    def test_zero_gamma(self):
        w = solve_scalar_wave(1.0, 1.0, 1.0, 0.0, ALPHA, _grid(1.0), rho=1.5, epsilon=EPS)
        assert np.all(w.values == 0.0)

    @pytest.mark.parametrize("gamma", [-0.1, 2.0, 3.0])
    def test_gamma_out_of_range(self, gamma):
        with pytest.raises(GammaOutOfRange):
            solve_scalar_wave(1.0, 1.0, 1.0, gamma, ALPHA, _grid(1.0))

    def test_iterates_never_increase(self):
        w = solve_scalar_wave(1.0, 1.0, 1.0, GAMMA2, ALPHA, _grid(1.0), rho=1.5, epsilon=EPS)
        assert len(w.increase_history) == w.iterations
        assert all(x <= 1e-13 for x in w.increase_history)

    def test_positive_heterogeneity_stalls(self):
        # alpha_hat > 0 on the left makes gamma a sub-solution, so iterates rise
        g = Grid(20.0, 801)
        bad = np.where(g.z < 0, 0.5, -2.0)
        with pytest.raises(IterationStall):
            solve_scalar_wave(1.0, 1.0, 1.0, 0.4, bad, g)

    def test_measured_envelope(self):
        w = solve_scalar_wave(1.0, 1.0, 1.0, GAMMA2, ALPHA, _grid(1.0), rho=1.5)
        assert w.envelope[0] == pytest.approx(EPS, rel=1e-3)
        assert w.sub_solution_margin() >= 0

    def test_second_order_in_space(self):
        L = 25.0
        vals = [solve_scalar_wave(1.0, 1.0, 1.0, GAMMA2, ALPHA, Grid(L, n)).values for n in (1001, 2001, 4001)]
        e1 = np.max(np.abs(vals[0] - vals[1][::2]))
        e2 = np.max(np.abs(vals[1][::2] - vals[2][::4]))
        assert np.log2(e1 / e2) >= 1.9
