import numpy as np
import pytest

from forcedwave.bounds import build_bounds
from forcedwave.errors import HypothesisViolation, MaxIterations, NewtonDiverged
from forcedwave.grid import Grid
from forcedwave.model import critical_speeds, steady_states
from forcedwave.shift import ShiftProfile
from forcedwave.wave import (
    build_estar_chain,
    grid_for_pair,
    large_k_sign_margin,
    solve_system,
    system_residual,
    verify_chain,
    wave_diagnostics,
)

from conftest import PSET_A, PSET_B, PSET_C

SHIFT = ShiftProfile.sigmoid(2.0, 1.5)


@pytest.fixture(scope="module")
def wave_a():
    pair = build_bounds(PSET_A, 2.5, SHIFT, "Eu-super")
    return pair, solve_system(PSET_A, 2.5, None, pair)


@pytest.fixture(scope="module")
def wave_b():
    pair = build_bounds(PSET_B, 2.5, SHIFT, "Estar-super")
    return pair, solve_system(PSET_B, 2.5, None, pair)


class TestSolveSystem:
    def test_grid_resolves_tail(self, wave_a):
        pair, w = wave_a
        assert pair.tail_rate() * w.grid.L >= 25
        assert w.grid.L >= 10 * pair.shift.K + 10

    def test_pset_a(self, wave_a):
        pair, w = wave_a
        assert w.residual <= 1e-10
        assert w.sandwiched, w.sandwich_margin
        assert w.left_state == pytest.approx((1, 0, 0), abs=1e-6)
        assert w.right_state == (0.0, 0.0, 0.0)
        assert not w.negative_overshoot

    def test_pset_b(self, wave_b):
        pair, w = wave_b
        assert w.sandwiched
        assert w.left_state == pytest.approx((11 / 12, 0.0, 5 / 6), abs=1e-6)
        st = steady_states(PSET_B)
        assert w.left_state == pytest.approx(st.E_star_up, abs=1e-6)

    @pytest.mark.parametrize("params,s,scenario", [
        (PSET_A, 2.0, "Eu-critical"),
        (PSET_B, critical_speeds(PSET_B).s2_dstar, "Estar-critical"),
    ])
    def test_critical_speeds(self, params, s, scenario):
        w = solve_system(params, s, None, build_bounds(params, s, SHIFT, scenario))
        assert w.residual <= 1e-10 and w.sandwiched

    def test_residual_decreases_monotonically(self, wave_a):
        hist = wave_a[1].residual_history
        assert all(b < a for a, b in zip(hist, hist[1:]))

    def test_residual_recomputed(self, wave_a):
        _, w = wave_a
        F = system_residual(w.phi, PSET_A, 2.5, w.shift(w.z), w.grid.h)
        assert np.max(np.abs(F)) <= 1e-10

    def test_invaded_boundary_loses_sandwich(self):
        # pinning exactly (1,0,0) at -L lets the invaders vanish identically
        pair = build_bounds(PSET_A, 2.5, SHIFT, "Eu-super")
        w = solve_system(PSET_A, 2.5, None, pair, left_bc="invaded")
        assert w.left_state == (1.0, 0.0, 0.0)
        assert not w.sandwiched

    def test_zero_seed_misuse(self):
        g = Grid(30.0, 1201)
        pair = build_bounds(PSET_A, 2.5, SHIFT, "Eu-super")
        try:
            w = solve_system(PSET_A, 2.5, pair.shift, np.zeros((3, g.n)), g, invaded=(1.0, 0.0, 0.0))
        except (NewtonDiverged, MaxIterations):
            return
        from forcedwave.wave import sandwich_check
        assert not all(sandwich_check(w, pair))

    def test_max_iterations(self):
        pair = build_bounds(PSET_A, 2.5, SHIFT, "Eu-super")
        with pytest.raises(MaxIterations):
            solve_system(PSET_A, 2.5, None, pair, max_iter=1)

    def test_second_order_in_space(self):
        pair = build_bounds(PSET_A, 2.5, SHIFT, "Eu-super")
        L = grid_for_pair(pair).L
        sols = [solve_system(PSET_A, 2.5, None, pair, Grid(L, n)).phi for n in (2001, 4001, 8001)]
        e1 = np.max(np.abs(sols[0] - sols[1][:, ::2]))
        e2 = np.max(np.abs(sols[1][:, ::2] - sols[2][:, ::4]))
        assert np.log2(e1 / e2) >= 1.9

    def test_translation_equivariance(self):
        pair = build_bounds(PSET_A, 2.5, SHIFT, "Eu-super")
        g = Grid(grid_for_pair(pair).L, 4001)
        w0 = solve_system(PSET_A, 2.5, None, pair, g)
        dz = 1.7
        moved = pair.shift.translated(pair.shift.M + dz)
        g1 = Grid(g.L, g.n, center=dz)
        seed = pair.midpoint(g.z) * 1.02
        seed[:, 0] = w0.phi[:, 0]
        w1 = solve_system(PSET_A, 2.5, moved, seed, g1, invaded=pair.invaded, left_bc="seed")
        assert w1.iterations > 0
        assert np.max(np.abs(w1.phi - w0.phi)) <= 1e-9

    def test_export(self, wave_a, tmp_path):
        _, w = wave_a
        path = w.export(tmp_path / "wave.csv")
        assert path.read_text().splitlines()[0] == "z,phi1,phi2,phi3"
        assert (tmp_path / "wave.json").exists()
        back = np.loadtxt(path, delimiter=",", skiprows=1)
        assert np.array_equal(back[:, 1:].T, w.phi)


class TestDiagnostics:
    def test_pset_a_limits(self, wave_a):
        _, w = wave_a
        rep = wave_diagnostics(w, steady_states(PSET_A))
        assert rep.right_distances["E0"] < 1e-6
        assert rep.left_nearest == "E_u"
        assert rep.decay_rate_left_phi2 == pytest.approx(0.5, rel=0.1)

    def test_pset_b_decay(self, wave_b):
        pair, w = wave_b
        rep = wave_diagnostics(w)
        assert rep.left_nearest == "E_star_up"
        assert rep.decay_rate_left_phi2 == pytest.approx(pair.constants.lambda3, rel=0.1)

    def test_right_decay_rates_negative(self, wave_a):
        rep = wave_diagnostics(wave_a[1])
        assert all(r < 0 for r in rep.decay_rate_right)

    def test_zero_solution_distances(self, wave_a):
        _, w = wave_a
        from dataclasses import replace
        zero = replace(w, phi=np.zeros_like(w.phi), left_state=(0.0, 0.0, 0.0))
        rep = wave_diagnostics(zero)
        for name, state in steady_states(PSET_A).candidates().items():
            assert rep.left_distances[name] == pytest.approx(np.max(np.abs(state)))


class TestChain:
    @pytest.mark.parametrize("s", [0.5, 1.0, 2.0])
    def test_reaches_coexistence(self, s):
        ch = build_estar_chain(PSET_C, s, SHIFT)
        assert ch.gamma2 == pytest.approx(0.4, abs=1e-15)
        assert ch.gamma3 == pytest.approx(0.2, abs=1e-14)
        target = (0.0, 1.02 / 1.06, 2 / 1.06)
        assert ch.wave.left_state == pytest.approx(target, abs=1e-4)
        assert ch.left_probe == pytest.approx(target, abs=1e-4)
        assert ch.wave.sandwiched
        assert verify_chain(ch).passed

    def test_unpacks_as_pair_and_wave(self):
        pair, wave = build_estar_chain(PSET_C, 1.0, SHIFT)
        assert pair.scenario == "Estable-chain" and wave.residual <= 1e-10

    def test_predation_threshold(self):
        with pytest.raises(HypothesisViolation) as err:
            build_estar_chain(PSET_C.replace(b=0.05), 1.0, SHIFT)
        assert err.value.condition == "predation_threshold"

    def test_large_k(self):
        ch = build_estar_chain(PSET_C.replace(k=20), 1.0, SHIFT)
        margin, _ = large_k_sign_margin(ch)
        assert margin < 0
        assert np.max(np.abs(ch.wave.phi[0])) <= 1e-8

    def test_baseline_k_sign_fails(self):
        ch = build_estar_chain(PSET_C, 1.0, SHIFT)
        margin, where = large_k_sign_margin(ch)
        assert margin > 0 and ch.wave.z[0] <= where <= ch.wave.z[-1]
