import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from forcedwave.bounds import (
    BoundPair,
    bound_residuals,
    build_bounds,
    export_pair,
    verification_grid,
    verify_pair,
)
from forcedwave.errors import GridTouchesBreakpoint, HypothesisViolation, SpeedRegimeMismatch
from forcedwave.model import ModelParams, critical_speeds, steady_states
from forcedwave.shift import ShiftProfile

from conftest import PSET_A, PSET_B

SHIFT = ShiftProfile.sigmoid(2.0, 1.5)
S2DSTAR_B = critical_speeds(PSET_B).s2_dstar
CASES = [
    (PSET_A, 2.5, "Eu-super"),
    (PSET_A, 2.0, "Eu-critical"),
    (PSET_B, 2.5, "Estar-super"),
    (PSET_B, S2DSTAR_B, "Estar-critical"),
]


def _all_profiles(pair):
    return pair.upper + pair.lower


class TestConstants:
    def test_eu_super_pset_a(self):
        c = build_bounds(PSET_A, 2.5, SHIFT, "Eu-super").constants
        assert (c.lambda1, c.lambda2) == pytest.approx((0.5, 2.0), abs=1e-14)
        assert c.mu1 == c.mu2 == pytest.approx(0.75)
        assert c.lambda1**2 - 2.5 * c.mu1 + 1 == pytest.approx(0.25 - 1.875 + 1)
        assert 0.75**2 - 2.5 * 0.75 + 1 == pytest.approx(-0.3125)
        assert c.lower_bounds["q1"] == pytest.approx(2 * 1.31 / 0.3125, rel=1e-12)
        assert c.lower_bounds["q1"] == pytest.approx(8.384, rel=1e-12)
        assert c.q1 == pytest.approx(8.8032, rel=1e-12)
        assert c.z1 == pytest.approx(-math.log(8.8032) / 0.25, rel=1e-12)
        assert c.z1 == pytest.approx(-8.706, abs=1e-2)
        # the breakpoint is where e^{lambda1 z} = q1 e^{mu1 z}
        assert math.exp(0.5 * c.z1) == pytest.approx(c.q1 * math.exp(0.75 * c.z1), rel=1e-12)

    def test_eu_critical_pset_a(self):
        pair = build_bounds(PSET_A, 2.0, SHIFT, "Eu-critical", epsilon=0.05)
        c = pair.constants
        assert c.lambda_u == pytest.approx(1.0)
        assert c.B0 == pytest.approx(2.718282, abs=1e-6)
        assert c.z_u == pytest.approx(-1.0)
        # independent evaluation of the amplitude bound
        B0, eps = math.e, 0.05
        body = 4 * 2 * B0 * (eps * (5 / (2 * B0)) ** 2.5 + 1.3 * B0 * (7 / (2 * B0)) ** 3.5)
        assert c.lower_bounds["q3"] == pytest.approx(max(math.e, body), rel=1e-12)
        assert c.lower_bounds["q3"] == pytest.approx(187, rel=0.01)
        assert c.z3 < c.z_u and c.z4 < c.z_u

    def test_estar_super_pset_b(self):
        c = build_bounds(PSET_B, 2.5, SHIFT, "Estar-super").constants
        assert c.lambda3 == pytest.approx(0.816987, abs=1e-6)
        assert c.lambda4 == pytest.approx(1.683013, abs=1e-6)
        assert c.nu1 == pytest.approx(1.225481, abs=1e-6)
        A2 = c.nu1**2 - 2.5 * c.nu1 + 3 * steady_states(PSET_B).beta_up
        assert A2 < 0
        assert c.eta1 == pytest.approx(1.05 * max(1.0, 3 * 1.31 / -A2), rel=1e-12)
        assert c.B1 == pytest.approx(3 - 5 / 6)

    def test_estar_critical_breakpoint_order(self):
        c = build_bounds(PSET_B, S2DSTAR_B, SHIFT, "Estar-critical").constants
        assert c.B2 == pytest.approx(c.lambda_star * math.e)
        assert c.z6 < c.z_star

    @pytest.mark.parametrize("params,s,scenario", CASES)
    def test_amplitudes_admissible(self, params, s, scenario):
        c = build_bounds(params, s, SHIFT, scenario).constants
        assert all(c.amplitudes_admissible().values())
        for name, lb in c.lower_bounds.items():
            assert getattr(c, name) == pytest.approx(1.05 * lb)

    @pytest.mark.parametrize("params,s,scenario", [CASES[0], CASES[2]])
    def test_auxiliary_rates_inside_interval(self, params, s, scenario):
        c = build_bounds(params, s, SHIFT, scenario).constants
        lo, hi = (c.lambda1, c.lambda2) if scenario.startswith("Eu") else (c.lambda3, c.lambda4)
        for rate in (c.mu1, c.mu2, c.nu1):
            if rate is not None:
                assert lo < rate < min(hi, 2 * lo)

    @pytest.mark.parametrize("params,s,scenario", CASES)
    def test_lower_bounds_grow_with_epsilon(self, params, s, scenario):
        small = build_bounds(params, s, SHIFT, scenario, epsilon=0.005).constants.lower_bounds
        large = build_bounds(params, s, SHIFT, scenario, epsilon=0.05).constants.lower_bounds
        assert all(large[k] >= small[k] for k in small)

    def test_shift_normalized_to_epsilon(self):
        pair = build_bounds(PSET_A, 2.5, SHIFT, "Eu-super")
        assert pair.constants.M == pytest.approx(math.log(2 / 0.01) / 1.5)
        assert pair.shift.M == pair.constants.M


class TestPreconditions:
    def test_hypothesis_named(self):
        with pytest.raises(HypothesisViolation) as err:
            build_bounds(PSET_A.replace(r1=2), 2.5, SHIFT, "Eu-super")
        assert err.value.condition == "prey_growth_margin"

    @pytest.mark.parametrize("s", [2.0, 1.5])
    def test_super_at_or_below_critical(self, s):
        with pytest.raises(SpeedRegimeMismatch):
            build_bounds(PSET_A, s, SHIFT, "Eu-super")

    def test_critical_off_critical(self):
        with pytest.raises(SpeedRegimeMismatch):
            build_bounds(PSET_A, 2.5, SHIFT, "Eu-critical")

    def test_envelope_rate_checked(self):
        with pytest.raises(HypothesisViolation) as err:
            build_bounds(PSET_A, 2.2, ShiftProfile.sigmoid(2.0, 0.5), "Eu-super")
        assert err.value.condition == "envelope_rate"

    def test_unknown_scenario(self):
        with pytest.raises(ValueError):
            build_bounds(PSET_A, 2.5, SHIFT, "Ev-super")


class TestProfileValues:
    def test_upper2_continuous_at_zero(self):
        up2 = build_bounds(PSET_A, 2.5, SHIFT, "Eu-super").upper[1]
        assert up2(0.0) == 1.0
        left, right = up2.one_sided(0.0, 1)
        assert left == pytest.approx(0.5) and right == 0.0

    def test_lower3_critical_vanishes_at_z4(self):
        pair = build_bounds(PSET_A, 2.0, SHIFT, "Eu-critical")
        lo3, z4 = pair.lower[2], pair.constants.z4
        left, right = lo3.one_sided(z4, 0)
        assert abs(left) < 1e-9 * lo3.eval(z4 / 2) + 1e-300 and right == 0.0

    @pytest.mark.parametrize("params,s,scenario", CASES)
    def test_continuous_and_nonnegative(self, params, s, scenario):
        pair = build_bounds(params, s, SHIFT, scenario)
        z = verification_grid(pair)
        for prof in _all_profiles(pair):
            assert max(prof.continuity_gaps(), default=0.0) < 1e-12
            assert np.min(prof(z)) >= 0.0

    @pytest.mark.parametrize("params,s,scenario", CASES)
    def test_exact_derivatives(self, params, s, scenario):
        pair = build_bounds(params, s, SHIFT, scenario)
        rng = np.random.default_rng(7)
        h = 1e-6
        for prof in _all_profiles(pair):
            z = prof.interior_points(-20, 20, 100, rng)
            for order in (1, 2):
                lower = prof.eval(z, order - 1)
                fd = (prof.eval(z + h, order - 1) - prof.eval(z - h, order - 1)) / (2 * h)
                exact = prof.eval(z, order)
                scale = np.max(np.abs(lower)) + np.max(np.abs(exact))
                assert np.all(np.abs(fd - exact) <= 1e-7 * np.maximum(np.abs(exact), 1e-3 * scale))

    @pytest.mark.parametrize("params,s,scenario", CASES)
    def test_limits_at_minus_sixty(self, params, s, scenario):
        pair = build_bounds(params, s, SHIFT, scenario)
        for i, prof in enumerate(_all_profiles(pair)):
            state = pair.invaded[i % 3]
            tail = sum(
                abs(t.coef) * 60.0**t.power * math.exp(-t.rate * 60.0)
                for t in prof.pieces[0] if t.rate > 0
            )
            assert abs(prof(-60.0) - state) <= 1e-10 + tail


class TestResiduals:
    def test_upper1_below_shift(self):
        pair = build_bounds(PSET_A, 2.5, SHIFT, "Eu-super")
        rep = bound_residuals(pair, keep_curves=True)
        z = rep.curves["z"]
        # (1 + alpha) - 1 rounds alpha to a multiple of 2**-53
        assert np.all(rep.curves["U1"] <= PSET_A.r1 * pair.shift(z) + 2e-16)

    @pytest.mark.parametrize("params,s,scenario", CASES)
    def test_zero_where_lower_vanishes(self, params, s, scenario):
        pair = build_bounds(params, s, SHIFT, scenario)
        rep = bound_residuals(pair, keep_curves=True)
        z = rep.curves["z"]
        for i, prof in enumerate(pair.lower, start=1):
            dead = prof(z) == 0.0
            assert np.all(rep.curves[f"L{i}"][dead] == 0.0)

    def test_grid_touching_breakpoint(self):
        pair = build_bounds(PSET_A, 2.5, SHIFT, "Eu-super")
        with pytest.raises(GridTouchesBreakpoint):
            bound_residuals(pair, grid=np.array([-1.0, 0.0, 1.0]))

    def test_scaled_signs_match_plain(self):
        pair = build_bounds(PSET_A, 2.5, SHIFT, "Eu-super")
        plain = bound_residuals(pair, keep_curves=True)
        scaled = bound_residuals(pair, keep_curves=True, scaled=True)
        for name in ("U2", "L2", "U3", "L3"):
            a, b = plain.curves[name], scaled.curves[name]
            big = np.abs(a) > 1e-200
            assert np.all(np.sign(a[big]) == np.sign(b[big]))


class TestVerifyPair:
    @pytest.mark.parametrize("params,s,scenario", CASES)
    def test_constructed_pairs_verify(self, params, s, scenario):
        rep = verify_pair(build_bounds(params, s, SHIFT, scenario), tol=1e-10)
        assert rep.passed, rep.first_failure
        names = {n for n, _, _ in rep.checks}
        assert {"U1", "U2", "U3", "L1", "L2", "L3", "order1", "order2", "order3"} <= names
        assert any(n.startswith("kink") for n in names)

    @pytest.mark.parametrize("params,s,scenario", [CASES[1], CASES[3]])
    def test_critical_pairs_verify_through_their_tails(self, params, s, scenario):
        # the lower bounds only leave 0 near z3, z4, z6 (thousands of units out);
        # rescaled residuals keep those regions representable
        pair = build_bounds(params, s, SHIFT, scenario)
        far = 1.05 * min(pair.breakpoints())
        z = np.unique(np.concatenate([np.linspace(far, 60, 400_001)] + [
            np.linspace(b - 1, b + 1, 2001) for b in pair.breakpoints()
        ]))
        bp = np.asarray(pair.breakpoints())
        z = z[np.min(np.abs(z[:, None] - bp[None]), axis=1) >= 1e-6]
        rep = verify_pair(pair, grid=z, tol=1e-10, scaled=True)
        assert rep.passed, rep.first_failure

    def test_undersized_q1_detected(self):
        pair = build_bounds(PSET_A, 2.5, SHIFT, "Eu-super", overrides={"q1": 1.01})
        rep = verify_pair(pair)
        name, detail = rep.first_failure
        assert name == "L2"
        assert detail["at"] < pair.constants.z1

    def test_swapped_order_fails(self):
        pair = build_bounds(PSET_A, 2.5, SHIFT, "Eu-super")
        swapped = BoundPair(pair.lower, pair.upper, pair.constants, pair.scenario,
                            pair.params, pair.s, pair.shift, pair.invaded)
        rep = verify_pair(swapped)
        fails = [n for n, ok, _ in rep.checks if not ok]
        assert "order1" in fails
        z = verification_grid(pair)
        first_diff = z[np.argmax(pair.upper[0](z) - pair.lower[0](z) > 1e-10)]
        detail = dict((n, d) for n, _, d in rep.checks)["order1"]
        assert detail["first_violation"] == first_diff


@st.composite
def eu_params(draw):
    a = draw(st.floats(1.2, 4.0))
    h = draw(st.floats(0.1, 0.9))
    r3 = draw(st.floats(0.3, 3.0))
    r2 = r3 * (a - 1) / (1 - h)
    b = draw(st.floats(0.01, 0.3))
    k = draw(st.floats(1.05, 2.0))
    margin = k + b * (2 * a - 1) - 1
    r1 = draw(st.floats(0.1, 3.0))
    assume(r1 * margin < 0.9 * r3 * (a - 1))
    return ModelParams(d=draw(st.floats(0.3, 3.0)), r1=r1, r2=r2, r3=r3, a=a, b=b, h=h, k=k)


@st.composite
def estar_params(draw):
    p = ModelParams(
        d=draw(st.floats(0.3, 3.0)), r1=draw(st.floats(0.1, 1.0)), r2=draw(st.floats(2.0, 8.0)),
        r3=draw(st.floats(0.1, 1.0)), a=draw(st.floats(1.2, 3.0)), b=draw(st.floats(0.01, 0.2)),
        h=draw(st.floats(0.05, 0.6)), k=draw(st.floats(1.05, 1.6)),
    )
    beta = steady_states(p).beta_up
    assume(max(p.r1 * ((p.k - 1) + p.b * (2 * p.a - 1)), p.r3) < 0.9 * p.r2 * beta)
    return p


class TestRandomizedSweeps:
    @settings(max_examples=15, deadline=None)
    @given(eu_params(), st.floats(1.05, 2.0))
    def test_eu_super(self, p, factor):
        cs = critical_speeds(p)
        shift = ShiftProfile.sigmoid(2.0, 1.01 * cs.lambda_u + 0.5)
        pair = build_bounds(p, factor * cs.s3_star, shift, "Eu-super")
        assert verify_pair(pair).passed

    @settings(max_examples=15, deadline=None)
    @given(estar_params(), st.floats(1.05, 2.0))
    def test_estar_super(self, p, factor):
        cs = critical_speeds(p)
        shift = ShiftProfile.sigmoid(2.0, 1.01 * cs.lambda_star + 0.5)
        pair = build_bounds(p, factor * cs.s2_dstar, shift, "Estar-super")
        assert verify_pair(pair).passed

    @settings(max_examples=10, deadline=None)
    @given(eu_params())
    def test_eu_critical(self, p):
        cs = critical_speeds(p)
        shift = ShiftProfile.sigmoid(2.0, 1.01 * cs.lambda_u + 0.5)
        pair = build_bounds(p, cs.s3_star, shift, "Eu-critical")
        assert verify_pair(pair).passed


def test_export(tmp_path):
    pair = build_bounds(PSET_A, 2.5, SHIFT, "Eu-super")
    paths = export_pair(pair, tmp_path, grid=np.linspace(-5, 5, 11) + 0.05)
    assert len(paths) == 6
    data = np.loadtxt(paths[0], delimiter=",", skiprows=1)
    assert data.shape == (11, 4)
    assert paths[0].read_text().splitlines()[0] == "z,value,first,second"
