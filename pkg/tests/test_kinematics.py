import numpy as np
import pytest
from hypothesis import given, strategies as st

from mtla.kinematics import (
    Infeasible,
    VelocityInterval,
    arrival_window,
    intersect,
    profile_for_target,
    uam_csm_fixed_target,
    uam_csm_fixed_total_time,
    uam_fixed_target,
    uam_fixed_time,
    velocity_range,
)
from mtla.scenario import GREEN, RED, PhaseSchedule, RoadLimits, next_shifts, phase_at

from oracles import csm_root, integrate_profile, passing_speeds, window

LIMITS = RoadLimits()


def roundtrip(sol, rel=1e-6):
    d1, d_tot = integrate_profile(sol)
    assert d1 == pytest.approx(sol.d1, rel=rel, abs=1e-9)
    assert d_tot == pytest.approx(sol.d1 + sol.d2, rel=rel, abs=1e-9)
    assert sol.distance_at(sol.t_tot) == pytest.approx(sol.d1 + sol.d2, rel=rel)


class TestUam:
    def test_fixed_time_examples(self):
        s = uam_fixed_time(10, 100, 10)
        assert (s.a, s.v_t) == (0, 10)
        s = uam_fixed_time(10, 100, 5)
        assert s.a == pytest.approx(4.0) and s.v_t == pytest.approx(30.0)
        roundtrip(s)
        s = uam_fixed_time(20, 100, 10)
        assert s.a == pytest.approx(-2.0) and s.v_t == pytest.approx(0.0, abs=1e-12)
        roundtrip(s)

    def test_fixed_time_needs_stop(self):
        with pytest.raises(Infeasible):
            uam_fixed_time(20, 100, 20)

    @pytest.mark.parametrize("args", [(-1, 10, 1), (1, 0, 1), (1, 10, 0)])
    def test_fixed_time_bad_input(self, args):
        with pytest.raises(ValueError):
            uam_fixed_time(*args)

    def test_fixed_target_examples(self):
        s = uam_fixed_target(10, 100, 10)
        assert s.a == 0 and s.t1 == pytest.approx(10)
        s = uam_fixed_target(11.111, 100, 13.889)
        assert s.a == pytest.approx(0.3472, abs=1e-4) and s.t1 == pytest.approx(8.000, abs=1e-3)
        s = uam_fixed_target(20, 100, 10)
        assert s.a == pytest.approx(-1.5) and s.t1 == pytest.approx(6.667, abs=1e-3)
        roundtrip(s)

    def test_fixed_target_degenerate(self):
        with pytest.raises(Infeasible):
            uam_fixed_target(0, 100, 0)


class TestUamCsm:
    def test_constant_speed_case(self):
        s = uam_csm_fixed_total_time(10, 50, 100, 10)
        assert s.v_t == pytest.approx(10) and s.a == pytest.approx(0, abs=1e-12)
        assert s.t1 == pytest.approx(5)

    def test_hand_checked_instance(self):
        s = uam_csm_fixed_total_time(10, 100, 200, 15)
        assert s.v_t == pytest.approx(14.574, abs=1e-3)
        assert s.t1 == pytest.approx(8.138, abs=1e-3)
        assert s.a == pytest.approx(0.562, abs=1e-3)
        assert s.v_t == pytest.approx(csm_root(10, 100, 200, 15), rel=1e-12)
        roundtrip(s)

    def test_short_total_time(self):
        # the quadratic always has a root with t1 = 2*l1/(v+v_t) > 0; the
        # 5 s instance is only rejected once the target speed is bounded
        s = uam_csm_fixed_total_time(10, 100, 200, 5)
        assert s.v_t == pytest.approx(csm_root(10, 100, 200, 5), rel=1e-12)
        assert s.t1 > 0
        roundtrip(s)
        with pytest.raises(Infeasible):
            uam_csm_fixed_total_time(10, 100, 200, 5, v_cap=LIMITS.v_max_road)

    def test_fixed_target_examples(self):
        s = uam_csm_fixed_target(11.111, 100, 300, 13.889)
        assert s.t1 == pytest.approx(8.000, abs=1e-3) and s.t_tot == pytest.approx(22.400, abs=1e-3)
        s = uam_csm_fixed_target(13.889, 100, 300, 13.889)
        assert s.a == 0 and s.t_tot == pytest.approx(21.600, abs=1e-3)
        s = uam_csm_fixed_target(5, 50, 100, 10)
        assert s.t1 == pytest.approx(6.667, abs=1e-3) and s.t_tot == pytest.approx(11.667, abs=1e-3)
        roundtrip(s)

    @pytest.mark.parametrize("args", [(10, 100, 100, 5), (10, 0, 100, 5), (10, 50, 100, 0)])
    def test_bad_input(self, args):
        with pytest.raises(ValueError):
            uam_csm_fixed_total_time(*args)

    @given(v=st.floats(0, 25), l1=st.floats(1, 300), d2=st.floats(1, 500),
           t=st.floats(1, 100), dt=st.floats(0.01, 50))
    def test_monotone_in_total_time(self, v, l1, d2, t, dt):
        a = uam_csm_fixed_total_time(v, l1, l1 + d2, t)
        b = uam_csm_fixed_total_time(v, l1, l1 + d2, t + dt)
        assert b.v_t <= a.v_t * (1 + 1e-12)

    def test_profile_for_target_dispatch(self):
        assert profile_for_target(10, 100, 100, 12).d2 == 0
        assert profile_for_target(10, 100, 200, 12).d2 == pytest.approx(100)


class TestRandomOracle:
    """1000 random instances against the extended-precision root and quadrature."""

    def test_csm_oracle_and_roundtrip(self):
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(1000):
            v = rng.uniform(0, 25)
            l1 = rng.uniform(1, 400)
            li = l1 + rng.uniform(0.5, 800)
            t = rng.uniform(0.5, 150)
            sol = uam_csm_fixed_total_time(v, l1, li, t)
            ref = csm_root(v, l1, li, t)
            worst = max(worst, abs(sol.v_t - ref) / ref)
            roundtrip(sol)
            assert sol.t_tot == t
        assert worst <= 1e-9

    def test_all_solvers_roundtrip(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            v = rng.uniform(0, 25)
            d = rng.uniform(1, 400)
            for sol in _solutions(rng, v, d):
                roundtrip(sol)


def _solutions(rng, v, d):
    out = []
    try:
        out.append(uam_fixed_time(v, d, rng.uniform(0.5, 60)))
    except Infeasible:
        pass
    v_t = rng.uniform(0.1, 25)
    out.append(uam_fixed_target(v, d, v_t))
    out.append(uam_csm_fixed_target(v, d, d + rng.uniform(1, 500), v_t))
    return out


intervals = st.one_of(
    st.just(VelocityInterval.empty()),
    st.tuples(st.floats(0, 20), st.floats(0, 20)).map(lambda p: VelocityInterval(min(p), max(p))),
)


class TestIntersect:
    def test_examples(self):
        assert intersect(VelocityInterval(5, 10), VelocityInterval(8, 12)) == VelocityInterval(8, 10)
        assert intersect(VelocityInterval(5, 10), VelocityInterval(11, 12)).is_empty
        assert intersect(VelocityInterval(5, 10), VelocityInterval.empty()).is_empty

    @given(intervals, intervals)
    def test_commutative(self, a, b):
        assert intersect(a, b) == intersect(b, a) or (intersect(a, b).is_empty and intersect(b, a).is_empty)

    @given(intervals, intervals, intervals)
    def test_associative(self, a, b, c):
        x, y = intersect(intersect(a, b), c), intersect(a, intersect(b, c))
        assert x == y or (x.is_empty and y.is_empty)

    @given(intervals)
    def test_idempotent(self, a):
        x = intersect(a, a)
        assert x == a or (x.is_empty and a.is_empty)

    @given(intervals, intervals, st.floats(-1, 21))
    def test_contained(self, a, b, v):
        x = intersect(a, b)
        if v in x:
            assert v in a and v in b
        if v in a and v in b:
            assert v in x


class TestVelocityRange:
    def test_green_first_light_example(self):
        # 100 m away at 40 km/h with 20 s of green left: even slowing to a
        # standstill at the line arrives before red, so there is no lower bound
        shifts = [(20.0, RED), (65.0, GREEN), (95.0, RED)]
        r = velocity_range(1, 1, GREEN, 11.111, 100, 100, shifts, LIMITS)
        with pytest.raises(Infeasible):
            uam_fixed_time(11.111, 100, 20)
        assert r.lo == 0.0
        assert r.hi == pytest.approx(LIMITS.v_max_road)
        assert r.sol_hi.a == pytest.approx(uam_fixed_target(11.111, 100, LIMITS.v_max_road).a)
        # farther away the latest-arrival profile decelerates
        r = velocity_range(1, 1, GREEN, 11.111, 200, 200, shifts, LIMITS)
        ref = uam_fixed_time(11.111, 200, 20)
        assert ref.a < 0 and r.lo == pytest.approx(ref.v_t)

    def test_red_first_light_example(self):
        shifts = [(5.0, GREEN), (45.0, RED), (80.0, GREEN)]
        r = velocity_range(1, 1, RED, 11.111, 100, 100, shifts, LIMITS)
        # arriving at 5 s needs more than the road limit, arriving at 45 s needs a stop
        assert r.hi == pytest.approx(LIMITS.v_max_road)
        assert r.lo == 0.0

    def test_unreachable_green(self):
        shifts = [(2.0, RED), (47.0, GREEN), (77.0, RED)]
        assert velocity_range(1, 1, GREEN, 5, 100, 100, shifts, LIMITS).is_empty

    def test_second_green_only_on_green(self):
        with pytest.raises(ValueError):
            velocity_range(1, 2, RED, 10, 100, 100, [(5.0, GREEN), (45.0, RED), (80.0, GREEN)], LIMITS)

    def test_margin_shrinks(self):
        shifts = [(30.0, GREEN), (60.0, RED), (95.0, GREEN)]
        a = velocity_range(2, 1, RED, 10, 100, 300, shifts, LIMITS)
        b = velocity_range(2, 1, RED, 10, 100, 300, shifts, LIMITS, margin=1.0)
        assert a.lo < b.lo <= b.hi < a.hi

    def test_endpoint_profiles_hit_window(self):
        shifts = [(30.0, GREEN), (60.0, RED), (95.0, GREEN)]
        r = velocity_range(2, 1, RED, 10, 100, 300, shifts, LIMITS)
        assert r.sol_lo.t_tot == pytest.approx(60.0)
        assert r.sol_hi.t_tot == pytest.approx(30.0)
        assert r.hi < LIMITS.v_max_road

    def test_grid_oracle(self):
        """Interval endpoints match brute-force arrival checks on a fine speed grid."""
        rng = np.random.default_rng(11)
        checked = 0
        for _ in range(300):
            tl = PhaseSchedule("X", 1.0, 75.0, rng.uniform(10, 50), rng.uniform(0, 75))
            t = rng.uniform(0, 150)
            color = phase_at(tl, t)
            shifts = next_shifts(tl, t, 3)
            v = rng.uniform(0, 14)
            l1 = rng.uniform(5, 300)
            i = int(rng.integers(1, 4))
            li = l1 if i == 1 else l1 + rng.uniform(50, 600)
            for j in ((1, 2) if color == GREEN else (1,)):
                r = velocity_range(i, j, color, v, l1, li, shifts, LIMITS)
                t_lo, t_hi = window(color, j, shifts)
                grid, ok = passing_speeds(v, l1, li, t_lo, t_hi, LIMITS.v_max_road)
                tol = 1e-6 + 1e-6 * LIMITS.v_max_road
                if r.is_empty:
                    assert not ok.any()
                    continue
                inside = (grid > r.lo + tol) & (grid < r.hi - tol)
                outside = (grid < r.lo - tol) | (grid > r.hi + tol)
                assert ok[inside].all()
                assert not ok[outside].any()
                checked += 1
        assert checked > 100


def test_arrival_window():
    sh = [(20.0, RED), (65.0, GREEN), (95.0, RED)]
    assert arrival_window(GREEN, 1, sh) == (0.0, 20.0)
    assert arrival_window(GREEN, 2, sh) == (65.0, 95.0)
    assert arrival_window(RED, 1, [(5.0, GREEN), (45.0, RED)]) == (5.0, 45.0)
