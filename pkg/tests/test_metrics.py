import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stopgo.metrics import (
    EvaluationReport,
    FuelModelConfig,
    RollingConfig,
    avg_rolling_std,
    compare_scenarios,
    fuel_consumption,
    pct_change,
    read_report,
    rolling_mean,
    rolling_std,
)
from stopgo.sim import Trajectory


def brute_std(x, k, T):
    m = sum(x[k + j] for j in range(T)) / T
    return math.sqrt(sum((x[k + j] - m) ** 2 for j in range(T)) / (T - 1))


def brute_avg(x, T, start, end, conventional=False):
    total = 0.0
    for k in range(start, end - T + 1):
        total += brute_std(x, k, T)
    return total / (end - start - T + (1 if conventional else -1))


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


class TestRolling:
    def test_examples(self):
        assert rolling_mean([4.0] * 7, 2, 3) == 4.0
        assert rolling_mean([1.0, 2.0, 3.0], 0, 3) == 2.0
        assert rolling_std([1.0, 2.0, 3.0], 0, 3) == 1.0
        assert rolling_std([3.3] * 9, 1, 5) == 0.0
        x = np.random.default_rng(0).normal(size=40)
        assert rolling_mean(x, 0, 40) == pytest.approx(x.mean(), rel=1e-15)

    def test_window_out_of_range(self):
        with pytest.raises(ValueError):
            rolling_std(np.ones(5), 3, 3)
        with pytest.raises(ValueError):
            rolling_std(np.ones(5), 0, 1)

    def test_config_invariants(self):
        with pytest.raises(ValueError):
            avg_rolling_std(np.ones(10), RollingConfig(window=10))
        with pytest.raises(ValueError):
            avg_rolling_std(np.ones(10), RollingConfig(window=1))
        # end - start - T - 1 must be positive in the verbatim mode only
        x = np.arange(12.0)
        with pytest.raises(ValueError):
            avg_rolling_std(x, RollingConfig(window=11))
        assert avg_rolling_std(x, RollingConfig(window=11, conventional=True)) > 0

    @pytest.mark.parametrize("seed", range(100))
    def test_brute_force_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(20, 120))
        x = rng.uniform(0, 15, n)
        T = int(rng.integers(2, n // 2))
        start = int(rng.integers(0, n - T - 3))
        end = int(rng.integers(start + T + 2, n + 1))
        k = int(rng.integers(0, n - T + 1))
        xs = x.tolist()
        assert rel(rolling_mean(x, k, T), sum(xs[k:k + T]) / T) < 1e-12
        assert rel(rolling_std(x, k, T), brute_std(xs, k, T)) < 1e-12
        for conventional in (False, True):
            cfg = RollingConfig(T, start, end, conventional)
            assert rel(avg_rolling_std(x, cfg), brute_avg(xs, T, start, end, conventional)) < 1e-12

    def test_step_change_against_oracle(self):
        x = np.r_[np.full(150, 4.0), np.full(150, 9.0)]
        got = avg_rolling_std(x, RollingConfig(50))
        assert rel(got, brute_avg(x.tolist(), 50, 0, 300)) < 1e-12

    def test_denominator_switch(self):
        x = np.random.default_rng(1).normal(size=200)
        verb = avg_rolling_std(x, RollingConfig(20))
        conv = avg_rolling_std(x, RollingConfig(20, conventional=True))
        assert verb / conv == pytest.approx((200 - 20 + 1) / (200 - 20 - 1), rel=1e-14)

    def test_constant_series(self):
        assert avg_rolling_std(np.full(500, 6.5)) == 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.floats(-50, 50), st.floats(0.1, 10))
    def test_shift_invariance_and_homogeneity(self, seed, c, s):
        x = np.random.default_rng(seed).uniform(0, 10, 300)
        base = avg_rolling_std(x)
        assert avg_rolling_std(x + c) == pytest.approx(base, rel=1e-9, abs=1e-12)
        assert avg_rolling_std(s * x) == pytest.approx(s * base, rel=1e-12)


class TestFuel:
    def test_idle(self):
        cfg = FuelModelConfig()
        assert fuel_consumption(np.zeros(100), np.zeros(100), 0.1, cfg) == pytest.approx(10 * 0.333)

    @pytest.mark.parametrize("v", [0.5, 5.0, 12.0, 30.0])
    def test_constant_speed_closed_form(self, v):
        cfg = FuelModelConfig()
        tau = 20.0
        expected = tau * max(cfg.idle_rate, cfg.c1 * v + cfg.c2 * v ** 3)
        assert fuel_consumption(np.full(200, v), np.zeros(200), 0.1, cfg) == pytest.approx(expected)

    def test_acceleration_phase_never_decreases(self):
        rng = np.random.default_rng(2)
        v = rng.uniform(0, 20, 400)
        a = rng.uniform(-3, 0, 400)
        before = fuel_consumption(v, a, 0.1)
        a2 = a.copy()
        a2[100:200] = rng.uniform(0, 2, 100)
        assert fuel_consumption(v, a2, 0.1) >= before

    def test_additive_and_nonnegative(self):
        rng = np.random.default_rng(3)
        v, a = rng.uniform(0, 20, 500), rng.uniform(-3, 2, 500)
        total = fuel_consumption(v, a, 0.1)
        parts = fuel_consumption(v[:173], a[:173], 0.1) + fuel_consumption(v[173:], a[173:], 0.1)
        assert total >= 0 and total == pytest.approx(parts, rel=1e-13)

    def test_rejects_negative_coefficients(self):
        with pytest.raises(ValueError):
            FuelModelConfig(c2=-1.0)


def traj(speeds, dt=0.1, spacing=30.0):
    """Trajectory whose positions integrate the given (steps, vehicles) speeds."""
    speeds = np.asarray(speeds, dtype=float)
    steps, n = speeds.shape
    pos = -spacing * np.arange(n) + np.cumsum(speeds, axis=0) * dt
    acc = np.vstack([np.zeros((1, n)), np.diff(speeds, axis=0) / dt])
    return Trajectory(dt * np.arange(steps), pos, speeds, acc)


class TestCompare:
    def test_identical_logs_zero_delta(self):
        sp = np.random.default_rng(0).uniform(3, 8, (400, 4))
        rep = compare_scenarios(traj(sp), traj(sp), RollingConfig(50))
        assert rep.sbar_pct == [0.0] * 4 and rep.fuel_pct == [0.0] * 4
        assert not rep.truncated and rep.crashes_test == 0

    def test_hand_built_two_vehicle(self):
        n = 300
        lead = np.full(n, 5.0)
        base_f = 5.0 + np.tile([1.0, -1.0], n // 2)
        test_f = 5.0 + np.tile([0.5, -0.5], n // 2)
        t = traj(np.c_[lead, test_f])
        b = traj(np.c_[lead, base_f])
        rep = compare_scenarios(t, b, RollingConfig(10))
        # alternating +-d over an even window: sample std = d*sqrt(T/(T-1))
        expected_base = 1.0 * math.sqrt(10 / 9) * (n - 10 + 1) / (n - 10 - 1)
        assert rep.sbar_base[1] == pytest.approx(expected_base, rel=1e-12)
        assert rep.sbar_test[1] == pytest.approx(expected_base / 2, rel=1e-12)
        assert rep.sbar_pct[1] == pytest.approx(-50.0, abs=1e-9)
        assert rep.sbar_pct[0] == 0.0

    def test_percent_change_self_consistent(self):
        rng = np.random.default_rng(5)
        rep = compare_scenarios(traj(rng.uniform(2, 9, (300, 3))), traj(rng.uniform(2, 9, (300, 3))),
                                RollingConfig(30))
        for t, b, p in zip(rep.sbar_test, rep.sbar_base, rep.sbar_pct):
            assert p == pct_change(t, b)

    def test_mismatched_vehicle_counts(self):
        sp = np.ones((200, 3))
        with pytest.raises(ValueError, match="vehicle"):
            compare_scenarios(traj(sp), traj(np.ones((200, 4))))

    def test_truncated_and_crash_counted(self):
        base = np.full((400, 3), 5.0)
        test = base[:250].copy()
        test[:, 1] = 25.0  # closes the 25 m gap in ~1.25 s
        rep = compare_scenarios(traj(test), traj(base), RollingConfig(50))
        assert rep.truncated and rep.steps == 250 and rep.crashes_test > 0

    def test_jobs_give_identical_report(self):
        rng = np.random.default_rng(7)
        a, b = traj(rng.uniform(2, 9, (300, 6))), traj(rng.uniform(2, 9, (300, 6)))
        assert compare_scenarios(a, b, jobs=1).to_dict() == compare_scenarios(a, b, jobs=3).to_dict()

    def test_report_roundtrip(self, tmp_path):
        rng = np.random.default_rng(8)
        rep = compare_scenarios(traj(rng.uniform(2, 9, (300, 3))), traj(rng.uniform(2, 9, (300, 3))))
        assert isinstance(rep, EvaluationReport)
        rep.write(tmp_path / "r.txt")
        back = read_report(tmp_path / "r.txt")
        assert back["steps"] == 300
        assert back["sbar_test.2"] == pytest.approx(rep.sbar_test[1], abs=1e-6)
        assert (tmp_path / "r.txt.table.csv").read_text().startswith("row,v1,v2,v3")


def test_pct_change_zero_base():
    assert pct_change(0.0, 0.0) == 0.0
    assert pct_change(1.0, 0.0) == math.inf
    assert pct_change(3.0, 4.0) == -25.0
