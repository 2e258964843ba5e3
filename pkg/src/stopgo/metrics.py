"""Speed-oscillation statistics, a surrogate fuel model and scenario comparison.

Window convention: the window starting at step ``k`` of length ``T`` is
``x[k:k+T]``. The average rolling std sums windows ``start..end-T`` and by
default divides by ``end - start - T - 1``; ``conventional=True`` divides by
the actual window count ``end - start - T + 1``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels


@dataclass(frozen=True)
class RollingConfig:
    window: int = 100
    start: int = 0
    end: int | None = None
    conventional: bool = False

    def resolve(self, n):
        """Validated ``(start, end)`` for a series of length ``n``."""
        end = n if self.end is None else self.end
        if self.window < 2:
            raise ValueError("rolling window must be >= 2")
        if not 0 <= self.start < end <= n:
            raise ValueError(f"range [{self.start}, {end}) invalid for series of length {n}")
        if not end - self.start > self.window:
            raise ValueError("need end - start > window")
        if not self.conventional and end - self.start - self.window - 1 <= 0:
            raise ValueError("range too short for the end-start-T-1 normalization")
        return self.start, end


@dataclass(frozen=True)
class FuelModelConfig:
    idle_rate: float = 0.333
    c1: float = 0.06
    c2: float = 4e-5
    c3: float = 0.12

    def __post_init__(self):
        if min(self.idle_rate, self.c1, self.c2, self.c3) < 0:
            raise ValueError("fuel model coefficients must be >= 0")


def _window(x, k, window):
    x = np.asarray(x, dtype=np.float64)
    if window < 1 or k < 0 or k + window > x.size:
        raise ValueError(f"window [{k}, {k + window}) outside series of length {x.size}")
    return x[k:k + window]


def rolling_mean(x, k, window):
    return float(np.mean(_window(x, k, window)))


def rolling_std(x, k, window):
    """Sample standard deviation (ddof=1) of ``x[k:k+window]``."""
    if window < 2:
        raise ValueError("rolling std needs window >= 2")
    w = _window(x, k, window)
    d = w - w.mean()
    return float(math.sqrt(np.dot(d, d) / (window - 1)))


def rolling_stds(x, window):
    """Sample std of every full window, via the selected kernel backend."""
    x = np.asarray(x, dtype=np.float64)
    if window < 2 or window > x.size:
        raise ValueError("window must satisfy 2 <= window <= len(x)")
    return kernels.rolling_stats(x, window)[1]


def avg_rolling_std(x, cfg=RollingConfig()):
    x = np.asarray(x, dtype=np.float64)
    start, end = cfg.resolve(x.size)
    stds = rolling_stds(x[start:end], cfg.window)
    denom = end - start - cfg.window + (1 if cfg.conventional else -1)
    return float(stds.sum() / denom)


def fuel_rate(speed, accel, cfg=FuelModelConfig()):
    """Instantaneous fuel rate in ml/s."""
    v = np.asarray(speed, dtype=np.float64)
    a = np.maximum(np.asarray(accel, dtype=np.float64), 0.0)
    return np.maximum(cfg.idle_rate, cfg.c1 * v + cfg.c2 * v ** 3 + cfg.c3 * a * v)


def fuel_consumption(speed, accel, dt, cfg=FuelModelConfig()):
    """Total fuel in ml over a per-step (speed, accel) series."""
    v = np.asarray(speed, dtype=np.float64)
    if v.size == 0:
        raise ValueError("empty trajectory")
    return float(dt * fuel_rate(v, accel, cfg).sum())


def pct_change(test, base):
    if base == 0.0:
        return 0.0 if test == 0.0 else math.copysign(math.inf, test)
    return (test - base) / base * 100.0


@dataclass
class EvaluationReport:
    window: int
    steps: int
    vehicles: list
    sbar_test: list
    sbar_base: list
    fuel_test: list
    fuel_base: list
    speed_test: list
    speed_base: list
    ego_gap_mean: float
    ego_gap_std: float
    base_gap_mean: float
    base_gap_std: float
    crashes_test: int
    crashes_base: int
    truncated: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def sbar_pct(self):
        return [pct_change(t, b) for t, b in zip(self.sbar_test, self.sbar_base)]

    @property
    def fuel_pct(self):
        return [pct_change(t, b) for t, b in zip(self.fuel_test, self.fuel_base)]

    @property
    def speed_pct(self):
        return [pct_change(t, b) for t, b in zip(self.speed_test, self.speed_base)]

    def to_dict(self):
        d = {
            "window": self.window,
            "steps": self.steps,
            "truncated": int(self.truncated),
            "crashes_test": self.crashes_test,
            "crashes_base": self.crashes_base,
            "ego_gap_mean": self.ego_gap_mean,
            "ego_gap_std": self.ego_gap_std,
            "base_gap_mean": self.base_gap_mean,
            "base_gap_std": self.base_gap_std,
        }
        cols = {
            "sbar_test": self.sbar_test, "sbar_base": self.sbar_base, "sbar_pct": self.sbar_pct,
            "fuel_test": self.fuel_test, "fuel_base": self.fuel_base, "fuel_pct": self.fuel_pct,
            "speed_test": self.speed_test, "speed_base": self.speed_base,
            "speed_pct": self.speed_pct,
        }
        for name, values in cols.items():
            for vid, val in zip(self.vehicles, values):
                d[f"{name}.{vid}"] = val
        d.update(self.extra)
        return d

    def write(self, path):
        """Key=value report plus ``<path>.table.csv`` and ``<path>.fuel.csv``."""
        with open(path, "w") as fh:
            for k, v in self.to_dict().items():
                fh.write(f"{k}={_fmt(v)}\n")
        with open(f"{path}.table.csv", "w") as fh:
            fh.write("row," + ",".join(f"v{v}" for v in self.vehicles) + "\n")
            for name, vals in (("sbar_test", self.sbar_test), ("sbar_base", self.sbar_base),
                               ("pct_change", self.sbar_pct)):
                fh.write(name + "," + ",".join(_fmt(v) for v in vals) + "\n")
        with open(f"{path}.fuel.csv", "w") as fh:
            fh.write("vehicle,fuel_test_ml,fuel_base_ml,pct_change\n")
            for vid, t, b, p in zip(self.vehicles, self.fuel_test, self.fuel_base, self.fuel_pct):
                fh.write(f"{vid},{_fmt(t)},{_fmt(b)},{_fmt(p)}\n")


def _fmt(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def read_report(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            k, _, v = line.partition("=")
            try:
                out[k] = int(v)
            except ValueError:
                out[k] = float(v)
    return out


def count_crash_steps(traj, vehicle_length=5.0):
    gaps = traj.position[:, :-1] - vehicle_length - traj.position[:, 1:]
    return int(np.any(gaps <= 0.0, axis=1).sum())


def compare_scenarios(test, base, rolling=RollingConfig(), fuel=FuelModelConfig(),
                      vehicle_length=5.0, jobs=1):
    """Per-vehicle oscillation, fuel and speed for a test run against a baseline.

    ``test`` and ``base`` are :class:`~stopgo.sim.Trajectory` objects with
    the same vehicles; if one run stopped early only the common prefix is
    compared and ``truncated`` is set.
    """
    if test.n_vehicles != base.n_vehicles:
        raise ValueError(f"vehicle sets differ: {test.n_vehicles} vs {base.n_vehicles}")
    steps = min(test.t.size, base.t.size)
    if steps < 2:
        raise ValueError("trajectories too short to compare")
    if not np.allclose(test.t[:steps], base.t[:steps]):
        raise ValueError("trajectories are not on the same time grid")
    dt = float(test.t[1] - test.t[0])
    n = test.n_vehicles

    def per_vehicle(i):
        out = []
        for tr in (test, base):
            v, a = tr.speed[:steps, i], tr.accel[:steps, i]
            out.append((avg_rolling_std(v, rolling), fuel_consumption(v, a, dt, fuel),
                        float(v.mean())))
        return out

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            rows = list(ex.map(per_vehicle, range(n)))
    else:
        rows = [per_vehicle(i) for i in range(n)]

    def gap_stats(tr):
        g = tr.position[:steps, 0] - vehicle_length - tr.position[:steps, 1]
        return float(g.mean()), float(g.std())

    eg_m, eg_s = gap_stats(test)
    bg_m, bg_s = gap_stats(base)
    return EvaluationReport(
        window=rolling.window,
        steps=steps,
        vehicles=list(range(1, n + 1)),
        sbar_test=[r[0][0] for r in rows],
        sbar_base=[r[1][0] for r in rows],
        fuel_test=[r[0][1] for r in rows],
        fuel_base=[r[1][1] for r in rows],
        speed_test=[r[0][2] for r in rows],
        speed_base=[r[1][2] for r in rows],
        ego_gap_mean=eg_m, ego_gap_std=eg_s, base_gap_mean=bg_m, base_gap_std=bg_s,
        crashes_test=count_crash_steps(test, vehicle_length),
        crashes_base=count_crash_steps(base, vehicle_length),
        truncated=steps != max(test.t.size, base.t.size),
    )
