"""Single-lane platoon: scripted lead, one controlled ego, Krauss followers.

Vehicles are indexed from the front: index 0 is the lead vehicle that
replays a :class:`~stopgo.trajdata.LeadProfile`, index 1 is the ego vehicle
(platoon position 2) and the rest are human drivers. Human drivers follow a
stochastic safe-speed rule that re-decides every ``action_step`` seconds and
holds the chosen acceleration in between; every step they are additionally
capped by the safe speed at zero reaction delay so they can never drive into
their leader. All followers react to the previous step's snapshot
(synchronous update).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels


class VehicleState(NamedTuple):
    position: float
    speed: float
    acceleration: float
    length: float = 5.0


class StateVector(NamedTuple):
    delta_s: float
    v_lead: float
    a_lead: float
    v_ego: float
    a_ego: float

    def as_array(self):
        return np.array(self, dtype=np.float64)


@dataclass(frozen=True)
class KraussParams:
    a_max: float = 2.6
    b_max: float = 4.5
    v_max: float = 30.0
    t_r: float = 1.0
    sigma: float = 0.9
    min_gap: float = 2.5
    action_step: float = 1.0

    def __post_init__(self):
        for name in ("a_max", "b_max", "v_max", "t_r", "min_gap", "action_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"Krauss parameter {name} must be > 0")
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError("Krauss sigma must lie in [0, 1]")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    n_vehicles: int = 10
    ego_index: int = 2
    road_length: float = 70_000.0
    initial_spacing: float = 30.0
    initial_speed: float | None = None
    vehicle_length: float = 5.0
    action_low: float = -3.0
    action_high: float = 2.0
    episode_horizon: int = 3000
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.ego_index != 2:
            raise ValueError("the controlled vehicle must sit at platoon position 2")
        if self.n_vehicles < 2:
            raise ValueError("need at least the lead and the ego vehicle")
        if not self.action_low < 0 < self.action_high:
            raise ValueError("action bounds must straddle zero")
        if self.initial_spacing <= self.vehicle_length:
            raise ValueError("initial spacing must exceed the vehicle length")
        if self.episode_horizon < 1:
            raise ValueError("episode_horizon must be >= 1")

    @property
    def action_bounds(self):
        return (self.action_low, self.action_high)


def krauss_safe_speed(v_follower, v_leader, gap, p):
    return kernels.krauss_safe_speed(v_follower, v_leader, gap, p.t_r, p.b_max)


def step_human(leader, follower, p, dt, rng, held=None):
    """One step of a human follower given the previous leader/follower states.

    With ``held=None`` the driver takes a fresh decision (drawing one uniform
    from ``rng``) over ``p.action_step``; otherwise the held acceleration is
    applied. Returns ``(new_state, held_acceleration)``.
    """
    old_pos = np.array([leader.position, follower.position])
    old_spd = np.array([leader.speed, follower.speed])
    pos, spd, acc = old_pos.copy(), old_spd.copy(), np.zeros(2)
    hold = np.array([0.0, 0.0 if held is None else held])
    lengths = np.array([leader.length, follower.length])
    decide = held is None
    u = np.array([0.0, rng.random()]) if decide else np.zeros(2)
    tau = dt if p.action_step <= dt else p.action_step
    kernels.human_sweep(old_pos, old_spd, pos, spd, acc, hold, lengths, 1, decide, u,
                        p.a_max, p.b_max, p.v_max, p.t_r, p.sigma, p.min_gap, tau, dt)
    return VehicleState(pos[1], spd[1], acc[1], follower.length), hold[1]


class SimulationError(RuntimeError):
    pass


class PlatoonEnv:
    """reset/step environment around the platoon.

    With ``baseline=True`` the ego slot is driven by the human model and the
    action passed to :meth:`step` is ignored.
    """

    def __init__(self, cfg, profile, krauss=KraussParams(), baseline=False, record=False):
        if not math.isclose(profile.dt, cfg.dt, rel_tol=1e-9):
            raise ValueError(f"profile dt {profile.dt} != simulation dt {cfg.dt}")
        self.cfg = cfg
        self.profile = profile
        self.krauss = krauss
        self.baseline = baseline
        self.record = record
        self.rng = np.random.default_rng(cfg.seed)
        n = cfg.n_vehicles
        self.lengths = np.full(n, float(cfg.vehicle_length))
        self._tau = cfg.dt if krauss.action_step <= cfg.dt else krauss.action_step
        self._decide_every = max(1, int(round(self._tau / cfg.dt)))
        self.done = True
        self.pos = np.zeros(n)
        self.spd = np.zeros(n)
        self.acc = np.zeros(n)
        self.held = np.zeros(n)

    # -- lifecycle ----------------------------------------------------------

    def reset(self, start=0, horizon=None):
        cfg = self.cfg
        horizon = cfg.episode_horizon if horizon is None else horizon
        if start < 0 or start + horizon >= len(self.profile):
            raise ValueError(
                f"profile of {len(self.profile)} samples too short for horizon {horizon} at offset {start}"
            )
        self.start = start
        self.horizon = horizon
        self.clock = 0
        v0 = self.profile.speeds[start] if cfg.initial_speed is None else cfg.initial_speed
        n = cfg.n_vehicles
        self.pos = -cfg.initial_spacing * np.arange(n, dtype=np.float64)
        self.spd = np.full(n, float(v0))
        self.spd[0] = self.profile.speeds[start]
        self.acc = np.zeros(n)
        self.held = np.zeros(n)
        self.done = False
        self.crashed = False
        self._log = [(self.pos.copy(), self.spd.copy(), self.acc.copy())] if self.record else None
        return self.observe()

    def observe(self):
        delta_s = self.pos[0] - self.lengths[0] - self.pos[1]
        return StateVector(delta_s, self.spd[0], self.acc[0], self.spd[1], self.acc[1])

    @property
    def headway(self):
        """Ego time headway in seconds (capped at 10 s)."""
        delta_s = self.pos[0] - self.lengths[0] - self.pos[1]
        return min(delta_s / max(self.spd[1], 0.1), 10.0)

    def snapshot(self):
        return [VehicleState(p, v, a, ln) for p, v, a, ln in
                zip(self.pos.tolist(), self.spd.tolist(), self.acc.tolist(), self.lengths.tolist())]

    def step(self, action=0.0):
        """Advance one step. Returns ``(state, crashed, done, snapshot)``."""
        if self.done:
            raise SimulationError("step() called on a finished episode; call reset()")
        cfg, p, dt = self.cfg, self.krauss, self.cfg.dt
        old_pos = self.pos.copy()
        old_spd = self.spd.copy()
        k = self.start + self.clock + 1

        v = self.profile.speeds[k]
        self.acc[0] = (v - old_spd[0]) / dt
        self.spd[0] = v
        self.pos[0] = old_pos[0] + v * dt

        if self.baseline:
            first = 1
        else:
            first = 2
            a = min(max(float(action), cfg.action_low), cfg.action_high)
            v_old = old_spd[1]
            v_new = v_old + a * dt
            if not v_new > 0.0:
                v_new = 0.0
            self.acc[1] = (v_new - v_old) / dt
            self.spd[1] = v_new
            self.pos[1] = old_pos[1] + v_new * dt

        decide = self.clock % self._decide_every == 0
        u = self.rng.random(cfg.n_vehicles) if decide else None
        if cfg.n_vehicles > first:
            kernels.human_sweep(old_pos, old_spd, self.pos, self.spd, self.acc, self.held,
                                self.lengths, first, decide, u, p.a_max, p.b_max, p.v_max,
                                p.t_r, p.sigma, p.min_gap, self._tau, dt)
        self.clock += 1

        gaps = self.pos[:-1] - self.lengths[:-1] - self.pos[1:]
        self.crashed = bool(np.any(gaps <= 0.0))
        exhausted = k + 1 >= len(self.profile) or self.pos[0] >= cfg.road_length
        self.done = self.crashed or self.clock >= self.horizon or exhausted
        if self.record:
            self._log.append((self.pos.copy(), self.spd.copy(), self.acc.copy()))
        return self.observe(), self.crashed, self.done, self.snapshot()

    def trajectory(self):
        """Recorded run as a :class:`Trajectory` (requires ``record=True``)."""
        if self._log is None:
            raise SimulationError("environment was not recording")
        pos, spd, acc = (np.array(x) for x in zip(*self._log))
        t = self.cfg.dt * np.arange(pos.shape[0])
        return Trajectory(t, pos, spd, acc, crashed=self.crashed)


@dataclass
class Trajectory:
    """Per-step platoon record, arrays of shape ``(steps, vehicles)``."""

    t: np.ndarray
    position: np.ndarray
    speed: np.ndarray
    accel: np.ndarray
    crashed: bool = False

    @property
    def n_vehicles(self):
        return self.position.shape[1]

    def write_csv(self, path):
        n = self.n_vehicles
        lines = ["t,vehicle,position,speed,accel"]
        for k, t in enumerate(self.t.tolist()):
            ps, vs, acs = self.position[k].tolist(), self.speed[k].tolist(), self.accel[k].tolist()
            for i in range(n):
                lines.append(f"{t:.3f},{i + 1},{ps[i]:.6f},{vs[i]:.6f},{acs[i]:.6f}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines))
            fh.write("\n")

    @classmethod
    def read_csv(cls, path):
        with open(path) as fh:
            header = fh.readline().strip()
        if header != "t,vehicle,position,speed,accel":
            raise ValueError(f"{path}: not a trajectory log (header {header!r})")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.size == 0:
            raise ValueError(f"{path}: empty trajectory log")
        ids = np.unique(data[:, 1]).astype(int)
        n = ids.size
        if data.shape[0] % n:
            raise ValueError(f"{path}: ragged trajectory log")
        steps = data.shape[0] // n
        data = data.reshape(steps, n, 5)
        if not np.all(data[:, :, 1] == ids[None, :]):
            raise ValueError(f"{path}: vehicle rows out of order")
        return cls(data[:, 0, 0].copy(), data[:, :, 2].copy(), data[:, :, 3].copy(),
                   data[:, :, 4].copy())


def rollout(env, policy=None, start=0, horizon=None):
    """Run one recorded episode. ``policy`` maps a StateVector to an action."""
    s = env.reset(start, horizon)
    done = False
    while not done:
        a = 0.0 if policy is None else policy(s)
        s, _, done, _ = env.step(a)
    return env.trajectory()
