"""Lead-vehicle speed profiles from drone-recorded tracks or synthetic patterns."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

REQUIRED_COLUMNS = ("id", "frame", "xVelocity")
PATTERNS = ("sine", "sawtooth", "stop_go")


class TrackFormatError(ValueError):
    """Raised for unreadable or malformed track files."""


@dataclass
class TrajectorySegment:
    vehicle_id: int
    times: np.ndarray
    speeds: np.ndarray
    sample_rate: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.speeds = np.asarray(self.speeds, dtype=np.float64)
        if self.times.size == 0 or self.times.shape != self.speeds.shape:
            raise ValueError(f"segment {self.vehicle_id}: empty or ragged samples")
        if np.any(self.speeds < 0):
            raise ValueError(f"segment {self.vehicle_id}: negative speed")
        if self.times.size > 1:
            step = np.diff(self.times)
            if not np.allclose(step, 1.0 / self.sample_rate, rtol=0, atol=1e-9):
                raise ValueError(f"segment {self.vehicle_id}: samples not at fixed spacing")

    @property
    def samples(self):
        return list(zip(self.times.tolist(), self.speeds.tolist()))

    @property
    def duration(self):
        return self.times[-1] - self.times[0]


@dataclass
class LeadProfile:
    dt: float
    speeds: np.ndarray
    provenance: list = field(default_factory=list)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("profile dt must be > 0")
        self.speeds = np.asarray(self.speeds, dtype=np.float64)
        if self.speeds.ndim != 1 or self.speeds.size == 0:
            raise ValueError("profile needs a non-empty 1-D speed sequence")
        if np.any(self.speeds < 0) or not np.all(np.isfinite(self.speeds)):
            raise ValueError("profile speeds must be finite and >= 0")

    def __len__(self):
        return self.speeds.size

    @property
    def duration(self):
        return self.speeds.size * self.dt

    def window(self, start, length):
        """Sub-profile of ``length`` samples starting at index ``start``."""
        if start < 0 or start + length > self.speeds.size:
            raise ValueError("window outside profile")
        return LeadProfile(self.dt, self.speeds[start:start + length].copy(), list(self.provenance))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("t,speed\n")
            for k, v in enumerate(self.speeds.tolist()):
                fh.write(f"{k * self.dt:.6f},{v!r}\n")

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["t", "speed"]:
                raise TrackFormatError(f"{path}: expected header 't,speed'")
            ts, vs = [], []
            for lineno, row in enumerate(reader, start=2):
                try:
                    ts.append(float(row[0]))
                    vs.append(float(row[1]))
                except (ValueError, IndexError) as exc:
                    raise TrackFormatError(f"{path}:{lineno}: malformed row {row!r}") from exc
        if len(vs) < 2:
            raise TrackFormatError(f"{path}: profile needs at least two samples")
        dt = round(ts[1] - ts[0], 9)
        if not np.allclose(np.diff(ts), dt, atol=2e-6):
            raise TrackFormatError(f"{path}: time column is not evenly spaced")
        return cls(dt, np.array(vs), [str(path)])


@dataclass(frozen=True)
class CongestionFilterConfig:
    max_speed_cap: float = 18.0
    min_speed_std: float = 2.0

    def __post_init__(self):
        if not (self.max_speed_cap > 0 and self.min_speed_std > 0):
            raise ValueError("congestion filter thresholds must be > 0")


def ingest_tracks(path, sample_rate=25.0):
    """Read a delimited tracks file into one segment per vehicle id.

    Only ``id``, ``frame`` and ``xVelocity`` are used; speed is the absolute
    longitudinal velocity.
    """
    if not sample_rate > 0:
        raise ValueError("sample_rate must be > 0")
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TrackFormatError(f"{path}: empty file")
        header = [h.strip() for h in header]
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise TrackFormatError(f"{path}: missing columns {missing}")
        ci, cf, cv = (header.index(c) for c in REQUIRED_COLUMNS)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vid = int(row[ci])
                frame = int(row[cf])
                speed = abs(float(row[cv]))
            except (ValueError, IndexError) as exc:
                raise TrackFormatError(f"{path}:{lineno}: malformed row {row!r}") from exc
            if not math.isfinite(speed):
                raise TrackFormatError(f"{path}:{lineno}: non-finite speed")
            rows.setdefault(vid, []).append((frame, speed))
    if not rows:
        raise TrackFormatError(f"{path}: no data rows")
    segments = []
    for vid, samples in rows.items():
        samples.sort()
        frames = np.array([f for f, _ in samples])
        if np.any(np.diff(frames) != 1):
            raise TrackFormatError(f"{path}: vehicle {vid} has missing or duplicate frames")
        segments.append(
            TrajectorySegment(vid, frames / sample_rate, [v for _, v in samples], sample_rate)
        )
    return segments


def filter_congested(segments, cfg=CongestionFilterConfig()):
    return [
        s for s in segments
        if s.speeds.max() < cfg.max_speed_cap and s.speeds.std() > cfg.min_speed_std
    ]


def resample(segment, dt):
    n = int(math.floor(segment.duration / dt + 1e-9)) + 1
    t = segment.times[0] + dt * np.arange(n)
    return np.interp(t, segment.times, segment.speeds)


def _ramp(v_from, v_to, ramp, dt):
    diff = v_to - v_from
    if diff == 0.0:
        return np.empty(0)
    inc = math.copysign(ramp * dt, diff)
    n = max(1, math.ceil(abs(diff) / (ramp * dt) - 1e-9))
    vals = v_from + inc * np.arange(1, n + 1)
    vals = np.minimum(vals, v_to) if diff > 0 else np.maximum(vals, v_to)
    vals[-1] = v_to
    return np.maximum(vals, 0.0)


def stitch_segments(segments, dt, ramp=0.2):
    """Resample segments to ``dt`` and join them with constant-rate speed ramps."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if not ramp > 0:
        raise ValueError("ramp must be > 0")
    if not segments:
        raise ValueError("need at least one segment to stitch")
    parts = []
    prev_end = None
    for seg in segments:
        v = resample(seg, dt)
        if prev_end is not None:
            parts.append(_ramp(prev_end, v[0], ramp, dt))
        parts.append(v)
        prev_end = v[-1]
    return LeadProfile(dt, np.concatenate(parts), [s.vehicle_id for s in segments])


def synth_profile(pattern, base_speed, amplitude, period, duration, dt, seed=0):
    """Deterministic lead-speed stimulus bounded in ``base_speed +- amplitude``.

    ``sine`` and ``sawtooth`` ignore the seed; ``stop_go`` draws random
    braking events from it. The sawtooth rises over 80% of each period and
    falls over the remaining 20%, so acceleration stays bounded.
    """
    if pattern not in PATTERNS:
        raise ValueError(f"unknown pattern {pattern!r}; choose from {PATTERNS}")
    if amplitude < 0 or base_speed - amplitude < 0:
        raise ValueError("need amplitude >= 0 and base_speed - amplitude >= 0")
    if not (period > 0 and duration > 0 and dt > 0):
        raise ValueError("period, duration and dt must be > 0")
    n = int(round(duration / dt))
    if n < 1:
        raise ValueError("duration shorter than one step")
    t = dt * np.arange(n)
    if amplitude == 0:
        speeds = np.full(n, float(base_speed))
    elif pattern == "sine":
        speeds = base_speed + amplitude * np.sin(2.0 * np.pi * t / period)
    elif pattern == "sawtooth":
        phase = np.mod(t / period, 1.0)
        up = 0.8
        shape = np.where(phase < up, phase / up, 1.0 - (phase - up) / (1.0 - up))
        speeds = base_speed + amplitude * (2.0 * shape - 1.0)
    else:
        speeds = _stop_go(base_speed, amplitude, period, n, dt, np.random.default_rng(seed))
    speeds = np.clip(speeds, base_speed - amplitude, base_speed + amplitude)
    return LeadProfile(dt, speeds, ["synthetic"])


def _stop_go(base, amp, period, n, dt, rng):
    # cruise, then brake hard to a random low speed, then recover gently
    lo, hi = base - amp, base + amp
    out = np.empty(n)
    v = base
    target = base
    k_next = 0
    brake, accel = 1.5, 0.6
    for k in range(n):
        if k >= k_next:
            target = rng.uniform(lo, lo + 0.5 * amp) if v > base else rng.uniform(base, hi)
            k_next = k + max(1, int(round(rng.uniform(0.5, 1.0) * period / 2 / dt)))
        rate = brake if target < v else accel
        step = rate * dt
        v = max(target, v - step) if target < v else min(target, v + step)
        out[k] = v
    return out
