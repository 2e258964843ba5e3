import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stopgo.trajdata import (
    CongestionFilterConfig,
    LeadProfile,
    TrackFormatError,
    TrajectorySegment,
    filter_congested,
    ingest_tracks,
    resample,
    stitch_segments,
    synth_profile,
)


def write_tracks(path, rows, header="id,frame,xVelocity,yVelocity"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


def seg(vid, speeds, rate=10.0):
    speeds = np.asarray(speeds, dtype=float)
    return TrajectorySegment(vid, np.arange(speeds.size) / rate, speeds, rate)


class TestIngest:
    def test_single_vehicle_times(self, tmp_path):
        p = write_tracks(tmp_path / "t.csv", ["1,0,10.0,0", "1,1,10.5,0", "1,2,11.0,0"])
        (s,) = ingest_tracks(p, 25)
        np.testing.assert_allclose(s.times, [0.0, 0.04, 0.08])
        np.testing.assert_array_equal(s.speeds, [10.0, 10.5, 11.0])

    def test_interleaved_ids_grouped_and_ordered(self, tmp_path):
        rows = ["2,1,5,0", "1,0,3,0", "2,0,4,0", "1,1,3.5,0", "1,2,-4.0,0"]
        segs = ingest_tracks(write_tracks(tmp_path / "t.csv", rows), 25)
        by_id = {s.vehicle_id: s for s in segs}
        assert set(by_id) == {1, 2}
        np.testing.assert_array_equal(by_id[1].speeds, [3.0, 3.5, 4.0])
        np.testing.assert_array_equal(by_id[2].speeds, [4.0, 5.0])

    def test_non_numeric_speed_names_line(self, tmp_path):
        p = write_tracks(tmp_path / "t.csv", ["1,0,10.0,0", "1,1,fast,0"])
        with pytest.raises(TrackFormatError, match=":3:"):
            ingest_tracks(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("")
        with pytest.raises(TrackFormatError, match="empty"):
            ingest_tracks(p)

    def test_header_only(self, tmp_path):
        p = write_tracks(tmp_path / "h.csv", [])
        with pytest.raises(TrackFormatError):
            ingest_tracks(p)

    def test_missing_column(self, tmp_path):
        p = write_tracks(tmp_path / "m.csv", ["1,0"], header="id,frame")
        with pytest.raises(TrackFormatError, match="xVelocity"):
            ingest_tracks(p)


class TestFilter:
    def test_thresholds(self):
        fast = seg(1, [20.0] * 10)
        steady = seg(2, [10.0] * 10)
        wavy = seg(3, [5.0, 15.0] * 5)
        assert wavy.speeds.std() == pytest.approx(5.0)
        assert filter_congested([fast, steady, wavy]) == [wavy]

    def test_subset_and_idempotent(self):
        rng = np.random.default_rng(0)
        segs = [seg(i, rng.uniform(0, rng.uniform(5, 25), size=50)) for i in range(30)]
        once = filter_congested(segs)
        assert all(any(s is t for t in segs) for s in once)
        assert filter_congested(once) == once

    def test_config_validation(self):
        with pytest.raises(ValueError):
            CongestionFilterConfig(max_speed_cap=0)


class TestStitch:
    def test_single_segment_is_resampled_identity(self):
        s = seg(1, [1.0, 2.0, 3.0, 4.0], rate=10.0)
        prof = stitch_segments([s], 0.1)
        np.testing.assert_allclose(prof.speeds, [1.0, 2.0, 3.0, 4.0])
        assert prof.provenance == [1]

    def test_rising_ramp(self):
        prof = stitch_segments([seg(1, [10.0, 10.0]), seg(2, [12.0, 12.0])], 0.1, 0.2)
        ramp = prof.speeds[2:-2]
        assert ramp.size == 100
        np.testing.assert_allclose(np.diff(np.r_[10.0, ramp]), 0.02, atol=1e-12)
        assert ramp[-1] == 12.0

    def test_falling_ramp(self):
        prof = stitch_segments([seg(1, [12.0, 12.0]), seg(2, [10.0, 10.0])], 0.1, 0.2)
        ramp = prof.speeds[2:-2]
        np.testing.assert_allclose(np.diff(np.r_[12.0, ramp]), -0.02, atol=1e-12)

    def test_resampling_is_linear(self):
        s = TrajectorySegment(1, [0.0, 0.04, 0.08, 0.12], [0.0, 0.4, 0.8, 1.2], 25.0)
        np.testing.assert_allclose(resample(s, 0.1), [0.0, 1.0])

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            stitch_segments([seg(1, [1.0, 1.0])], 0.0)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.lists(st.floats(0, 20), min_size=2, max_size=30), min_size=1, max_size=6),
           st.sampled_from([0.1, 0.2, 0.5]), st.sampled_from([0.1, 0.2, 1.0]))
    def test_jump_bound_duration_and_sign(self, speed_lists, dt, ramp):
        segs = [seg(i, v) for i, v in enumerate(speed_lists)]
        prof = stitch_segments(segs, dt, ramp)
        resampled = [resample(s, dt) for s in segs]
        inner = max((np.abs(np.diff(r)).max() if r.size > 1 else 0.0) for r in resampled)
        assert np.abs(np.diff(prof.speeds)).max(initial=0.0) <= max(ramp * dt, inner) + 1e-9
        assert np.all(prof.speeds >= 0)
        expected = sum(r.size for r in resampled) * dt + sum(
            abs(b[0] - a[-1]) / ramp for a, b in zip(resampled, resampled[1:])
        )
        assert abs(prof.duration - expected) <= dt * len(segs) + 1e-9


class TestSynth:
    def test_constant_when_amplitude_zero(self):
        for pattern in ("sine", "sawtooth", "stop_go"):
            p = synth_profile(pattern, 7.0, 0.0, 30, 60, 0.1, seed=3)
            assert np.all(p.speeds == 7.0)

    def test_sine_extrema(self):
        p = synth_profile("sine", 5, 3, 60, 120, 0.1)
        assert len(p) == 1200
        assert p.speeds.min() == pytest.approx(2.0, abs=1e-12)
        assert p.speeds.max() == pytest.approx(8.0, abs=1e-12)

    @pytest.mark.parametrize("pattern", ["sine", "sawtooth", "stop_go"])
    def test_deterministic_and_bounded(self, pattern):
        a = synth_profile(pattern, 6, 4, 40, 300, 0.1, seed=5)
        b = synth_profile(pattern, 6, 4, 40, 300, 0.1, seed=5)
        assert a.speeds.tobytes() == b.speeds.tobytes()
        assert a.speeds.min() >= 2.0 and a.speeds.max() <= 10.0

    def test_stop_go_depends_on_seed(self):
        a = synth_profile("stop_go", 6, 4, 40, 300, 0.1, seed=1)
        b = synth_profile("stop_go", 6, 4, 40, 300, 0.1, seed=2)
        assert not np.array_equal(a.speeds, b.speeds)

    @pytest.mark.parametrize("args", [
        ("sine", 2, 3, 60, 10, 0.1), ("sine", 5, 3, 0, 10, 0.1),
        ("sine", 5, 3, 60, -1, 0.1), ("sine", 5, 3, 60, 10, 0), ("square", 5, 3, 60, 10, 0.1),
    ])
    def test_rejects_bad_arguments(self, args):
        with pytest.raises(ValueError):
            synth_profile(*args)


def test_profile_csv_roundtrip(tmp_path):
    p = synth_profile("sine", 5, 3, 60, 30, 0.1)
    p.write_csv(tmp_path / "p.csv")
    q = LeadProfile.read_csv(tmp_path / "p.csv")
    assert q.dt == pytest.approx(0.1)
    assert q.speeds.tobytes() == p.speeds.tobytes()
    q.write_csv(tmp_path / "q.csv")
    assert (tmp_path / "p.csv").read_bytes() == (tmp_path / "q.csv").read_bytes()


def test_profile_rejects_negative_speed():
    with pytest.raises(ValueError):
        LeadProfile(0.1, [1.0, -0.5])
