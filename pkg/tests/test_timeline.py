import numpy as np
import pytest

from ctse.errors import ParameterError
from ctse.timeline import (
    ActivityTrack,
    Segment,
    Timeline,
    labels_to_segments,
    merge_intervals,
    timeline_to_track,
)


def _tl(segs, duration):
    return Timeline(tuple(Segment(*s) for s in segs), duration)


class TestTimelineInvariants:
    def test_same_speaker_overlap_rejected(self):
        with pytest.raises(ParameterError):
            _tl([(0.0, 2.0, "a"), (1.5, 3.0, "a")], 5.0)

    def test_cross_speaker_overlap_allowed(self):
        tl = _tl([(0.0, 2.0, "a"), (1.5, 3.0, "b")], 5.0)
        assert tl.overlap_ratio() == pytest.approx(0.5 / 3.0)

    def test_out_of_bounds_rejected(self):
        with pytest.raises(ParameterError):
            _tl([(0.0, 6.0, "a")], 5.0)
        with pytest.raises(ParameterError):
            _tl([(2.0, 2.0, "a")], 5.0)

    def test_segments_sorted(self):
        tl = _tl([(3.0, 4.0, "b"), (0.0, 1.0, "a")], 5.0)
        assert tl.segments[0].speaker == "a"


class TestRttmAndJson:
    def test_rttm_round_trip(self):
        tl = _tl([(0.25, 1.5, "spk01"), (2.0, 4.75, "spk02")], 6.0)
        back = Timeline.from_rttm(tl.to_rttm("rec7"), 6.0)
        for a, b in zip(tl.segments, back.segments):
            assert a.speaker == b.speaker
            assert a.start == pytest.approx(b.start, abs=1e-6)
            assert a.end == pytest.approx(b.end, abs=1e-6)

    def test_rttm_line_format(self):
        line = _tl([(1.0, 2.5, "x")], 3.0).to_rttm("rec").splitlines()[0]
        parts = line.split()
        assert parts[0] == "SPEAKER"
        assert parts[1] == "rec"
        assert parts[2] == "1"
        assert float(parts[3]) == pytest.approx(1.0)
        assert float(parts[4]) == pytest.approx(1.5)
        assert parts[7] == "x"

    def test_bad_rttm_rejected(self):
        with pytest.raises(ParameterError):
            Timeline.from_rttm("SPEAKER too short\n", 5.0)

    def test_json_round_trip(self):
        tl = _tl([(0.0, 1.0, "a"), (0.5, 2.0, "b")], 4.0)
        back = Timeline.from_json(tl.to_json())
        assert back == tl


class TestActivityTrack:
    def test_probability_range_validated(self):
        with pytest.raises(ParameterError):
            ActivityTrack(np.array([0.5, 1.2]), 0.25, 1.5, kind="probability")

    def test_label_values_validated(self):
        with pytest.raises(ParameterError):
            ActivityTrack(np.array([0.0, 0.5]), 0.25, 1.5, kind="label")

    def test_csv_header(self):
        track = ActivityTrack(np.array([0.25, 0.75]), 0.25, 1.5)
        lines = track.to_csv().splitlines()
        assert lines[0] == "frame_index,start_s,prob"
        assert lines[1].startswith("0,0.000000,")


class TestTimelineToTrack:
    def test_empty_timeline_all_zero(self):
        track = timeline_to_track(_tl([], 2.0), "a", 0.25, 0.25)
        assert len(track) == 8
        assert np.all(track.values == 0)

    def test_full_activity_all_one(self):
        track = timeline_to_track(_tl([(0.0, 2.0, "a")], 2.0), "a", 0.25, 0.25)
        assert np.all(track.values == 1)

    def test_half_active_brute_force(self):
        # speaker active [0, 1) of 2 s: frames fully inside are 1, rest 0
        track = timeline_to_track(_tl([(0.0, 1.0, "a")], 2.0), "a", 0.25, 0.25)
        np.testing.assert_array_equal(track.values, [1, 1, 1, 1, 0, 0, 0, 0])

    def test_majority_rule_against_per_frame_oracle(self, rng):
        for _ in range(20):
            duration = 6.0
            segs = []
            cursor = 0.0
            while cursor < duration - 0.5:
                start = cursor + float(rng.uniform(0.05, 0.8))
                end = min(duration, start + float(rng.uniform(0.1, 1.2)))
                if end - start > 0.01:
                    segs.append((start, end, "a"))
                cursor = end
            tl = _tl(segs, duration)
            hop, win = 0.25, 1.5
            track = timeline_to_track(tl, "a", hop, win)
            for k, v in enumerate(track.values):
                w0 = k * hop
                w1 = min(w0 + win, duration)
                cover = sum(max(0.0, min(w1, e) - max(w0, s)) for s, e, _ in segs)
                assert v == float(cover > 0.5 * (w1 - w0))

    def test_absent_speaker_is_legal(self):
        track = timeline_to_track(_tl([(0.0, 1.0, "a")], 2.0), "ghost", 0.25, 0.25)
        assert np.all(track.values == 0)


class TestLabelsToSegments:
    def test_all_zero_gives_empty(self):
        track = ActivityTrack(np.zeros(10), 0.25, 1.5, kind="label")
        assert labels_to_segments(track, 4.0).segments == ()

    def test_single_window_extent(self):
        values = np.zeros(10)
        values[4] = 1.0
        track = ActivityTrack(values, 0.25, 1.5, kind="label")
        segs = labels_to_segments(track, 4.0).segments
        assert len(segs) == 1
        assert segs[0].start == pytest.approx(1.0)
        assert segs[0].end == pytest.approx(2.5)

    def test_extent_clipped_to_duration(self):
        values = np.zeros(8)
        values[7] = 1.0
        track = ActivityTrack(values, 0.25, 1.5, kind="label")
        segs = labels_to_segments(track, 2.0).segments
        assert segs[0].end == pytest.approx(2.0)

    def test_round_trip_identity_for_hop_aligned_segments(self):
        tl = _tl([(0.5, 1.25, "target"), (2.0, 2.75, "target")], 4.0)
        track = timeline_to_track(tl, "target", 0.25, 0.25)
        back = labels_to_segments(track, 4.0, "target")
        assert len(back.segments) == 2
        for a, b in zip(tl.segments, back.segments):
            assert a.start == pytest.approx(b.start, abs=1e-9)
            assert a.end == pytest.approx(b.end, abs=1e-9)
        track2 = timeline_to_track(back, "target", 0.25, 0.25)
        np.testing.assert_array_equal(track.values, track2.values)

    def test_probability_track_rejected(self):
        track = ActivityTrack(np.full(4, 0.5), 0.25, 1.5, kind="probability")
        with pytest.raises(ParameterError):
            labels_to_segments(track, 2.0)


def test_merge_intervals():
    assert merge_intervals([(0.0, 1.0), (0.5, 2.0), (3.0, 4.0)]) == [(0.0, 2.0), (3.0, 4.0)]
    assert merge_intervals([(1.0, 1.0)]) == []
