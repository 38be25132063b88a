import math

import pytest

from uavlink.netem import NO_JITTER, GainCapacityModel, LinkConfig
from uavlink.simcore import SeededRng
from uavlink.video import (
    EncoderModel,
    FpsController,
    Resolution,
    Reassembler,
    VideoLog,
    run_video_session,
    segmentize,
)
from uavlink.wire import VideoSegmentHeader

LOSSLESS = LinkConfig(jitter=NO_JITTER)


def test_resolution_set_is_closed():
    assert str(Resolution.parse("320x240")) == "320x240"
    with pytest.raises(ValueError):
        Resolution.parse("111x111")
    with pytest.raises(ValueError):
        Resolution(111, 111)


def test_mean_frame_size_matches_bitrate_over_reference_fps():
    enc = EncoderModel.for_resolution(Resolution.parse("320x240"))
    assert enc.mean_frame_bits() == pytest.approx(7.08e6 / 30)  # 236 kbit


def test_zero_jitter_cv_gives_exact_mean():
    enc = EncoderModel(nominal_bitrate_bps=7.08e6, size_jitter_cv=0.0)
    rng = SeededRng(1)
    sizes = {enc.draw_frame_bits(rng) for _ in range(100)}
    assert sizes == {236_000}


def test_frame_sizes_satisfy_law_of_large_numbers():
    # 10 s at 30 fps: total bits ~ nominal_bitrate * 10 within 3%.
    enc = EncoderModel(nominal_bitrate_bps=7.08e6)
    rng = SeededRng(2)
    total = sum(enc.draw_frame_bits(rng) for _ in range(300))
    assert total == pytest.approx(7.08e6 * 10, rel=0.03)


def test_segmentize_ceiling_split():
    headers = segmentize(7, 3000, 1400, capture_ts=123)
    assert [h.payload_len for h in headers] == [1400, 1400, 200]
    assert [h.segment_index for h in headers] == [0, 1, 2]
    assert all(h.segment_count == 3 and h.frame_seq == 7 and h.capture_ts == 123 for h in headers)


def test_segmentize_small_frame_is_single_segment():
    headers = segmentize(0, 100, 1400, capture_ts=0)
    assert len(headers) == 1
    assert headers[0].payload_len == 100


def test_reassembler_round_trip_random_frames():
    rng = SeededRng(3)
    done = []
    r = Reassembler(lambda seq, t: done.append(seq))
    t = 0
    for seq in range(200):
        nbytes = rng.randint(1, 6000)
        for h in segmentize(seq, nbytes, 1400, capture_ts=t):
            t += 10
            r.on_segment(h, t)
    assert done == list(range(200))
    assert r.pending_count() == 0


def test_reassembler_declares_gap_frames_lost():
    done, lost = [], []
    r = Reassembler(lambda seq, t: done.append(seq), lambda seq, t: lost.append(seq), gap_timeout_us=500_000)
    incomplete = segmentize(0, 3000, 1400, capture_ts=0)
    r.on_segment(incomplete[0], 0)
    r.on_segment(incomplete[2], 10)  # middle segment never arrives
    for h in segmentize(1, 1000, 1400, capture_ts=20):
        r.on_segment(h, 20)
    assert done == [1]
    assert lost == []  # timeout not yet expired
    for h in segmentize(2, 1000, 1400, capture_ts=600_000):
        r.on_segment(h, 600_000)
    assert lost == [0]


def test_reassembler_counts_duplicates():
    r = Reassembler(lambda seq, t: None)
    h = segmentize(0, 3000, 1400, capture_ts=0)[0]
    r.on_segment(h, 0)
    r.on_segment(h, 1)
    assert r.duplicates == 1


def test_fps_controller_additive_increase():
    c = FpsController(fps=20.0, increase_step=2.0)
    assert c.adapt(0.0, 10_000) == 22.0


def test_fps_controller_multiplicative_decrease():
    c = FpsController(fps=30.0, decrease_factor=0.7, loss_threshold=0.02)
    assert c.adapt(0.10, 10_000) == pytest.approx(21.0)


def test_fps_controller_respects_bounds():
    c = FpsController(fps=30.0, min_fps=5.0, max_fps=30.0, decrease_factor=0.5)
    for _ in range(20):
        c.adapt(1.0, None)
    assert c.fps == 5.0
    for _ in range(60):
        c.adapt(0.0, 0)
    assert c.fps == 30.0


def test_fixed_fps_stream_delivers_nominal_rate():
    enc = EncoderModel.for_resolution(Resolution.parse("320x240"))
    res = run_video_session(LOSSLESS, enc, FpsController(fps=30.0, enabled=False), 10.0, seed=4)
    assert res.average_delivered_bps() == pytest.approx(7.08e6, rel=0.05)
    st = [f.status for f in res.log.frames]
    assert st.count("lost") == 0


def test_frame_delay_definition():
    enc = EncoderModel(nominal_bitrate_bps=7.08e6, size_jitter_cv=0.0)
    res = run_video_session(LOSSLESS, enc, FpsController(fps=10.0, enabled=False), 2.0, seed=5)
    completed = [f for f in res.log.frames if f.status == "completed"]
    assert completed
    for f in completed:
        assert f.t_vr_us is not None
        # base delay + serialization of ~236 kbit at 8.78 Mb/s, +-clock residuals
        true_min = 13_830 + 236_000 / 8.78e6 * 1e6
        assert f.t_vr_us - f.t_vt_us == pytest.approx(true_min, abs=2500)


def test_lost_segment_loses_its_frame_and_only_that_frame():
    cfg = LinkConfig(jitter=NO_JITTER, random_loss_prob=0.02)
    enc = EncoderModel.for_resolution(Resolution.parse("320x240"))
    res = run_video_session(cfg, enc, FpsController(fps=30.0, enabled=False), 10.0, seed=6)
    for f in res.log.frames:
        if f.status == "completed":
            assert f.segments_dropped == 0 and f.t_vr_us is not None
        if f.segments_dropped > 0:
            assert f.status == "lost" and f.t_vr_us is None
    assert any(f.status == "lost" for f in res.log.frames)


def test_total_outage_loses_everything():
    cfg = LinkConfig(jitter=NO_JITTER, random_loss_prob=1.0)
    enc = EncoderModel.for_resolution(Resolution.parse("320x240"))
    res = run_video_session(cfg, enc, FpsController(fps=30.0, enabled=False), 5.0, seed=7)
    assert all(f.status == "lost" for f in res.log.frames)
    assert res.average_delivered_bps() == 0.0


def test_aimd_converges_into_capacity_band():
    enc = EncoderModel.for_resolution(Resolution.parse("1280x720"))
    res = run_video_session(LinkConfig(), enc, FpsController(fps=30.0), 30.0, seed=8)
    assert 0.90 * 8.78e6 <= res.average_delivered_bps() <= 8.78e6


def test_fps_stays_within_bounds_through_a_session():
    enc = EncoderModel.for_resolution(Resolution.parse("1280x720"))
    res = run_video_session(LinkConfig(), enc, FpsController(fps=30.0), 20.0, seed=9)
    for w in res.windows:
        assert 1.0 <= w.fps <= 30.0


def test_raising_capacity_never_lowers_delivered_throughput():
    enc = EncoderModel.for_resolution(Resolution.parse("320x240"))
    delivered = []
    for cap in (2e6, 4e6, 8.78e6):
        cfg = LinkConfig(jitter=NO_JITTER, uplink_capacity_bps=cap)
        res = run_video_session(cfg, enc, FpsController(fps=30.0, enabled=False), 10.0, seed=10)
        delivered.append(res.average_delivered_bps())
    assert delivered == sorted(delivered)


def test_windowed_throughput_never_exceeds_effective_capacity():
    enc = EncoderModel.for_resolution(Resolution.parse("1280x720"))
    res = run_video_session(LinkConfig(jitter=NO_JITTER), enc, FpsController(fps=30.0), 20.0, seed=11)
    for w in res.windows[:-1]:  # final window may be partial
        assert w.delivered_wire_bps(res.window_us) <= 8.78e6 * 1.02


def test_segment_conservation_exact():
    cfg = LinkConfig(random_loss_prob=0.01)
    enc = EncoderModel.for_resolution(Resolution.parse("1280x720"))
    res = run_video_session(cfg, enc, FpsController(fps=30.0), 15.0, seed=12)
    c = res.conservation_terms()
    assert c["sent"] == c["delivered"] + c["dropped_random"] + c["dropped_queue"] + c["in_flight"]
    assert c["sent"] == sum(f.segments_sent for f in res.log.frames)


def test_flyover_throughput_minimum_at_peak_elevation():
    from uavlink.netem import FlyOverPath

    enc = EncoderModel.for_resolution(Resolution.parse("1280x720"))
    path = FlyOverPath(height_m=2.0, offset_m=1.0, speed_mps=0.5, midpoint_s=15.0)
    res = run_video_session(
        LinkConfig(),
        enc,
        FpsController(fps=30.0),
        30.0,
        seed=13,
        uav_position_fn=path.position,
        gain_model=GainCapacityModel(theta_edge_deg=54.0),
    )
    tp = [w.delivered_payload_bps(res.window_us) for w in res.windows]
    ang = [w.elevation_deg for w in res.windows]
    assert abs(tp.index(min(tp)) - ang.index(max(ang))) <= 1
