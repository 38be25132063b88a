"""End-to-end link metrics.

* command delay: receive timestamp minus transmit timestamp, per matched
  frame id, on synchronized clocks;
* command reliability: received count over transmitted count, exact;
* video frame delay (display minus capture) and per-frame throughput
  (frame bits over frame delay), plus windowed delivered throughput;
* a screen-beacon delay estimator that reproduces the quantization error of
  sampling a displayed timestamp at a finite refresh/screenshot rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .simcore import USEC_PER_SEC
from .video import VideoLog

# Two synchronized clocks each contribute up to 1 ms of residual offset, so a
# measured delay can undershoot the true delay by at most 2 ms.
DEFAULT_ANOMALY_FLOOR_US = -2000


class UndefinedMetricError(ValueError):
    """The metric is undefined for the given inputs (e.g. empty sample set)."""


class JoinError(ValueError):
    """A received frame id has no matching transmit record."""


def cc_delay_us(t_ct_us: int, t_cr_us: int) -> int:
    """Command-frame delay: receive timestamp minus transmit timestamp."""
    return t_cr_us - t_ct_us


def aggregate(delays: Sequence[float]) -> tuple[float, float, float]:
    """(min, average, max) of a nonempty delay sequence."""
    if len(delays) == 0:
        raise UndefinedMetricError("cannot aggregate an empty delay sequence")
    return (min(delays), sum(delays) / len(delays), max(delays))


def reliability(n_rece: int, n_trans: int) -> float:
    if n_trans <= 0:
        raise UndefinedMetricError("reliability undefined for n_trans = 0")
    if n_rece > n_trans:
        raise ValueError(f"n_rece {n_rece} exceeds n_trans {n_trans}")
    return n_rece / n_trans


@dataclass
class CcStats:
    """Delay and reliability statistics of one command-link session."""

    n_trans: int
    n_rece: int
    delays_us: list[int]
    anomalies: int = 0

    @property
    def reliability(self) -> float:
        return reliability(self.n_rece, self.n_trans)

    def delay_aggregate_us(self) -> tuple[float, float, float]:
        return aggregate(self.delays_us)


def match_cc_logs(
    tx_log: Sequence[tuple[int, int]],
    rx_log: Sequence[tuple[int, int]],
    anomaly_floor_us: int = DEFAULT_ANOMALY_FLOOR_US,
) -> CcStats:
    """Join transmit and receive logs on frame id and compute per-frame delays.

    Delays more negative than ``anomaly_floor_us`` (beyond what clock
    residuals can explain) are excluded from the delay series and counted.
    Every received id must exist in the transmit log.
    """
    tx_by_id = dict(tx_log)
    if len(tx_by_id) != len(tx_log):
        raise JoinError("duplicate frame ids in transmit log")
    delays: list[int] = []
    anomalies = 0
    for frame_id, t_cr in rx_log:
        if frame_id not in tx_by_id:
            raise JoinError(f"received frame id {frame_id} never transmitted")
        d = cc_delay_us(tx_by_id[frame_id], t_cr)
        if d < anomaly_floor_us:
            anomalies += 1
        else:
            delays.append(d)
    return CcStats(n_trans=len(tx_log), n_rece=len(rx_log), delays_us=delays, anomalies=anomalies)


@dataclass
class VideoStats:
    """Per-frame and windowed statistics of one video session."""

    frames_total: int
    frames_completed: int
    frames_lost: int
    frames_unresolved: int
    delays_us: list[int]  # completed frames, measured on local clocks
    per_frame_throughput_bps: list[float]  # size_bits / delay per completed frame
    segments_sent: int
    segments_delivered: int
    segments_dropped: int
    throughput_avg_bps: float  # delivered payload bits / session duration
    window_us: int
    windowed_throughput_bps: list[float]
    windowed_loss_frac: list[float]

    @property
    def segment_loss_frac(self) -> float:
        if self.segments_sent == 0:
            return 0.0
        return self.segments_dropped / self.segments_sent

    def delay_aggregate_us(self) -> tuple[float, float, float]:
        return aggregate(self.delays_us)


def video_stats(log: VideoLog, duration_us: int, window_us: int = USEC_PER_SEC) -> VideoStats:
    """Compute delay/throughput statistics from a session log.

    Per-frame throughput divides the encoded frame size by the measured frame
    delay. The aggregate and windowed throughput count delivered payload bits
    per unit time, which is what a bandwidth cap actually limits.
    """
    if duration_us <= 0:
        raise UndefinedMetricError("duration_us must be > 0")
    delays: list[int] = []
    per_frame_tp: list[float] = []
    completed = lost = unresolved = 0
    segments_sent = 0
    for rec in log.frames:
        segments_sent += rec.segments_sent
        if rec.status == "completed":
            completed += 1
            d = rec.t_vr_us - rec.t_vt_us
            delays.append(d)
            if d > 0:
                per_frame_tp.append(rec.size_bits * USEC_PER_SEC / d)
        elif rec.status == "lost":
            lost += 1
        else:
            unresolved += 1
    n_windows = max(1, math.ceil(duration_us / window_us))
    delivered_bits = [0] * n_windows
    offered_segs = [0] * n_windows
    dropped_segs = [0] * n_windows
    delivered_total = 0
    segments_delivered = 0
    segments_dropped = 0
    for ev in log.segment_events:
        w = min(n_windows - 1, ev.t_us // window_us)
        if ev.kind == "arrive":
            delivered_bits[w] += ev.payload_bits
            delivered_total += ev.payload_bits
            segments_delivered += 1
            offered_segs[w] += 1
        elif ev.kind in ("drop_random", "drop_queue"):
            dropped_segs[w] += 1
            offered_segs[w] += 1
            segments_dropped += 1
    windowed_tp = [bits * USEC_PER_SEC / window_us for bits in delivered_bits]
    windowed_loss = [
        (dropped_segs[i] / offered_segs[i]) if offered_segs[i] else 0.0 for i in range(n_windows)
    ]
    return VideoStats(
        frames_total=len(log.frames),
        frames_completed=completed,
        frames_lost=lost,
        frames_unresolved=unresolved,
        delays_us=delays,
        per_frame_throughput_bps=per_frame_tp,
        segments_sent=segments_sent,
        segments_delivered=segments_delivered,
        segments_dropped=segments_dropped,
        throughput_avg_bps=delivered_total * USEC_PER_SEC / duration_us,
        window_us=window_us,
        windowed_throughput_bps=windowed_tp,
        windowed_loss_frac=windowed_loss,
    )


@dataclass(frozen=True)
class BeaconProbe:
    """Screen-beacon measurement chain.

    The sender's screen repaints the current local time at ``display_refresh_hz``;
    the capture latches the last repaint strictly before it. On the far side a
    screenshot fires at ``sampler_rate_hz`` and reads the newest frame whose
    display time is at or before the screenshot instant.
    """

    display_refresh_hz: float = 60.0
    sampler_rate_hz: float = 60.0
    refresh_phase_us: float = 0.0
    sampler_phase_us: float = 0.0

    def __post_init__(self) -> None:
        if self.display_refresh_hz <= 0 or self.sampler_rate_hz <= 0:
            raise ValueError("rates must be > 0")

    def error_bound_us(self, clock_residual_us: float = 2000.0) -> float:
        return (
            USEC_PER_SEC / self.display_refresh_hz
            + USEC_PER_SEC / self.sampler_rate_hz
            + clock_residual_us
        )


def beacon_estimate(
    probe: BeaconProbe,
    samples: Sequence[tuple[float, float]],
    tx_clock_offset_us: float = 0.0,
    rx_clock_offset_us: float = 0.0,
) -> list[float]:
    """Estimated delays for (capture_time_us, true_delay_us) samples.

    estimate = screenshot local time - latched beacon value. The estimate
    always overshoots: by up to one refresh interval (beacon staleness at
    capture) plus up to one sampler interval (screenshot granularity), plus
    whatever the two clock offsets contribute.
    """
    refresh_us = USEC_PER_SEC / probe.display_refresh_hz
    sample_us = USEC_PER_SEC / probe.sampler_rate_hz
    out: list[float] = []
    for t_capture, true_delay in samples:
        if true_delay < 0:
            raise ValueError("true delay must be >= 0")
        # Last repaint strictly before the capture instant.
        k = math.ceil((t_capture - probe.refresh_phase_us) / refresh_us) - 1
        latch_true = probe.refresh_phase_us + k * refresh_us
        beacon_value = latch_true + tx_clock_offset_us
        t_display = t_capture + true_delay
        # First screenshot at or after the display instant.
        m = math.ceil((t_display - probe.sampler_phase_us) / sample_us)
        t_shot = probe.sampler_phase_us + m * sample_us
        out.append((t_shot + rx_clock_offset_us) - beacon_value)
    return out
