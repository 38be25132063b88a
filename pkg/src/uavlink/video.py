"""Uplink video path: frame generation, segmentation over the emulated link,
reassembly with loss accounting, and a feedback FPS controller.

The encoder is constant-quality: mean encoded frame size is fixed per
resolution at nominal_bitrate / reference_fps bits, so the offered bit rate
scales with the frame rate the controller picks. A lost segment loses its
whole frame (no retransmission).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .netem import DeliveryOutcome, EmulatedLink
from .simcore import EventQueue, NodeClock, SeededRng, USEC_PER_SEC
from .wire import SEGMENT_HEADER_LEN, VideoSegmentHeader

SUPPORTED_RESOLUTIONS = {
    "320x240": (320, 240),
    "640x480": (640, 480),
    "1280x720": (1280, 720),
}

# Calibration defaults for the per-resolution stream rate at the reference
# frame rate. The two larger ones deliberately exceed the default uplink
# capacity so the controller ends up bandwidth-capped.
DEFAULT_NOMINAL_BITRATE_BPS = {
    "320x240": 7.08e6,
    "640x480": 12.0e6,
    "1280x720": 20.0e6,
}


@dataclass(frozen=True)
class Resolution:
    width: int
    height: int

    def __post_init__(self) -> None:
        if (self.width, self.height) not in SUPPORTED_RESOLUTIONS.values():
            raise ValueError(
                f"unsupported resolution {self.width}x{self.height}; "
                f"supported: {', '.join(SUPPORTED_RESOLUTIONS)}"
            )

    @classmethod
    def parse(cls, text: str) -> "Resolution":
        if text not in SUPPORTED_RESOLUTIONS:
            raise ValueError(
                f"unsupported resolution {text!r}; supported: {', '.join(SUPPORTED_RESOLUTIONS)}"
            )
        return cls(*SUPPORTED_RESOLUTIONS[text])

    def __str__(self) -> str:
        return f"{self.width}x{self.height}"

    def default_bitrate_bps(self) -> float:
        return DEFAULT_NOMINAL_BITRATE_BPS[str(self)]


@dataclass(frozen=True)
class EncoderModel:
    """Log-normal per-frame sizes with mean nominal_bitrate / reference_fps."""

    nominal_bitrate_bps: float
    reference_fps: float = 30.0
    size_jitter_cv: float = 0.2

    def __post_init__(self) -> None:
        if self.nominal_bitrate_bps <= 0 or self.reference_fps <= 0:
            raise ValueError("nominal_bitrate_bps and reference_fps must be > 0")
        if self.size_jitter_cv < 0:
            raise ValueError("size_jitter_cv must be >= 0")

    @classmethod
    def for_resolution(cls, resolution: Resolution, **kwargs) -> "EncoderModel":
        return cls(nominal_bitrate_bps=resolution.default_bitrate_bps(), **kwargs)

    def mean_frame_bits(self) -> float:
        return self.nominal_bitrate_bps / self.reference_fps

    def draw_frame_bits(self, rng: SeededRng) -> int:
        mean = self.mean_frame_bits()
        cv = self.size_jitter_cv
        if cv == 0.0:
            return max(8, round(mean))
        sigma2 = math.log(1.0 + cv * cv)
        mu = math.log(mean) - sigma2 / 2.0
        return max(8, round(rng.lognormvariate(mu, math.sqrt(sigma2))))


@dataclass
class FpsController:
    """Additive-increase / multiplicative-decrease frame-rate controller.

    Once per window: if the segment-loss fraction or the mean frame delay
    crossed its threshold, multiply fps by decrease_factor, else add
    increase_step. Output always stays within [min_fps, max_fps].
    """

    fps: float = 30.0
    min_fps: float = 1.0
    max_fps: float = 30.0
    increase_step: float = 1.0
    decrease_factor: float = 0.85
    loss_threshold: float = 0.02
    delay_threshold_us: int = 250_000
    window_ms: int = 1000
    enabled: bool = True

    def __post_init__(self) -> None:
        if not 0 < self.min_fps <= self.max_fps:
            raise ValueError("need 0 < min_fps <= max_fps")
        if not 0.0 < self.decrease_factor < 1.0:
            raise ValueError("decrease_factor must be in (0, 1)")
        if self.increase_step < 0:
            raise ValueError("increase_step must be >= 0")
        if self.window_ms <= 0:
            raise ValueError("window_ms must be > 0")
        self.fps = min(self.max_fps, max(self.min_fps, self.fps))

    def adapt(self, loss_frac: float, mean_delay_us: Optional[float]) -> float:
        if not self.enabled:
            return self.fps
        congested = loss_frac > self.loss_threshold or (
            mean_delay_us is not None and mean_delay_us > self.delay_threshold_us
        )
        if congested:
            self.fps = max(self.min_fps, self.fps * self.decrease_factor)
        else:
            self.fps = min(self.max_fps, self.fps + self.increase_step)
        return self.fps


def segmentize(
    frame_seq: int,
    payload_bytes: int,
    mtu_payload: int,
    capture_ts: int,
    stream_epoch: int = 1,
) -> list[VideoSegmentHeader]:
    """Split a frame into ceil(payload_bytes / mtu_payload) contiguous segments."""
    if mtu_payload <= 0:
        raise ValueError("mtu_payload must be > 0")
    if payload_bytes <= 0:
        raise ValueError("payload_bytes must be > 0")
    count = (payload_bytes + mtu_payload - 1) // mtu_payload
    headers = []
    remaining = payload_bytes
    for idx in range(count):
        chunk = min(mtu_payload, remaining)
        remaining -= chunk
        headers.append(
            VideoSegmentHeader(
                stream_epoch=stream_epoch,
                frame_seq=frame_seq,
                segment_index=idx,
                segment_count=count,
                capture_ts=capture_ts,
                payload_len=chunk,
            )
        )
    return headers


@dataclass
class VideoFrameRecord:
    frame_seq: int
    t_vt_us: int  # sender-local capture time
    t_vt_true_us: int
    size_bits: int
    segments_sent: int
    fps_at_capture: float
    segments_dropped: int = 0
    t_vr_us: Optional[int] = None  # receiver-local display time; None unless completed
    delay_true_us: Optional[int] = None
    status: str = "pending"  # pending | completed | lost | unresolved


@dataclass(frozen=True)
class SegmentEvent:
    t_us: int
    kind: str  # offered | arrive | drop_random | drop_queue | duplicate
    payload_bits: int
    wire_bits: int
    frame_seq: int


@dataclass
class VideoLog:
    frames: list[VideoFrameRecord] = field(default_factory=list)
    segment_events: list[SegmentEvent] = field(default_factory=list)


class Reassembler:
    """Receiver-side frame assembly.

    A frame completes when all of its segments have arrived. A pending frame
    is declared lost once a newer frame has completed and the pending frame
    has been idle past the gap timeout. Duplicate segments are ignored but
    counted.
    """

    def __init__(
        self,
        on_complete: Callable[[int, int], None],
        on_lost: Optional[Callable[[int, int], None]] = None,
        gap_timeout_us: int = 500_000,
    ):
        self._on_complete = on_complete
        self._on_lost = on_lost
        self.gap_timeout_us = gap_timeout_us
        self._pending: dict[int, dict] = {}
        self._done: set[int] = set()
        self.duplicates = 0
        self.completed = 0
        self.declared_lost = 0
        self.highest_completed = -1

    def on_segment(self, header: VideoSegmentHeader, t_us: int) -> Optional[int]:
        """Returns the frame_seq if this segment completed its frame."""
        seq = header.frame_seq
        if seq in self._done:
            self.duplicates += 1
            return None
        entry = self._pending.setdefault(
            seq, {"got": set(), "count": header.segment_count, "last": t_us}
        )
        if header.segment_index in entry["got"]:
            self.duplicates += 1
            return None
        entry["got"].add(header.segment_index)
        entry["last"] = t_us
        completed = None
        if len(entry["got"]) == entry["count"]:
            del self._pending[seq]
            self._done.add(seq)
            self.completed += 1
            self.highest_completed = max(self.highest_completed, seq)
            self._on_complete(seq, t_us)
            completed = seq
        self._gc(t_us)
        return completed

    def _gc(self, t_us: int) -> None:
        stale = [
            seq
            for seq, entry in self._pending.items()
            if seq < self.highest_completed and t_us - entry["last"] >= self.gap_timeout_us
        ]
        for seq in stale:
            del self._pending[seq]
            self.declared_lost += 1
            if self._on_lost is not None:
                self._on_lost(seq, t_us)

    def pending_count(self) -> int:
        return len(self._pending)


@dataclass
class WindowRecord:
    index: int
    start_us: int
    offered_segments: int = 0
    dropped_segments: int = 0
    delivered_segments: int = 0
    delivered_payload_bits: int = 0
    delivered_wire_bits: int = 0
    completed_frames: int = 0
    mean_frame_delay_us: Optional[float] = None
    loss_frac: float = 0.0
    fps: float = 0.0  # frame rate in force during the window
    elevation_deg: Optional[float] = None

    def delivered_payload_bps(self, window_us: int) -> float:
        return self.delivered_payload_bits * USEC_PER_SEC / window_us

    def delivered_wire_bps(self, window_us: int) -> float:
        return self.delivered_wire_bits * USEC_PER_SEC / window_us


@dataclass
class VideoSessionResult:
    log: VideoLog
    windows: list[WindowRecord]
    window_us: int
    duration_us: int
    link: EmulatedLink
    reassembler: Reassembler
    controller: FpsController

    def delivered_payload_bits(self) -> int:
        return sum(e.payload_bits for e in self.log.segment_events if e.kind == "arrive")

    def average_delivered_bps(self) -> float:
        return self.delivered_payload_bits() * USEC_PER_SEC / self.duration_us

    def conservation_terms(self) -> dict[str, int]:
        c = self.link.uplink_counters
        return {
            "sent": c.offered,
            "delivered": c.delivered,
            "dropped_random": c.dropped_random,
            "dropped_queue": c.dropped_queue,
            "in_flight": c.in_flight(),
        }


class VideoSession:
    """Event-driven uplink video run over an existing world."""

    def __init__(
        self,
        queue: EventQueue,
        link: EmulatedLink,
        clock_uav: NodeClock,
        clock_gcs: NodeClock,
        encoder: EncoderModel,
        controller: FpsController,
        rng_sizes: SeededRng,
        duration_us: int,
        mtu_payload_bytes: int = 1400,
        reassembly_timeout_us: int = 500_000,
        display_latency_us: int = 0,
        stream_epoch: int = 1,
        t0_us: int = 0,
    ):
        self.queue = queue
        self.link = link
        self.clock_uav = clock_uav
        self.clock_gcs = clock_gcs
        self.encoder = encoder
        self.controller = controller
        self.rng = rng_sizes
        self.duration_us = duration_us
        self.mtu_payload_bytes = mtu_payload_bytes
        self.display_latency_us = display_latency_us
        self.stream_epoch = stream_epoch
        self.t0_us = t0_us
        self.window_us = controller.window_ms * 1000
        self.log = VideoLog()
        self.windows: list[WindowRecord] = []
        self._records: dict[int, VideoFrameRecord] = {}
        self._next_seq = 0
        self._acc = WindowRecord(index=0, start_us=t0_us, fps=controller.fps)
        self._acc_delays: list[int] = []
        self.reassembler = Reassembler(self._frame_completed, gap_timeout_us=reassembly_timeout_us)

    def start(self) -> None:
        self.queue.schedule(self.t0_us, self._capture)
        self.queue.schedule(self.t0_us + self.window_us, self._close_window)

    # -- sender side ---------------------------------------------------------

    def _capture(self, t: int) -> None:
        fps = self.controller.fps
        size_bits = self.encoder.draw_frame_bits(self.rng)
        payload_bytes = (size_bits + 7) // 8
        capture_ts = self.clock_uav.local_now(t)
        headers = segmentize(
            self._next_seq, payload_bytes, self.mtu_payload_bytes, capture_ts, self.stream_epoch
        )
        rec = VideoFrameRecord(
            frame_seq=self._next_seq,
            t_vt_us=capture_ts,
            t_vt_true_us=t,
            size_bits=size_bits,
            segments_sent=len(headers),
            fps_at_capture=fps,
        )
        self._records[self._next_seq] = rec
        self.log.frames.append(rec)
        for h in headers:
            wire_bytes = SEGMENT_HEADER_LEN + h.payload_len
            self._acc.offered_segments += 1
            outcome = self.link.send_uplink(wire_bytes, t, self._segment_arrived, meta=h)
            if outcome is not DeliveryOutcome.IN_FLIGHT:
                kind = "drop_random" if outcome is DeliveryOutcome.DROPPED_RANDOM else "drop_queue"
                rec.segments_dropped += 1
                rec.status = "lost"
                self._acc.dropped_segments += 1
                self.log.segment_events.append(
                    SegmentEvent(t, kind, h.payload_len * 8, wire_bytes * 8, h.frame_seq)
                )
        self._next_seq += 1
        next_t = t + max(1, int(USEC_PER_SEC // self.controller.fps))
        if next_t <= self.duration_us:
            self.queue.schedule(next_t, self._capture)

    # -- receiver side -------------------------------------------------------

    def _segment_arrived(self, header: VideoSegmentHeader, t: int) -> None:
        wire_bits = (SEGMENT_HEADER_LEN + header.payload_len) * 8
        self._acc.delivered_segments += 1
        self._acc.delivered_payload_bits += header.payload_len * 8
        self._acc.delivered_wire_bits += wire_bits
        self.log.segment_events.append(
            SegmentEvent(t, "arrive", header.payload_len * 8, wire_bits, header.frame_seq)
        )
        self.reassembler.on_segment(header, t)

    def _frame_completed(self, frame_seq: int, t: int) -> None:
        rec = self._records[frame_seq]
        t_display = t + self.display_latency_us
        rec.t_vr_us = self.clock_gcs.local_now(t_display)
        rec.delay_true_us = t_display - rec.t_vt_true_us
        rec.status = "completed"
        self._acc.completed_frames += 1
        self._acc_delays.append(rec.delay_true_us)

    # -- windowing / control -------------------------------------------------

    def _close_window(self, t: int) -> None:
        self._finalize_window(t)
        if t + self.window_us <= self.duration_us:
            self.queue.schedule(t + self.window_us, self._close_window)

    def _finalize_window(self, t_end: int) -> None:
        acc = self._acc
        if acc.offered_segments > 0:
            acc.loss_frac = acc.dropped_segments / acc.offered_segments
        if self._acc_delays:
            acc.mean_frame_delay_us = sum(self._acc_delays) / len(self._acc_delays)
        mid = acc.start_us + (t_end - acc.start_us) // 2
        acc.elevation_deg = self.link.elevation_deg(mid)
        self.windows.append(acc)
        self.controller.adapt(acc.loss_frac, acc.mean_frame_delay_us)
        self._acc = WindowRecord(index=acc.index + 1, start_us=t_end, fps=self.controller.fps)
        self._acc_delays = []

    def finish(self) -> VideoSessionResult:
        """Call after the world has run to duration: flushes the partial
        window and settles frame statuses."""
        if (
            self._acc.offered_segments
            or self._acc.delivered_segments
            or self._acc.completed_frames
        ):
            self._finalize_window(self.duration_us)
        for rec in self._records.values():
            if rec.status == "pending":
                rec.status = "lost" if rec.segments_dropped > 0 else "unresolved"
        return VideoSessionResult(
            log=self.log,
            windows=self.windows,
            window_us=self.window_us,
            duration_us=self.duration_us,
            link=self.link,
            reassembler=self.reassembler,
            controller=self.controller,
        )


def run_video_session(
    link_cfg,
    encoder: EncoderModel,
    controller: FpsController,
    duration_s: float,
    seed: int = 0,
    *,
    uav_position_fn=None,
    bs_position=(0.0, 0.0, 0.0),
    gain_model=None,
    mtu_payload_bytes: int = 1400,
    reassembly_timeout_us: int = 500_000,
    display_latency_us: int = 0,
    clock_template: Optional[NodeClock] = None,
) -> VideoSessionResult:
    """Standalone uplink session in a fresh world."""
    from .simcore import start_periodic_sync

    root = SeededRng(seed)
    queue = EventQueue()
    tmpl = clock_template if clock_template is not None else NodeClock()
    clock_gcs = replace(tmpl)
    clock_uav = replace(tmpl)
    start_periodic_sync(queue, clock_gcs, root.spawn("clock.gcs"), 0)
    start_periodic_sync(queue, clock_uav, root.spawn("clock.uav"), 0)
    link = EmulatedLink(
        queue,
        link_cfg,
        root.spawn("link.up"),
        root.spawn("link.down"),
        uav_position_fn=uav_position_fn,
        bs_position=bs_position,
        gain_model=gain_model,
    )
    duration_us = int(round(duration_s * USEC_PER_SEC))
    session = VideoSession(
        queue,
        link,
        clock_uav,
        clock_gcs,
        encoder,
        controller,
        root.spawn("encoder.sizes"),
        duration_us,
        mtu_payload_bytes=mtu_payload_bytes,
        reassembly_timeout_us=reassembly_timeout_us,
        display_latency_us=display_latency_us,
    )
    session.start()
    queue.run_until(duration_us)
    return session.finish()
