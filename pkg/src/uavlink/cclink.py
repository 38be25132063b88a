"""Ground-station command sender and UAV-side polling receiver.

The sender emits one 20-byte command datagram at exact intervals and logs
(frame_id, transmit time). The receiver keeps a bounded FIFO of undecoded
datagrams, dequeues at most one per poll, logs (frame_id, receive time), and
falls back to an all-zero control action whenever no fresh frame is
available. With the default 20 ms sleep plus 5 ms of per-poll processing the
effective drain rate is 40 Hz, so send rates above 40 Hz overflow the buffer.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from . import wire
from .netem import DeliveryOutcome, EmulatedLink
from .simcore import EventQueue, NodeClock, SeededRng, USEC_PER_SEC

RawSticks = tuple[int, int, int, int]


class StickSource:
    """Produces raw signed 16-bit (roll, pitch, yaw, thrust) samples.

    ``sample`` returns None when the source is exhausted; the sender then
    stops cleanly.
    """

    def sample(self, t_us: int) -> Optional[RawSticks]:
        raise NotImplementedError


class ZeroStick(StickSource):
    def sample(self, t_us: int) -> RawSticks:
        return (0, 0, 0, 0)


@dataclass
class ConstantStick(StickSource):
    roll: int = 0
    pitch: int = 0
    yaw: int = 0
    thrust: int = 0

    def sample(self, t_us: int) -> RawSticks:
        return (self.roll, self.pitch, self.yaw, self.thrust)


@dataclass
class SineStick(StickSource):
    """Sinusoidal waveform on every axis, phase-staggered a quarter period."""

    amplitude: float = 0.5
    period_s: float = 4.0

    def sample(self, t_us: int) -> RawSticks:
        w = 2.0 * math.pi * (t_us / USEC_PER_SEC) / self.period_s
        vals = []
        for k in range(4):
            v = self.amplitude * math.sin(w + k * math.pi / 2.0)
            vals.append(int(round(v * wire.STICK_MAX)))
        return tuple(vals)  # type: ignore[return-value]


class TraceStick(StickSource):
    """Replays a recorded list of raw samples, then exhausts."""

    def __init__(self, samples: list[RawSticks]):
        self._samples = list(samples)
        self._i = 0

    def sample(self, t_us: int) -> Optional[RawSticks]:
        if self._i >= len(self._samples):
            return None
        s = self._samples[self._i]
        self._i += 1
        return s


@dataclass(frozen=True)
class ControlAction:
    """What gets handed to the flight API on each poll."""

    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0
    thrust: float = 0.0
    is_failsafe: bool = False


FAILSAFE_ACTION = ControlAction(is_failsafe=True)


class CcSender:
    """Emits command frames at ``10^6 / send_frequency`` microsecond intervals.

    Tick k fires at t0 + floor(k * 10^6 / f), which keeps long runs on the
    exact rational lattice for frequencies that do not divide 10^6 evenly.
    """

    def __init__(
        self,
        queue: EventQueue,
        link: EmulatedLink,
        clock: NodeClock,
        send_frequency_hz: float,
        deliver_to,
        stick_source: Optional[StickSource] = None,
        max_frames: Optional[int] = None,
        t0_us: int = 0,
    ):
        if send_frequency_hz <= 0:
            raise ValueError("send_frequency_hz must be > 0")
        self.queue = queue
        self.link = link
        self.clock = clock
        self.send_frequency_hz = float(send_frequency_hz)
        self.stick_source = stick_source if stick_source is not None else ZeroStick()
        self.max_frames = max_frames
        self.t0_us = t0_us
        self._deliver_to = deliver_to
        self.next_frame_id = 0
        self.tx_log: list[tuple[int, int]] = []  # (frame_id, local transmit time)
        self.outcomes = {o: 0 for o in DeliveryOutcome}
        self.stopped = False

    def start(self) -> None:
        self.queue.schedule(self.t0_us, self._tick)

    def _tick_time(self, k: int) -> int:
        return self.t0_us + int(k * USEC_PER_SEC // self.send_frequency_hz)

    def _tick(self, t: int) -> None:
        if self.max_frames is not None and self.next_frame_id >= self.max_frames:
            self.stopped = True
            return
        raw = self.stick_source.sample(t)
        if raw is None:
            self.stopped = True
            return
        frame = wire.CcFrame(self.next_frame_id, *(wire.normalize_stick(v) for v in raw))
        datagram = wire.encode_cc(frame)
        self.tx_log.append((frame.frame_id, self.clock.local_now(t)))
        outcome = self.link.send_downlink(len(datagram), t, self._deliver_to, meta=datagram)
        self.outcomes[outcome] += 1
        self.next_frame_id += 1
        self.queue.schedule(self._tick_time(self.next_frame_id), self._tick)


class CcReceiver:
    """Polling receiver with a bounded datagram buffer.

    Arriving datagrams are appended until ``capacity_frames`` is reached;
    later arrivals are tail-dropped. Each poll dequeues at most one datagram,
    records (frame_id, local receive time), and emits the decoded action, or
    the all-zero failsafe when the buffer is empty or the frame is corrupt.
    Polls repeat every poll_period + processing_time microseconds.
    """

    def __init__(
        self,
        queue: EventQueue,
        clock: NodeClock,
        capacity_frames: int = 54,
        poll_period_us: int = 20_000,
        processing_time_us: int = 5_000,
        t0_us: int = 0,
        record_actions: bool = False,
    ):
        if capacity_frames < 1:
            raise ValueError("capacity_frames must be >= 1")
        self.queue = queue
        self.clock = clock
        self.capacity_frames = capacity_frames
        self.poll_period_us = poll_period_us
        self.processing_time_us = processing_time_us
        self.rx_buffer: deque[bytes] = deque()
        self.rx_log: list[tuple[int, int]] = []  # (frame_id, local receive time)
        self.overflow_drops = 0
        self.corrupt_frames = 0
        self.polls = 0
        self.failsafe_polls = 0
        self.last_action = FAILSAFE_ACTION
        self.record_actions = record_actions
        self.actions: list[ControlAction] = []
        self.occupancy_trace: list[tuple[int, int]] = [] if record_actions else []
        self._t0_us = t0_us

    def start(self) -> None:
        self.queue.schedule(self._t0_us, self._poll)

    def on_datagram(self, datagram: bytes, t_us: int) -> None:
        if len(self.rx_buffer) < self.capacity_frames:
            self.rx_buffer.append(datagram)
        else:
            self.overflow_drops += 1

    def _emit(self, action: ControlAction) -> None:
        self.last_action = action
        if self.record_actions:
            self.actions.append(action)

    def _poll(self, t: int) -> None:
        self.polls += 1
        if self.record_actions:
            self.occupancy_trace.append((t, len(self.rx_buffer)))
        if self.rx_buffer:
            datagram = self.rx_buffer.popleft()
            try:
                frame = wire.decode_cc(datagram)
            except wire.WireError:
                self.corrupt_frames += 1
                self.failsafe_polls += 1
                self._emit(FAILSAFE_ACTION)
            else:
                self.rx_log.append((frame.frame_id, self.clock.local_now(t)))
                self._emit(ControlAction(*frame.movement_values(), is_failsafe=False))
        else:
            self.failsafe_polls += 1
            self._emit(FAILSAFE_ACTION)
        self.queue.schedule(t + self.poll_period_us + self.processing_time_us, self._poll)


@dataclass
class CcSessionResult:
    tx_log: list[tuple[int, int]]
    rx_log: list[tuple[int, int]]
    sender: CcSender
    receiver: CcReceiver
    link: EmulatedLink
    duration_us: int

    def conservation_terms(self) -> dict[str, int]:
        c = self.link.downlink_counters
        return {
            "sent": c.offered,
            "received": len(self.rx_log),
            "dropped_random": c.dropped_random,
            "dropped_queue": c.dropped_queue,
            "overflow_drops": self.receiver.overflow_drops,
            "in_flight": c.in_flight(),
            "in_buffer": len(self.receiver.rx_buffer),
        }


def run_cc_session(
    link_cfg,
    send_frequency_hz: float,
    frames: int,
    seed: int = 0,
    duration_s: Optional[float] = None,
    capacity_frames: int = 54,
    poll_period_us: int = 20_000,
    processing_time_us: int = 5_000,
    stick_source: Optional[StickSource] = None,
    clock_template: Optional[NodeClock] = None,
    record_actions: bool = False,
) -> CcSessionResult:
    """Standalone downlink session: wires a fresh world, runs it, returns logs.

    Duration defaults to the send window plus a 2 s drain margin so frames in
    flight or queued at the cut-off can still be polled.
    """
    from dataclasses import replace

    root = SeededRng(seed)
    queue = EventQueue()
    tmpl = clock_template if clock_template is not None else NodeClock()
    clock_gcs = replace(tmpl)
    clock_uav = replace(tmpl)
    from .simcore import start_periodic_sync

    start_periodic_sync(queue, clock_gcs, root.spawn("clock.gcs"), 0)
    start_periodic_sync(queue, clock_uav, root.spawn("clock.uav"), 0)
    link = EmulatedLink(queue, link_cfg, root.spawn("link.up"), root.spawn("link.down"))
    receiver = CcReceiver(
        queue,
        clock_uav,
        capacity_frames=capacity_frames,
        poll_period_us=poll_period_us,
        processing_time_us=processing_time_us,
        record_actions=record_actions,
    )
    sender = CcSender(
        queue,
        link,
        clock_gcs,
        send_frequency_hz,
        receiver.on_datagram,
        stick_source=stick_source,
        max_frames=frames,
    )
    receiver.start()
    sender.start()
    if duration_s is None:
        duration_s = frames / send_frequency_hz + 2.0
    duration_us = int(round(duration_s * USEC_PER_SEC))
    queue.run_until(duration_us)
    return CcSessionResult(sender.tx_log, receiver.rx_log, sender, receiver, link, duration_us)
