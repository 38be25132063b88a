"""Emulated radio path between the ground station and the UAV.

Models, per direction: independent random loss, FIFO rate shaping with a
byte-bounded queue (tail drop), a fixed base one-way delay, and bounded
jitter. The uplink rate can additionally be throttled by an elevation-angle
capacity model so that flying near the base station's zenith starves the
video stream.

Default calibration: uplink 8.78 Mb/s, downlink 16.57 Mb/s, base one-way
delay 13 830 us (half of a measured 27.66 ms round trip).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .simcore import EventQueue, SeededRng, USEC_PER_SEC

PositionFn = Callable[[int], tuple[float, float, float]]


class UndefinedGeometryError(ValueError):
    """UAV and base-station antenna coincide; the elevation angle is undefined."""


@dataclass(frozen=True)
class Geometry:
    """UAV and base-station positions in meters.

    ``uav_position`` is (x, y, h) with h the flight height; ``bs_position``
    is (x, y, z_antenna). ``antenna_tilt_deg`` is carried for reporting only;
    the capacity model abstracts the actual pattern.
    """

    uav_position: tuple[float, float, float]
    bs_position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    antenna_tilt_deg: float = 10.0

    def __post_init__(self) -> None:
        for v in (*self.uav_position, *self.bs_position):
            if not math.isfinite(v):
                raise ValueError("positions must be finite")
        if self.uav_position[2] < 0:
            raise ValueError("flight height must be >= 0")


def elevation_angle(geom: Geometry) -> float:
    """Angle in degrees between the antenna's horizontal plane and the ray to
    the UAV; 90 directly overhead, clamped at 0 for rays at or below the
    horizontal."""
    ux, uy, uh = geom.uav_position
    bx, by, bz = geom.bs_position
    horiz = math.hypot(ux - bx, uy - by)
    dz = uh - bz
    if horiz == 0.0 and dz == 0.0:
        raise UndefinedGeometryError("UAV and antenna are co-located")
    angle = math.degrees(math.atan2(dz, horiz))
    return max(0.0, angle)


@dataclass(frozen=True)
class GainCapacityModel:
    """Achievable uplink rate as a function of elevation angle.

    Logistic rolloff around ``theta_edge_deg``: full capacity well below the
    edge, floor capacity well above it. ``rolloff_width_deg`` is the width of
    the linearized transition (the logistic scale is width/4).
    """

    cap_min_bps: float = 2.0e6
    cap_max_bps: float = 8.5e6
    theta_edge_deg: float = 60.0
    rolloff_width_deg: float = 8.0

    def __post_init__(self) -> None:
        if not self.cap_min_bps < self.cap_max_bps:
            raise ValueError("cap_min_bps must be < cap_max_bps")
        if self.rolloff_width_deg <= 0:
            raise ValueError("rolloff_width_deg must be > 0")

    def capacity_bps(self, angle_deg: float) -> float:
        if not 0.0 <= angle_deg <= 90.0:
            raise ValueError(f"elevation angle {angle_deg} outside [0, 90]")
        scale = self.rolloff_width_deg / 4.0
        z = (angle_deg - self.theta_edge_deg) / scale
        # exp() overflows around z=710; the logistic is saturated long before.
        if z > 60.0:
            return self.cap_min_bps
        if z < -60.0:
            return self.cap_max_bps
        return self.cap_min_bps + (self.cap_max_bps - self.cap_min_bps) / (1.0 + math.exp(z))


def effective_capacity(angle_deg: float, model: GainCapacityModel) -> float:
    return model.capacity_bps(angle_deg)


@dataclass(frozen=True)
class JitterConfig:
    """Per-packet delay jitter. ``truncnorm`` draws a zero-mean gaussian and
    clips it at +-clip_sigmas * sigma."""

    kind: str = "truncnorm"  # "none" | "truncnorm"
    sigma_us: int = 1000
    clip_sigmas: float = 3.0

    def __post_init__(self) -> None:
        if self.kind not in ("none", "truncnorm"):
            raise ValueError(f"unknown jitter kind {self.kind!r}")
        if self.sigma_us < 0:
            raise ValueError("sigma_us must be >= 0")

    def draw_us(self, rng: SeededRng) -> int:
        if self.kind == "none" or self.sigma_us == 0:
            return 0
        bound = self.clip_sigmas * self.sigma_us
        v = rng.gauss(0.0, float(self.sigma_us))
        if v > bound:
            v = bound
        elif v < -bound:
            v = -bound
        return int(round(v))


NO_JITTER = JitterConfig(kind="none", sigma_us=0)


@dataclass(frozen=True)
class LinkConfig:
    """Static parameters of the emulated path."""

    base_one_way_delay_us: int = 13_830
    jitter: JitterConfig = field(default_factory=JitterConfig)
    random_loss_prob: float = 0.0
    uplink_capacity_bps: float = 8_780_000.0
    downlink_capacity_bps: float = 16_570_000.0
    queue_limit_bytes: int = 262_144
    # Optional per-flight-height loss probabilities (calibration knob, not a
    # measured table); nearest height wins.
    height_loss_table: Optional[tuple[tuple[float, float], ...]] = None
    # Optional piecewise-constant uplink capacity override: ((t_us, bps), ...)
    uplink_capacity_schedule: Optional[tuple[tuple[int, float], ...]] = None

    def __post_init__(self) -> None:
        if self.base_one_way_delay_us < 0:
            raise ValueError("base_one_way_delay_us must be >= 0")
        if not 0.0 <= self.random_loss_prob <= 1.0:
            raise ValueError("random_loss_prob must be in [0, 1]")
        if self.uplink_capacity_bps <= 0 or self.downlink_capacity_bps <= 0:
            raise ValueError("capacities must be > 0")
        if self.queue_limit_bytes <= 0:
            raise ValueError("queue_limit_bytes must be > 0")
        if self.height_loss_table is not None:
            for h, p in self.height_loss_table:
                if not 0.0 <= p <= 1.0:
                    raise ValueError(f"loss probability {p} for height {h} outside [0, 1]")
        if self.uplink_capacity_schedule is not None:
            if not self.uplink_capacity_schedule:
                raise ValueError("uplink_capacity_schedule must be nonempty when present")
            for _, bps in self.uplink_capacity_schedule:
                if bps <= 0:
                    raise ValueError("scheduled capacities must be > 0")


class Shaper:
    """FIFO rate shaper with a byte-bounded queue.

    A packet admitted at t starts service at max(t, previous departure) and
    departs one serialization time later, at the rate in force when its
    service starts. Arrivals that would push the queued bytes past
    ``queue_limit_bytes`` are tail-dropped.
    """

    def __init__(self, rate_bps: float | Callable[[int], float], queue_limit_bytes: int):
        if callable(rate_bps):
            self._rate_fn = rate_bps
        else:
            r = float(rate_bps)
            if r <= 0:
                raise ValueError("shaper rate must be > 0")
            self._rate_fn = lambda t, _r=r: _r
        self._limit = int(queue_limit_bytes)
        self._pending: deque[tuple[int, int]] = deque()  # (departure_us, nbytes)
        self._queued_bytes = 0
        self._last_departure_us = 0
        self.admitted = 0
        self.dropped_queue = 0

    @staticmethod
    def service_time_us(bits: int, rate_bps: float) -> int:
        return max(1, math.ceil(bits * USEC_PER_SEC / rate_bps))

    def rate_bps(self, t_us: int) -> float:
        return float(self._rate_fn(t_us))

    def _release(self, t_us: int) -> None:
        while self._pending and self._pending[0][0] <= t_us:
            _, n = self._pending.popleft()
            self._queued_bytes -= n

    def queued_bytes(self, t_us: int) -> int:
        self._release(t_us)
        return self._queued_bytes

    def admit(self, pkt_bytes: int, t_us: int) -> Optional[int]:
        """Departure time in microseconds, or None if the packet was tail-dropped."""
        if pkt_bytes <= 0:
            raise ValueError("pkt_bytes must be > 0")
        self._release(t_us)
        if self._queued_bytes + pkt_bytes > self._limit:
            self.dropped_queue += 1
            return None
        start = max(t_us, self._last_departure_us)
        departure = start + self.service_time_us(pkt_bytes * 8, self.rate_bps(start))
        self._last_departure_us = departure
        self._pending.append((departure, pkt_bytes))
        self._queued_bytes += pkt_bytes
        self.admitted += 1
        return departure


class DeliveryOutcome(Enum):
    IN_FLIGHT = "in_flight"
    DROPPED_RANDOM = "dropped_random"
    DROPPED_QUEUE = "dropped_queue"


@dataclass
class DirectionCounters:
    offered: int = 0
    delivered: int = 0
    dropped_random: int = 0
    dropped_queue: int = 0

    def in_flight(self) -> int:
        return self.offered - self.delivered - self.dropped_random - self.dropped_queue


class _Direction:
    def __init__(
        self,
        name: str,
        queue: EventQueue,
        rng: SeededRng,
        shaper: Shaper,
        base_delay_us: int,
        jitter: JitterConfig,
        loss_prob_fn: Callable[[int], float],
    ):
        self.name = name
        self.queue = queue
        self.rng = rng
        self.shaper = shaper
        self.base_delay_us = base_delay_us
        self.jitter = jitter
        self.loss_prob_fn = loss_prob_fn
        self.counters = DirectionCounters()
        self._last_arrival_us = 0


class EmulatedLink:
    """Bidirectional emulated path.

    Downlink carries ground-to-UAV command datagrams; uplink carries
    UAV-to-ground video segments. Per-flow arrival order always matches send
    order (jittered arrivals are clamped to be nondecreasing).
    """

    UPLINK = "uplink"
    DOWNLINK = "downlink"

    def __init__(
        self,
        queue: EventQueue,
        cfg: LinkConfig,
        rng_uplink: SeededRng,
        rng_downlink: SeededRng,
        *,
        uav_position_fn: Optional[PositionFn] = None,
        bs_position: tuple[float, float, float] = (0.0, 0.0, 0.0),
        antenna_tilt_deg: float = 10.0,
        gain_model: Optional[GainCapacityModel] = None,
    ):
        self.cfg = cfg
        self._queue = queue
        self._position_fn = uav_position_fn
        self._bs_position = bs_position
        self._antenna_tilt_deg = antenna_tilt_deg
        self._gain_model = gain_model
        loss_fn = self._make_loss_fn(cfg)
        self._up = _Direction(
            self.UPLINK,
            queue,
            rng_uplink,
            Shaper(self._uplink_rate_bps, cfg.queue_limit_bytes),
            cfg.base_one_way_delay_us,
            cfg.jitter,
            loss_fn,
        )
        self._down = _Direction(
            self.DOWNLINK,
            queue,
            rng_downlink,
            Shaper(cfg.downlink_capacity_bps, cfg.queue_limit_bytes),
            cfg.base_one_way_delay_us,
            cfg.jitter,
            loss_fn,
        )

    def _make_loss_fn(self, cfg: LinkConfig) -> Callable[[int], float]:
        table = cfg.height_loss_table
        if table is None or self._position_fn is None:
            p = cfg.random_loss_prob
            return lambda t: p

        def by_height(t_us: int) -> float:
            h = self._position_fn(t_us)[2]
            return min(table, key=lambda entry: abs(entry[0] - h))[1]

        return by_height

    def _scheduled_uplink_cap(self, t_us: int) -> float:
        sched = self.cfg.uplink_capacity_schedule
        cap = self.cfg.uplink_capacity_bps
        if sched:
            for t_step, bps in sched:
                if t_us >= t_step:
                    cap = bps
                else:
                    break
        return cap

    def _uplink_rate_bps(self, t_us: int) -> float:
        cap = self._scheduled_uplink_cap(t_us)
        angle = self.elevation_deg(t_us)
        if angle is not None and self._gain_model is not None:
            cap = min(cap, self._gain_model.capacity_bps(angle))
        return cap

    def elevation_deg(self, t_us: int) -> Optional[float]:
        if self._position_fn is None:
            return None
        geom = Geometry(self._position_fn(t_us), self._bs_position, self._antenna_tilt_deg)
        return elevation_angle(geom)

    def current_uplink_rate_bps(self, t_us: int) -> float:
        return self._uplink_rate_bps(t_us)

    @property
    def uplink_counters(self) -> DirectionCounters:
        return self._up.counters

    @property
    def downlink_counters(self) -> DirectionCounters:
        return self._down.counters

    def _dir(self, direction: str) -> _Direction:
        if direction == self.UPLINK:
            return self._up
        if direction == self.DOWNLINK:
            return self._down
        raise ValueError(f"unknown direction {direction!r}")

    def deliver(
        self,
        direction: str,
        nbytes: int,
        t_us: int,
        on_arrive: Callable[[object, int], None],
        meta: object = None,
    ) -> DeliveryOutcome:
        """Send one datagram; schedules the arrival callback or reports a drop.

        ``on_arrive(meta, t_arrive_us)`` fires when the datagram reaches the
        far side. Drops are modeled outcomes, returned synchronously.
        """
        d = self._dir(direction)
        d.counters.offered += 1
        p = d.loss_prob_fn(t_us)
        if p > 0.0 and d.rng.random() < p:
            d.counters.dropped_random += 1
            return DeliveryOutcome.DROPPED_RANDOM
        departure = d.shaper.admit(nbytes, t_us)
        if departure is None:
            d.counters.dropped_queue += 1
            return DeliveryOutcome.DROPPED_QUEUE
        arrival = departure + d.base_delay_us + d.jitter.draw_us(d.rng)
        if arrival < d._last_arrival_us:  # FIFO path: never reorder a flow
            arrival = d._last_arrival_us
        d._last_arrival_us = arrival

        def _arrive(t: int, _meta=meta, _d=d) -> None:
            _d.counters.delivered += 1
            on_arrive(_meta, t)

        self._queue.schedule(arrival, _arrive)
        return DeliveryOutcome.IN_FLIGHT

    def send_uplink(self, nbytes, t_us, on_arrive, meta=None) -> DeliveryOutcome:
        return self.deliver(self.UPLINK, nbytes, t_us, on_arrive, meta)

    def send_downlink(self, nbytes, t_us, on_arrive, meta=None) -> DeliveryOutcome:
        return self.deliver(self.DOWNLINK, nbytes, t_us, on_arrive, meta)


class FlightPath:
    """Base for scripted UAV trajectories; position(t_us) in meters."""

    kind = "fixed"

    def position(self, t_us: int) -> tuple[float, float, float]:
        raise NotImplementedError


@dataclass(frozen=True)
class FixedPath(FlightPath):
    """Hovering (or parked) UAV at a fixed horizontal distance from the BS."""

    height_m: float = 0.0
    distance_m: float = 10.0

    kind = "fixed"

    def position(self, t_us: int) -> tuple[float, float, float]:
        return (self.distance_m, 0.0, self.height_m)


@dataclass(frozen=True)
class WaypointPath(FlightPath):
    """Piecewise-linear path through (t_s, x, y, h) waypoints; clamped at the ends."""

    waypoints: tuple[tuple[float, float, float, float], ...]

    kind = "waypoints"

    def __post_init__(self) -> None:
        if len(self.waypoints) < 1:
            raise ValueError("waypoints must be nonempty")
        times = [w[0] for w in self.waypoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("waypoint times must be strictly increasing")

    def position(self, t_us: int) -> tuple[float, float, float]:
        t = t_us / USEC_PER_SEC
        wps = self.waypoints
        if t <= wps[0][0]:
            return wps[0][1:]
        if t >= wps[-1][0]:
            return wps[-1][1:]
        for (t0, x0, y0, h0), (t1, x1, y1, h1) in zip(wps, wps[1:]):
            if t0 <= t <= t1:
                f = (t - t0) / (t1 - t0)
                return (x0 + f * (x1 - x0), y0 + f * (y1 - y0), h0 + f * (h1 - h0))
        return wps[-1][1:]


@dataclass(frozen=True)
class FlyOverPath(FlightPath):
    """Straight pass at constant height: approaches the BS, crosses the point
    of closest approach (``offset_m`` to the side) at ``midpoint_s``, recedes."""

    height_m: float = 2.0
    offset_m: float = 1.0
    speed_mps: float = 0.5
    midpoint_s: float = 30.0

    kind = "flyover"

    def position(self, t_us: int) -> tuple[float, float, float]:
        x = self.speed_mps * (t_us / USEC_PER_SEC - self.midpoint_s)
        return (x, self.offset_m, self.height_m)
