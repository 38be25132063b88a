"""Deterministic discrete-event substrate: event queue, drifting node clocks
with periodic resynchronization, and seeded randomness.

All simulation time is integer microseconds. Determinism contract: given the
same seed and the same sequence of schedule() calls, two runs dispatch the
same events at the same times in the same order, on any platform.
"""

from __future__ import annotations

import hashlib
import heapq
import math
import random
from dataclasses import dataclass
from typing import Callable

USEC_PER_SEC = 1_000_000

_U64 = (1 << 64) - 1
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15


class CausalityError(RuntimeError):
    """An event was scheduled earlier than the current simulation time."""


class Event:
    """Handle returned by :meth:`EventQueue.schedule`; permits cancellation."""

    __slots__ = ("time_us", "seq", "fn", "cancelled")

    def __init__(self, time_us: int, seq: int, fn: Callable[[int], None]):
        self.time_us = time_us
        self.seq = seq
        self.fn = fn
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True

    def __lt__(self, other: "Event") -> bool:
        return (self.time_us, self.seq) < (other.time_us, other.seq)


class EventQueue:
    """Priority queue of timed events.

    Events pop in nondecreasing time order; equal-time events pop in
    insertion (FIFO) order. Dispatch calls ``fn(time_us)``.
    """

    def __init__(self) -> None:
        self._heap: list[Event] = []
        self._seq = 0
        self._now = 0
        self.dispatched = 0

    @property
    def now_us(self) -> int:
        return self._now

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, time_us: int, fn: Callable[[int], None]) -> Event:
        """Schedule ``fn`` at ``time_us``; returns a cancellable handle."""
        time_us = int(time_us)
        if time_us < self._now:
            raise CausalityError(
                f"cannot schedule event at {time_us} us: simulation time is already {self._now} us"
            )
        ev = Event(time_us, self._seq, fn)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def run_until(self, t_end_us: int) -> int:
        """Dispatch every pending event with time <= t_end_us.

        Returns the number of events dispatched. The clock follows dispatched
        events; if undispatched events remain past the horizon the clock is
        left at ``t_end_us``, otherwise it stays at the last dispatched event.
        """
        t_end_us = int(t_end_us)
        count = 0
        while self._heap and self._heap[0].time_us <= t_end_us:
            ev = heapq.heappop(self._heap)
            if ev.cancelled:
                continue
            self._now = ev.time_us
            ev.fn(ev.time_us)
            count += 1
        if self._heap and t_end_us > self._now:
            self._now = t_end_us
        self.dispatched += count
        return count


def splitmix64(x: int) -> int:
    """One application of the splitmix64 finalizer (public-domain constants).

    Used to derive member seeds and named sub-streams from a master seed.
    """
    z = (x + _SPLITMIX_GAMMA) & _U64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
    return z ^ (z >> 31)


def mix_seed(master_seed: int, index: int) -> int:
    """Seed for sweep member ``index``: splitmix64(master + (index+1)*gamma)."""
    return splitmix64((master_seed + (index + 1) * _SPLITMIX_GAMMA) & _U64)


def derive_seed(seed: int, label: str) -> int:
    """Deterministic 64-bit sub-seed for a named stream."""
    tag = int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "big")
    return splitmix64((seed ^ tag) & _U64)


class SeededRng:
    """Deterministic random stream (MT19937 via :class:`random.Random`).

    Identical seeds yield identical draw sequences across runs and platforms.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _U64
        self._r = random.Random(self.seed)

    def spawn(self, label: str) -> "SeededRng":
        """Independent named sub-stream, stable in (seed, label)."""
        return SeededRng(derive_seed(self.seed, label))

    def random(self) -> float:
        return self._r.random()

    def uniform(self, a: float, b: float) -> float:
        return self._r.uniform(a, b)

    def randint(self, a: int, b: int) -> int:
        return self._r.randint(a, b)

    def gauss(self, mu: float, sigma: float) -> float:
        return self._r.gauss(mu, sigma)

    def lognormvariate(self, mu: float, sigma: float) -> float:
        return self._r.lognormvariate(mu, sigma)


@dataclass
class NodeClock:
    """Per-node clock: true offset plus linear drift since the last sync.

    Local time at true time t is ``t + true_offset + drift_ppm * (t - last_sync) / 1e6``
    (drift in parts per million applied to elapsed true time, floored to
    integer microseconds).
    """

    true_offset_us: int = 0
    drift_ppm: float = 0.0
    last_sync_us: int = 0
    sync_interval_s: float = 10.0
    max_residual_error_us: int = 1000

    def local_now(self, t_true_us: int) -> int:
        if t_true_us < self.last_sync_us:
            raise CausalityError(
                f"local_now({t_true_us}) precedes last sync at {self.last_sync_us}"
            )
        drift_us = math.floor(self.drift_ppm * (t_true_us - self.last_sync_us) / USEC_PER_SEC)
        return t_true_us + self.true_offset_us + drift_us

    def sync(self, t_true_us: int, rng: SeededRng) -> "NodeClock":
        """Resynchronize: the offset collapses to a residual drawn uniformly
        from [-max_residual_error_us, +max_residual_error_us]."""
        r = self.max_residual_error_us
        self.true_offset_us = rng.randint(-r, r)
        self.last_sync_us = t_true_us
        return self

    def error_us(self, t_true_us: int) -> int:
        return self.local_now(t_true_us) - t_true_us


def start_periodic_sync(queue: EventQueue, clock: NodeClock, rng: SeededRng, t0_us: int = 0) -> None:
    """Sync ``clock`` at ``t0_us`` and re-schedule every ``sync_interval_s``."""
    interval_us = int(round(clock.sync_interval_s * USEC_PER_SEC))

    def fire(t: int) -> None:
        clock.sync(t, rng)
        queue.schedule(t + interval_us, fire)

    queue.schedule(t0_us, fire)
