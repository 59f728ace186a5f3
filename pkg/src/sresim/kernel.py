"""Deterministic discrete-event core: simulation clock, event queue, RNG streams.

Time is kept internally as integer microseconds so that advancing the clock in
several steps is exactly equivalent to advancing it once by the total duration
(float accumulation would break that equivalence whenever an event or tick
boundary lands on a split point). The public API speaks float seconds.

The loop interleaves two kinds of work while advancing:

* scheduled one-shot events, dispatched in (fire_at, sequence) order — the
  sequence number makes ties deterministic in schedule order;
* tick handlers, called at every multiple of the tick width (default 0.1 s)
  with ``dt`` equal to the tick. Continuous dynamics (queue fluid state,
  controller reconciliation, telemetry sampling) live in tick handlers.

Events scheduled at a tick boundary run before that tick's handlers, so a
scripted action at t is visible to the tick at t.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field
from typing import Callable

US = 1_000_000  # microseconds per second


def _to_us(seconds: float) -> int:
    return round(seconds * US)


def derive_seed(*parts: object) -> int:
    """Stable 63-bit seed derived from arbitrary string-able parts."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


class RngStreams:
    """Named deterministic random streams sharing one base seed.

    Each consumer (workload, noise, faults, ...) pulls from its own stream so
    adding draws in one subsystem never perturbs another. Streams are
    ``random.Random`` instances seeded with a string, which Python hashes with
    SHA-512 — stable across processes and versions.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self._streams: dict[str, random.Random] = {}

    def stream(self, name: str) -> random.Random:
        if name not in self._streams:
            self._streams[name] = random.Random(f"{self.seed}/{name}")
        return self._streams[name]


@dataclass
class SimClock:
    """Monotone simulated clock; ``now`` in seconds, quantized to 1 µs."""

    tick: float = 0.1
    _now_us: int = 0

    @property
    def now(self) -> float:
        return self._now_us / US

    @property
    def now_us(self) -> int:
        return self._now_us


@dataclass(order=True)
class ScheduledEvent:
    fire_at_us: int
    seq: int
    label: str = field(compare=False)
    fn: Callable[[], None] | None = field(compare=False, repr=False)
    cancelled: bool = field(default=False, compare=False)

    @property
    def fire_at(self) -> float:
        return self.fire_at_us / US


class EventLoop:
    """Discrete-event loop with fixed-width tick interleaving.

    ``advance(duration)`` is the only way time moves. It dispatches every
    event with fire_at <= now + duration and runs tick handlers at each tick
    boundary crossed, then leaves the clock exactly at now + duration.
    """

    def __init__(self, tick: float = 0.1, seed: int = 0):
        if tick <= 0:
            raise ValueError("tick must be positive")
        self.clock = SimClock(tick=tick)
        self.rng = RngStreams(seed)
        self._tick_us = _to_us(tick)
        self._tick_index = 0
        self._seq = 0
        self._heap: list[ScheduledEvent] = []
        self._tick_handlers: list[Callable[[float], None]] = []
        self.event_log: list[tuple[int, int, str]] = []

    # -- scheduling ---------------------------------------------------------

    def schedule(
        self,
        delay: float,
        fn: Callable[[], None] | None,
        label: str = "event",
    ) -> ScheduledEvent:
        """Schedule ``fn`` to run ``delay`` seconds from now.

        delay may be 0 (fires on the next positive advance); negative delays
        are rejected — the past is immutable.
        """
        return self.schedule_at(self.clock.now + delay, fn, label)

    def schedule_at(
        self,
        fire_at: float,
        fn: Callable[[], None] | None,
        label: str = "event",
    ) -> ScheduledEvent:
        fire_at_us = _to_us(fire_at)
        if fire_at_us < self.clock._now_us:
            raise ValueError(
                f"cannot schedule {label!r} at {fire_at}s, already at {self.clock.now}s"
            )
        ev = ScheduledEvent(fire_at_us, self._seq, label, fn)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def cancel(self, event: ScheduledEvent) -> None:
        event.cancelled = True

    def add_tick_handler(self, fn: Callable[[float], None]) -> None:
        """Register a handler called at every tick boundary with dt seconds."""
        self._tick_handlers.append(fn)

    # -- advancing ----------------------------------------------------------

    def advance(self, duration: float) -> list[ScheduledEvent]:
        """Move the clock forward, dispatching events and ticks in order."""
        if duration < 0:
            raise ValueError("cannot advance by a negative duration")
        end_us = self.clock._now_us + _to_us(duration)
        dispatched: list[ScheduledEvent] = []
        if end_us == self.clock._now_us:
            return dispatched

        while True:
            while self._heap and self._heap[0].cancelled:
                heapq.heappop(self._heap)
            next_ev_us = self._heap[0].fire_at_us if self._heap else None
            next_tick_us = (self._tick_index + 1) * self._tick_us

            if (
                next_ev_us is not None
                and next_ev_us <= end_us
                and (next_ev_us <= next_tick_us or next_tick_us > end_us)
            ):
                ev = heapq.heappop(self._heap)
                self.clock._now_us = ev.fire_at_us
                self.event_log.append((ev.fire_at_us, ev.seq, ev.label))
                if ev.fn is not None:
                    ev.fn()
                dispatched.append(ev)
            elif next_tick_us <= end_us:
                self.clock._now_us = next_tick_us
                self._tick_index += 1
                dt = self._tick_us / US
                for handler in self._tick_handlers:
                    handler(dt)
            else:
                break

        self.clock._now_us = end_us
        return dispatched

    def run_until(self, t: float) -> list[ScheduledEvent]:
        """Advance to absolute simulated time ``t``."""
        remaining = t - self.clock.now
        if remaining < 0:
            raise ValueError(f"run_until({t}) is in the past (now={self.clock.now})")
        return self.advance(remaining)
