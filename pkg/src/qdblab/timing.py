"""Speed-of-light message delivery on a one-dimensional line.

Times are ``fractions.Fraction`` seconds so that ``arrival - emit == distance / c``
holds exactly and the inclusive deadline comparison has no rounding slack.
A party at distance ``d`` from the verifier sits at coordinate ``d``.
"""

from __future__ import annotations

import heapq
import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Any, Iterable, Mapping, Protocol

C = 299_792_458  # m/s, exact by definition of the metre

Time = Fraction


class CausalityError(RuntimeError):
    """A party tried to emit before something it has already consumed."""


def _exact(x: Real) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def propagation_delay(distance: Real) -> Fraction:
    if distance < 0:
        raise ValueError(f"distance must be non-negative, got {distance}")
    return _exact(distance) / C


def deadline(bound_b: Real) -> Fraction:
    """Maximum round-trip time ``2B/c`` for a prover within distance ``B``."""
    if bound_b <= 0:
        raise ValueError(f"distance bound must be positive, got {bound_b}")
    return 2 * _exact(bound_b) / C


def round_timely(t_send: Real, t_recv: Real, bound_b: Real) -> bool:
    """True iff ``t_recv - t_send <= 2B/c`` (inclusive), compared exactly."""
    t_send, t_recv = _exact(t_send), _exact(t_recv)
    if t_recv < t_send:
        raise ValueError("response received before the challenge was sent")
    return t_recv - t_send <= deadline(bound_b)


@dataclass(frozen=True)
class TimedMessage:
    sender: str
    receiver: str
    emit_time: Fraction
    arrival_time: Fraction
    payload: Any
    kind: str
    round: int | None = None

    def to_record(self) -> dict:
        return {
            "round": self.round,
            "sender": self.sender,
            "receiver": self.receiver,
            "emit_time": float(self.emit_time),
            "arrival_time": float(self.arrival_time),
            "payload_kind": self.kind,
        }


# Kinds that bypass the light-speed channel. Timers are a party waking itself;
# "oob" is the adversaries' private link, legal only before the fast phase.
LOCAL_KINDS = frozenset({"timer", "oob"})


class Party(Protocol):
    def receive(self, msg: TimedMessage, port: Port) -> None: ...


@dataclass
class EventSchedule:
    """Pending messages ordered by ``(arrival_time, insertion order)``."""

    locations: dict[str, Fraction]
    now: Fraction = Fraction(0)
    oob_closes_at: Fraction | None = None
    pending: list = field(default_factory=list)
    log: list[TimedMessage] = field(default_factory=list)
    _counter: Any = field(default_factory=itertools.count, repr=False)

    def __post_init__(self) -> None:
        self.locations = {name: _exact(d) for name, d in self.locations.items()}
        for name, d in self.locations.items():
            if d < 0:
                raise ValueError(f"{name} has negative distance {d}")

    def add_party(self, name: str, distance: Real) -> None:
        if distance < 0:
            raise ValueError(f"{name} has negative distance {distance}")
        self.locations[name] = _exact(distance)

    def delay(self, sender: str, receiver: str) -> Fraction:
        return propagation_delay(abs(self.locations[sender] - self.locations[receiver]))

    def post(
        self,
        sender: str,
        receiver: str,
        payload: Any,
        emit_time: Real,
        kind: str,
        round: int | None = None,
    ) -> TimedMessage:
        emit_time = _exact(emit_time)
        if kind == "timer":
            if sender != receiver:
                raise ValueError("timers are addressed to their own party")
            arrival = emit_time
        elif kind == "oob":
            if self.oob_closes_at is not None and emit_time >= self.oob_closes_at:
                raise CausalityError(
                    f"{sender} used the out-of-band link at {float(emit_time)} s, "
                    "after the fast phase opened"
                )
            arrival = emit_time
        else:
            arrival = emit_time + self.delay(sender, receiver)
        msg = TimedMessage(sender, receiver, emit_time, arrival, payload, kind, round)
        # float(arrival) is a monotone image of the exact time, so it only speeds
        # up comparisons; equal floats fall through to the exact Fraction
        heapq.heappush(self.pending, (float(arrival), arrival, next(self._counter), msg))
        return msg


class Port:
    """A party's handle on the schedule while it reacts to one delivered message.

    Emissions are stamped no earlier than the arrival being consumed; anything
    earlier would let the party act on information it could not yet have.
    """

    def __init__(self, schedule: EventSchedule, owner: str, consumed_at: Fraction):
        self._schedule = schedule
        self.owner = owner
        self.now = consumed_at

    @property
    def oob_closes_at(self) -> Fraction | None:
        return self._schedule.oob_closes_at

    def close_oob(self, at: Real) -> None:
        self._schedule.oob_closes_at = _exact(at)

    def delay_to(self, receiver: str) -> Fraction:
        return self._schedule.delay(self.owner, receiver)

    def send(
        self,
        receiver: str,
        payload: Any,
        kind: str,
        round: int | None = None,
        emit_time: Real | None = None,
    ) -> TimedMessage:
        emit_time = self.now if emit_time is None else _exact(emit_time)
        if emit_time < self.now:
            raise CausalityError(
                f"{self.owner} tried to emit {kind!r} at {float(emit_time)} s "
                f"after consuming a message that arrived at {float(self.now)} s"
            )
        return self._schedule.post(self.owner, receiver, payload, emit_time, kind, round)

    def wake_at(self, time: Real, payload: Any = None, round: int | None = None) -> None:
        self.send(self.owner, payload, "timer", round=round, emit_time=time)


def run_schedule(
    schedule: EventSchedule, parties: Mapping[str, Party]
) -> list[TimedMessage]:
    """Deliver messages in arrival order until the queue drains.

    Each party only ever sees messages whose arrival time is at most the current
    simulation time, and every emission goes through a :class:`Port` that rejects
    backdating. Returns the schedule's log of delivered messages.
    """
    while schedule.pending:
        _, arrival, _, msg = heapq.heappop(schedule.pending)
        schedule.now = arrival
        schedule.log.append(msg)
        parties[msg.receiver].receive(msg, Port(schedule, msg.receiver, arrival))
    return schedule.log


def dump_jsonl(log: Iterable[TimedMessage], fp) -> None:
    for msg in log:
        fp.write(json.dumps(msg.to_record()) + "\n")
