"""The verifier side of the qubit distance-bounding protocol and session driver.

A session has three phases on one :class:`~qdblab.timing.EventSchedule`:

* slow phase: nonce exchange with whoever answers for the prover, then a
  public announcement of the fast-phase timetable (untimed);
* fast phase: ``n`` timed rounds, each a BB84 challenge qubit out and a
  response qubit back;
* decision: count rounds that were both on time and correct, compare to ``tau``.

The prover side is supplied by a behavior object (see :mod:`qdblab.adversaries`).
"""

from __future__ import annotations

import hashlib
import hmac
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING, Any

import numpy as np

from . import streams
from .quantum import Basis, QubitState, bb84_state, depolarize, sample_measure
from .timing import (
    EventSchedule,
    Port,
    TimedMessage,
    deadline,
    propagation_delay,
    round_timely,
    run_schedule,
)

if TYPE_CHECKING:
    from .adversaries import ProverBehavior

VERIFIER = "V"
MIN_KEY_BITS = 128
TRANSCRIPT_VERSION = 1

# sub-stream indices under the session seed
_KEY_STREAM, _VERIFIER_STREAM, _PROVER_STREAM = 0, 1, 2


@dataclass(frozen=True)
class BitString:
    """A fixed-length bit string stored as an integer, most significant bit first."""

    length: int
    value: int

    def __post_init__(self) -> None:
        if self.length < 0 or not 0 <= self.value < (1 << self.length) or (
            self.length == 0 and self.value
        ):
            raise ValueError("value does not fit in the declared length")

    @classmethod
    def from_bits(cls, bits) -> BitString:
        bits = [int(b) for b in bits]
        value = 0
        for b in bits:
            if b not in (0, 1):
                raise ValueError("bits must be 0 or 1")
            value = (value << 1) | b
        return cls(len(bits), value)

    @classmethod
    def random(cls, length: int, rng: np.random.Generator) -> BitString:
        return cls.from_bits(rng.integers(0, 2, size=length))

    def bits(self) -> list[int]:
        return [(self.value >> (self.length - 1 - i)) & 1 for i in range(self.length)]

    def flip(self, i: int) -> BitString:
        if not 0 <= i < self.length:
            raise IndexError(i)
        return BitString(self.length, self.value ^ (1 << (self.length - 1 - i)))

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(max(1, math.ceil(self.length / 8)), "big")

    def hex(self) -> str:
        return format(self.value, f"0{max(1, math.ceil(self.length / 4))}x")

    def __len__(self) -> int:
        return self.length


Key = BitString


@dataclass(frozen=True)
class SessionConfig:
    n: int
    tau: int
    bound_b: float
    prover_distance: float
    eta: float = 0.0
    seed: int = 0
    key_bits: int = 256

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if not 0 <= self.tau <= self.n:
            raise ValueError("tau must satisfy 0 <= tau <= n")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.bound_b <= 0:
            raise ValueError("bound_b must be positive")
        if self.prover_distance < 0:
            raise ValueError("prover_distance must be non-negative")
        if self.key_bits < MIN_KEY_BITS:
            raise ValueError(f"key_bits must be at least {MIN_KEY_BITS}")


@dataclass(frozen=True)
class RoundSecrets:
    a: tuple[Basis, ...]
    b: tuple[Basis, ...]

    def __post_init__(self) -> None:
        if len(self.a) != len(self.b):
            raise ValueError("challenge and response basis strings differ in length")

    @property
    def n(self) -> int:
        return len(self.a)

    def parity(self, i: int) -> int:
        return int(self.a[i]) ^ int(self.b[i])


@dataclass(frozen=True)
class Timetable:
    """Public fast-phase schedule, announced at the end of the slow phase."""

    start: Fraction
    spacing: Fraction
    n: int

    def send_time(self, i: int) -> Fraction:
        return self.start + i * self.spacing


@dataclass
class RoundRecord:
    index: int
    challenge_bit: int
    t_send: float | None = None
    t_recv: float | None = None
    verifier_outcome: int | None = None
    timely: bool = False
    value_ok: bool = False

    @property
    def accepted(self) -> bool:
        return self.timely and self.value_ok

    def to_dict(self) -> dict:
        d = asdict(self)
        d["accepted"] = self.accepted
        return d


@dataclass
class Transcript:
    config: SessionConfig
    strategy: str
    nonce_v: BitString
    nonce_p: BitString
    rounds: list[RoundRecord]
    decision: bool = field(init=False)

    def __post_init__(self) -> None:
        self.decision = decide(self.rounds, self.config.tau)

    @property
    def accepted_count(self) -> int:
        return sum(r.accepted for r in self.rounds)

    def to_dict(self) -> dict:
        return {
            "version": TRANSCRIPT_VERSION,
            "config": asdict(self.config),
            "strategy": self.strategy,
            "nonce_v": self.nonce_v.hex(),
            "nonce_p": self.nonce_p.hex(),
            "rounds": [r.to_dict() for r in self.rounds],
            "accepted_count": self.accepted_count,
            "decision": "accept" if self.decision else "reject",
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def keygen(key_bits: int, rng: np.random.Generator) -> Key:
    if key_bits < MIN_KEY_BITS:
        raise ValueError(f"key length must be at least {MIN_KEY_BITS} bits")
    return BitString.random(key_bits, rng)


def _prf_bits(key: Key, nonce_v: BitString, nonce_p: BitString, nbits: int) -> list[int]:
    # HMAC-SHA256 in counter mode; inputs are length-prefixed for domain separation
    prefix = b"qdblab/bases/v1" + b"".join(
        s.length.to_bytes(4, "big") + s.to_bytes() for s in (nonce_v, nonce_p)
    )
    out = bytearray()
    counter = 0
    while len(out) * 8 < nbits:
        out += hmac.new(key.to_bytes(), prefix + counter.to_bytes(4, "big"), hashlib.sha256).digest()
        counter += 1
    bits = np.unpackbits(np.frombuffer(bytes(out), dtype=np.uint8))[:nbits]
    return bits.tolist()


def derive_secrets(key: Key, nonce_v: BitString, nonce_p: BitString, n: int) -> RoundSecrets:
    """Split ``2n`` PRF output bits into challenge bases ``a`` and response bases ``b``."""
    if len(nonce_v) != n or len(nonce_p) != n:
        raise ValueError(f"nonces must be {n} bits, got {len(nonce_v)} and {len(nonce_p)}")
    bits = _prf_bits(key, nonce_v, nonce_p, 2 * n)
    return RoundSecrets(
        a=tuple(Basis(x) for x in bits[:n]),
        b=tuple(Basis(x) for x in bits[n:]),
    )


def decide(rounds, tau: int) -> bool:
    return sum(r.accepted for r in rounds) >= tau


class Envelope:
    """Carries a qubit and remembers whether anyone looked inside."""

    __slots__ = ("_state", "opened")

    def __init__(self, state: QubitState):
        self._state = state
        self.opened = False

    def open(self) -> QubitState:
        self.opened = True
        return self._state


class Verifier:
    """Honest verifier at distance 0."""

    def __init__(self, config: SessionConfig, key: Key, rng: np.random.Generator,
                 slow_peer: str, fast_peer: str):
        self.config = config
        self._key = key
        self.rng = rng
        self.slow_peer = slow_peer
        self.fast_peer = fast_peer
        self.nonce_v: BitString | None = None
        self.nonce_p: BitString | None = None
        self.secrets: RoundSecrets | None = None
        self.timetable: Timetable | None = None
        self.rounds: list[RoundRecord] = []
        self.envelopes: list[Envelope] = []

    def receive(self, msg: TimedMessage, port: Port) -> None:
        if msg.kind == "timer" and msg.payload == "start":
            self.nonce_v = BitString.random(self.config.n, self.rng)
            port.send(self.slow_peer, self.nonce_v, "nonce")
        elif msg.kind == "nonce" and self.nonce_p is None:
            self._open_fast_phase(msg.payload, port)
        elif msg.kind == "timer" and msg.payload == "challenge":
            self._send_challenge(msg.round, port)
        elif msg.kind == "response":
            self._receive_response(msg, port)

    def _open_fast_phase(self, nonce_p: BitString, port: Port) -> None:
        cfg = self.config
        self.nonce_p = nonce_p
        self.secrets = derive_secrets(self._key, self.nonce_v, nonce_p, cfg.n)
        # lead time covers twice the observed slow-phase round trip, so any
        # prover-side party learns the timetable well before the first round
        slow_rtt = port.now
        dl = deadline(cfg.bound_b)
        self.timetable = Timetable(start=port.now + 2 * slow_rtt + dl, spacing=2 * dl, n=cfg.n)
        port.send(self.slow_peer, self.timetable, "schedule")
        port.close_oob(self.timetable.start)
        bits = self.rng.integers(0, 2, size=cfg.n).tolist()
        self.rounds = [RoundRecord(i, int(c)) for i, c in enumerate(bits)]
        port.wake_at(self.timetable.send_time(0), "challenge", round=0)

    def _send_challenge(self, i: int, port: Port) -> None:
        rec = self.rounds[i]
        state = depolarize(bb84_state(rec.challenge_bit, self.secrets.a[i]), self.config.eta)
        env = Envelope(state)
        self.envelopes.append(env)
        rec.t_send = port.now
        port.send(self.fast_peer, env, "challenge", round=i)
        if i + 1 < self.config.n:
            port.wake_at(self.timetable.send_time(i + 1), "challenge", round=i + 1)

    def _receive_response(self, msg: TimedMessage, port: Port) -> None:
        rec = self.rounds[msg.round]
        if rec.t_recv is not None:
            return  # only the first response per round counts
        received = depolarize(msg.payload.open(), self.config.eta)
        rec.verifier_outcome = sample_measure(received, self.secrets.b[msg.round], self.rng)
        rec.timely = round_timely(rec.t_send, port.now, self.config.bound_b)
        rec.value_ok = rec.verifier_outcome == rec.challenge_bit
        rec.t_send, rec.t_recv = float(rec.t_send), float(port.now)


@dataclass
class Deployment:
    """Who stands where on the prover side of one session."""

    parties: dict[str, tuple[float, Any]]
    slow_peer: str
    fast_peer: str


@dataclass
class SessionResult:
    transcript: Transcript
    log: list[TimedMessage]
    verifier: Verifier
    deployment: Deployment
    key: Key


def simulate_session(config: SessionConfig, prover: ProverBehavior,
                     key: Key | None = None) -> SessionResult:
    """Run one full session and keep the message log and party objects for inspection."""
    if key is None:
        key = keygen(config.key_bits, streams.stream(config.seed, _KEY_STREAM))
    deployment = prover.deploy(config, key, streams.stream(config.seed, _PROVER_STREAM))
    verifier = Verifier(config, key, streams.stream(config.seed, _VERIFIER_STREAM),
                        deployment.slow_peer, deployment.fast_peer)
    schedule = EventSchedule({VERIFIER: 0})
    parties: dict[str, Any] = {VERIFIER: verifier}
    for name, (distance, party) in deployment.parties.items():
        if name in parties:
            raise ValueError(f"party name {name!r} is reserved")
        schedule.add_party(name, distance)
        parties[name] = party
    schedule.post(VERIFIER, VERIFIER, "start", 0, "timer")
    log = run_schedule(schedule, parties)
    for rec in verifier.rounds:
        if rec.t_send is not None and not isinstance(rec.t_send, float):
            rec.t_send = float(rec.t_send)  # challenge sent, nothing came back
    transcript = Transcript(config, getattr(prover, "name", type(prover).__name__),
                            verifier.nonce_v, verifier.nonce_p, verifier.rounds)
    return SessionResult(transcript, log, verifier, deployment, key)


def run_session(config: SessionConfig, prover: ProverBehavior, key: Key | None = None) -> Transcript:
    return simulate_session(config, prover, key).transcript


def fast_phase_round_trip(distance: float) -> Fraction:
    """Round-trip time for a responder that answers the instant a challenge lands."""
    return 2 * propagation_delay(distance)
