"""Prover-side behaviors: honest prover, distance fraud, mafia fraud, terrorist fraud.

Each behavior deploys one or more parties on the schedule. The party that
answers the verifier's challenges is a :class:`Responder`, whose three hooks
(``setup``, ``pre_fast_phase``, ``on_challenge``) are the extension points for
new strategies. Adversarial parties never see channel noise; the verifier's
own hops are noisy for whoever is standing at the other end.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cache
from typing import Callable, ClassVar

import numpy as np

from .protocol import (
    VERIFIER,
    BitString,
    Deployment,
    Envelope,
    Key,
    RoundSecrets,
    SessionConfig,
    SessionResult,
    Timetable,
    Transcript,
    derive_secrets,
    simulate_session,
)
from .quantum import (
    TOL,
    Basis,
    QubitState,
    bb84_state,
    depolarize,
    hadamard,
    helstrom_success,
    measure_dist,
    mixture,
    outcome_prob,
    projector_from_bloch,
    sample_measure,
    sample_projector,
)
from .timing import CausalityError, Port, TimedMessage, deadline, propagation_delay
from . import streams

STRATEGIES = ("honest", "df", "mf", "tf", "tf_replay")

# pre-ask probe state cos(3pi/8)|0> + sin(3pi/8)|1>
_XI = np.array([math.cos(3 * math.pi / 8), math.sin(3 * math.pi / 8)], dtype=complex)
PREASK_STATE = QubitState(np.outer(_XI, _XI.conj()))


def _coin(rng: np.random.Generator) -> int:
    return 0 if rng.random() < 0.5 else 1


# --- single-round building blocks -------------------------------------------------

def honest_response(challenge: QubitState, a_i: Basis, b_i: Basis,
                    rng: np.random.Generator) -> QubitState:
    """Measure in ``a_i`` and re-encode the outcome in ``b_i`` (one draw)."""
    return bb84_state(sample_measure(challenge, a_i, rng), b_i)


def df_blind_response(b_i: Basis, rng: np.random.Generator) -> QubitState:
    """A uniformly random bit in ``b_i``, fixed without looking at the challenge."""
    return bb84_state(_coin(rng), b_i)


def mf_fast_response(challenge: QubitState, k_prime: int) -> QubitState:
    """Reflect the challenge for parity 0, swap bases with a Hadamard for parity 1."""
    return hadamard(challenge) if k_prime else challenge


def preask_reply_state(a_i: Basis, b_i: Basis, outcome: int) -> QubitState:
    """What the honest prover sends back to the probe when it measured ``outcome``."""
    return bb84_state(outcome, b_i)


@cache
def parity_mixtures() -> tuple[QubitState, QubitState]:
    """Average pre-ask reply conditioned on parity ``k = a xor b`` (uniform a, b)."""
    by_parity: dict[int, list[QubitState]] = {0: [], 1: []}
    for a, b in itertools.product(Basis, Basis):
        dist = measure_dist(PREASK_STATE, a)
        reply = mixture([bb84_state(0, b), bb84_state(1, b)], [dist.p0, dist.p1])
        by_parity[int(a) ^ int(b)].append(reply)
    return tuple(mixture(states, [0.5, 0.5]) for states in (by_parity[0], by_parity[1]))


@cache
def parity_measurement() -> tuple[float, np.ndarray]:
    """Helstrom measurement for the parity mixtures: (success, guess-1 projector)."""
    rho0, rho1 = parity_mixtures()
    success, direction = helstrom_success(rho0, rho1, 0.5)
    if direction is None or abs(success - 0.75) > TOL:
        raise RuntimeError(f"pre-ask parity extraction succeeds with {success}, expected 3/4")
    return success, projector_from_bloch(direction)


def extract_parity(reply: QubitState, rng: np.random.Generator) -> int:
    """Guess ``k'`` from a pre-ask reply (one draw)."""
    _, guess1 = parity_measurement()
    return 1 - sample_projector(reply, guess1, rng)


def mf_preask(a_i: Basis, b_i: Basis, rng: np.random.Generator,
              respond: Callable = honest_response) -> int:
    """One pre-ask exchange: probe the prover with the fixed state, guess the parity.

    ``respond`` is the honest prover's fast-phase map; the adversary sees only its output.
    """
    return extract_parity(respond(PREASK_STATE, a_i, b_i, rng), rng)


# --- parties -------------------------------------------------------------------------

class Responder:
    """A prover-side party that takes part in the slow phase and the fast rounds.

    Subclasses override the hooks. ``on_challenge`` returns ``(state, emit_time)``;
    ``emit_time=None`` means "right now". A ``None`` state sends nothing.
    """

    def __init__(self, name: str, rng: np.random.Generator, key: Key | None = None,
                 slow_peer_of: str = VERIFIER):
        self.name = name
        self.rng = rng
        self._key = key
        self.upstream = slow_peer_of
        self.nonce_v: BitString | None = None
        self.nonce_p: BitString | None = None
        self.secrets: RoundSecrets | None = None
        self.timetable: Timetable | None = None
        self.challenges_seen = 0

    # hooks
    def setup(self, secrets: RoundSecrets | None, port: Port) -> None:
        self.secrets = secrets

    def pre_fast_phase(self, port: Port) -> None:
        pass

    def on_challenge(self, i: int, challenge: Envelope | None,
                     port: Port) -> tuple[QubitState | None, Fraction | None]:
        raise NotImplementedError

    def on_other(self, msg: TimedMessage, port: Port) -> None:
        pass

    # dispatch
    def receive(self, msg: TimedMessage, port: Port) -> None:
        if msg.kind == "nonce":
            self.nonce_v = msg.payload
            self.nonce_p = BitString.random(msg.payload.length, self.rng)
            port.send(msg.sender, self.nonce_p, "nonce")
            secrets = None
            if self._key is not None:
                secrets = derive_secrets(self._key, self.nonce_v, self.nonce_p, self.nonce_v.length)
            self.setup(secrets, port)
        elif msg.kind == "schedule":
            self.timetable = msg.payload
            self.pre_fast_phase(port)
        elif msg.kind == "challenge" or (msg.kind == "timer" and msg.payload == "respond"):
            challenge = msg.payload if msg.kind == "challenge" else None
            if challenge is not None:
                self.challenges_seen += 1
            state, emit_time = self.on_challenge(msg.round, challenge, port)
            if state is not None:
                target = msg.sender if msg.kind == "challenge" else VERIFIER
                port.send(target, Envelope(state), "response", round=msg.round, emit_time=emit_time)
        else:
            self.on_other(msg, port)


class HonestProver(Responder):
    """Measures each challenge in ``a_i``, answers in ``b_i``, instantly."""

    def on_challenge(self, i, challenge, port):
        return honest_response(challenge.open(), self.secrets.a[i], self.secrets.b[i], self.rng), None


class DistanceFraudProver(Responder):
    """A far keyed prover that commits to each answer before the challenge can reach it."""

    def __init__(self, name, rng, key, distance: float, bound_b: float):
        super().__init__(name, rng, key)
        self.distance = distance
        self.bound_b = bound_b
        self.unanswerable: list[int] = []

    def pre_fast_phase(self, port):
        lag = deadline(self.bound_b) - propagation_delay(self.distance)
        for i in range(self.timetable.n):
            target = self.timetable.send_time(i) + lag
            if target < port.now:
                # cannot arrive in time; send as early as causality allows
                self.unanswerable.append(i)
                target = port.now
            port.wake_at(target, "respond", round=i)

    def on_challenge(self, i, challenge, port):
        if challenge is not None:
            return None, None  # the real challenge is never opened
        return df_blind_response(self.secrets.b[i], self.rng), None


class MafiaRelayNearProver(Responder):
    """The far half of the mafia pair (A2), standing next to the honest prover.

    It relays the slow phase, then probes the prover with the pre-ask state once
    per round and forwards the parity guesses to its partner out of band.
    """

    def __init__(self, name, rng, prover: str, partner: str):
        super().__init__(name, rng)
        self.prover = prover
        self.partner = partner
        self.guesses: dict[int, int] = {}

    def receive(self, msg, port):
        if msg.kind in ("nonce", "schedule") and msg.sender == VERIFIER:
            port.send(self.prover, msg.payload, msg.kind)
            if msg.kind == "schedule":
                self.timetable = msg.payload
                self.pre_fast_phase(port)
        elif msg.kind == "nonce":
            port.send(VERIFIER, msg.payload, "nonce")
        elif msg.kind == "response" and msg.sender == self.prover:
            self.guesses[msg.round] = extract_parity(msg.payload.open(), self.rng)
            if len(self.guesses) == self.timetable.n:
                guess = ParityGuess(tuple(self.guesses[i] for i in range(self.timetable.n)),
                                    ready_at=port.now)
                port.send(self.partner, guess, "oob")

    def pre_fast_phase(self, port):
        for i in range(self.timetable.n):
            port.send(self.prover, Envelope(PREASK_STATE), "challenge", round=i)


@dataclass(frozen=True)
class ParityGuess:
    k_prime: tuple[int, ...]
    ready_at: Fraction


class MafiaRelayNearVerifier(Responder):
    """The near half of the mafia pair (A1): answers with the challenge or its Hadamard image."""

    def __init__(self, name, rng):
        super().__init__(name, rng)
        self.guess: ParityGuess | None = None

    def on_other(self, msg, port):
        if msg.kind == "oob" and isinstance(msg.payload, ParityGuess):
            self.guess = msg.payload

    def on_challenge(self, i, challenge, port):
        if self.guess is None:
            raise CausalityError("fast phase started before the pre-ask finished")
        return mf_fast_response(challenge.open(), self.guess.k_prime[i]), None


@dataclass(frozen=True)
class Leak:
    """Everything the far terrorist prover hands its helper: the session bases, nothing else."""

    a: tuple[Basis, ...]
    b: tuple[Basis, ...]


class TerroristProver(Responder):
    """Far keyed prover that leaks this session's bases to a nearby helper."""

    def __init__(self, name, rng, key, helper: str):
        super().__init__(name, rng, key)
        self.helper = helper

    def setup(self, secrets, port):
        super().setup(secrets, port)
        port.send(self.helper, Leak(secrets.a, secrets.b), "oob")

    def on_challenge(self, i, challenge, port):
        return None, None


class TerroristHelper(Responder):
    """Keyless helper next to the verifier; answers honestly from leaked bases."""

    def __init__(self, name, rng):
        super().__init__(name, rng)
        self.leak: Leak | None = None

    def on_other(self, msg, port):
        if msg.kind == "oob" and isinstance(msg.payload, Leak):
            self.leak = msg.payload

    def on_challenge(self, i, challenge, port):
        return honest_response(challenge.open(), self.leak.a[i], self.leak.b[i], self.rng), None


class ReplayHelper(Responder):
    """The helper on its own in a later session, holding only a stale leak.

    ``mode="blind"`` answers a fresh uniformly random bit in Z without opening the
    challenge (acceptance exactly 1/2 per round). ``mode="measure_resend"``
    measures the challenge in Z and re-sends the outcome in Z, which does better
    (5/8) because half the time the guessed basis is right.
    """

    def __init__(self, name, rng, stale: Leak | None, mode: str = "blind"):
        super().__init__(name, rng)
        if mode not in ("blind", "measure_resend"):
            raise ValueError(f"unknown replay mode {mode!r}")
        self.stale = stale
        self.mode = mode

    def on_challenge(self, i, challenge, port):
        if self.mode == "blind":
            return bb84_state(_coin(self.rng), Basis.Z), None
        return honest_response(challenge.open(), Basis.Z, Basis.Z, self.rng), None


# --- behaviors ---------------------------------------------------------------------

class ProverBehavior:
    """Places the prover-side parties of one session on the line."""

    name: ClassVar[str] = "abstract"

    def deploy(self, config: SessionConfig, key: Key, rng: np.random.Generator) -> Deployment:
        raise NotImplementedError


class Honest(ProverBehavior):
    name = "honest"

    def deploy(self, config, key, rng):
        prover = HonestProver("P", rng, key)
        return Deployment({"P": (config.prover_distance, prover)}, "P", "P")


class DistanceFraud(ProverBehavior):
    name = "df"

    def deploy(self, config, key, rng):
        prover = DistanceFraudProver("P*", rng, key, config.prover_distance, config.bound_b)
        return Deployment({"P*": (config.prover_distance, prover)}, "P*", "P*")


class MafiaFraud(ProverBehavior):
    """Verschoor-style pre-ask relay: A1 at the verifier, A2 next to an honest prover."""

    name = "mf"

    def deploy(self, config, key, rng):
        parity_measurement()  # refuses to run unless the extraction oracle gives 3/4
        r_p, r_a2, r_a1 = rng.spawn(3)
        parties = {
            "P": (config.prover_distance, HonestProver("P", r_p, key)),
            "A2": (config.prover_distance, MafiaRelayNearProver("A2", r_a2, "P", "A1")),
            "A1": (0.0, MafiaRelayNearVerifier("A1", r_a1)),
        }
        return Deployment(parties, "A2", "A1")


class TerroristFraud(ProverBehavior):
    name = "tf"

    def deploy(self, config, key, rng):
        r_p, r_h = rng.spawn(2)
        parties = {
            "P*": (config.prover_distance, TerroristProver("P*", r_p, key, "A")),
            "A": (0.0, TerroristHelper("A", r_h)),
        }
        return Deployment(parties, "P*", "A")


class TerroristReplay(ProverBehavior):
    """The helper alone: runs the slow phase itself and answers without the prover."""

    name = "tf_replay"

    def __init__(self, stale: Leak | None = None, mode: str = "blind"):
        self.stale = stale
        self.mode = mode

    def deploy(self, config, key, rng):
        helper = ReplayHelper("A", rng, self.stale, self.mode)
        return Deployment({"A": (0.0, helper)}, "A", "A")


BEHAVIORS: dict[str, type[ProverBehavior]] = {
    cls.name: cls for cls in (Honest, DistanceFraud, MafiaFraud, TerroristFraud, TerroristReplay)
}


def make_behavior(name: str) -> ProverBehavior:
    try:
        return BEHAVIORS[name.replace("-", "_")]()
    except KeyError:
        raise ValueError(f"unknown strategy {name!r}; choose from {', '.join(STRATEGIES)}") from None


def tf_leak_and_respond(secrets: RoundSecrets, rng: np.random.Generator | None = None) -> TerroristHelper:
    """A helper primed with ``secrets`` as the terrorist prover would leak them."""
    helper = TerroristHelper("A", rng if rng is not None else np.random.default_rng())
    helper.leak = Leak(secrets.a, secrets.b)
    return helper


def tf_replay_sessions(config: SessionConfig, mode: str = "blind") -> tuple[SessionResult, SessionResult]:
    """Run a terrorist-fraud session, then let the helper try alone in a fresh one.

    The second session reuses the prover's long-term key but draws fresh nonces
    and verifier randomness; the helper carries over only the leaked bases.
    """
    assisted = simulate_session(config, TerroristFraud())
    stale = assisted.deployment.parties["A"][1].leak
    fresh = dataclasses.replace(config, seed=streams.child_seed(config.seed, 1))
    replay = simulate_session(fresh, TerroristReplay(stale, mode), key=assisted.key)
    return assisted, replay


def tf_replay(config: SessionConfig, mode: str = "blind") -> tuple[Transcript, Transcript]:
    """Transcripts ``(assisted, replay)`` of :func:`tf_replay_sessions`."""
    assisted, replay = tf_replay_sessions(config, mode)
    return assisted.transcript, replay.transcript


# --- exact per-round oracles ---------------------------------------------------------

def _accept_prob(response: QubitState, b: Basis, c: int, eta: float) -> float:
    return measure_dist(depolarize(response, eta), b)[c]


def _honest_like(eta: float) -> float:
    total = 0.0
    for a, b, c in itertools.product(Basis, Basis, (0, 1)):
        arrived = measure_dist(depolarize(bb84_state(c, a), eta), a)
        for c1 in (0, 1):
            total += arrived[c1] * _accept_prob(bb84_state(c1, b), b, c, eta)
    return total / 8


def _distance_fraud() -> float:
    total = 0.0
    for b, c, r in itertools.product(Basis, (0, 1), (0, 1)):
        total += 0.5 * _accept_prob(bb84_state(r, b), b, c, 0.0)
    return total / 4


def _mafia_fraud() -> float:
    _, guess1 = parity_measurement()
    total = 0.0
    for a, b, c in itertools.product(Basis, Basis, (0, 1)):
        probe = measure_dist(PREASK_STATE, a)
        for c_pre in (0, 1):
            p_k1 = outcome_prob(preask_reply_state(a, b, c_pre), guess1)
            for k_prime, p_k in ((0, 1 - p_k1), (1, p_k1)):
                reply = mf_fast_response(bb84_state(c, a), k_prime)
                total += probe[c_pre] * p_k * _accept_prob(reply, b, c, 0.0)
    return total / 8


def _replay(mode: str) -> float:
    total = 0.0
    for a, b, c in itertools.product(Basis, Basis, (0, 1)):
        if mode == "blind":
            reply = mixture([bb84_state(0, Basis.Z), bb84_state(1, Basis.Z)], [0.5, 0.5])
        else:
            z = measure_dist(bb84_state(c, a), Basis.Z)
            reply = mixture([bb84_state(0, Basis.Z), bb84_state(1, Basis.Z)], [z.p0, z.p1])
        total += _accept_prob(reply, b, c, 0.0)
    return total / 8


def exact_round_success(strategy: str, eta: float = 0.0, replay_mode: str = "blind") -> float:
    """Per-round acceptance probability, averaged over challenge bit and both bases."""
    strategy = strategy.replace("-", "_")
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    if strategy == "honest":
        return _honest_like(eta)
    if eta > 0:
        raise ValueError(f"{strategy} is only modelled on noiseless channels (eta = 0)")
    if strategy == "tf":
        return _honest_like(0.0)
    if strategy == "df":
        return _distance_fraud()
    if strategy == "mf":
        return _mafia_fraud()
    return _replay(replay_mode)
