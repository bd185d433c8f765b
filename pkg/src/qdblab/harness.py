"""Seeded Monte Carlo experiments over many sessions.

Two engines produce the same statistics:

``event``
    runs every session through the full event-driven simulator
    (:func:`qdblab.protocol.run_session`), ~10^4 rounds per second.
``batch``
    vectorises the per-round pipeline with numpy. Every measurement is still a
    sampled outcome, but its probability is looked up from tables built with the
    density-matrix functions of :mod:`qdblab.quantum`, and the round timing comes
    from the same light-speed geometry. The PRF is idealised: bases are drawn
    uniformly. Use it for the 10^6+ trial experiments.

Trials are seeded from the root seed through the splittable stream tree, and the
aggregation is a plain sum, so results do not depend on evaluation order.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import bounds, streams
from .adversaries import (
    PREASK_STATE,
    STRATEGIES,
    exact_round_success,
    make_behavior,
    mf_fast_response,
    parity_measurement,
    tf_replay,
)
from .protocol import SessionConfig, run_session
from .quantum import Basis, bb84_state, depolarize, measure_dist, outcome_prob
from .timing import propagation_delay, round_timely

ENGINES = ("event", "batch")
BLOCK_ROUNDS = 1 << 20
_BATCH_DOMAIN = 0xBA7C
_Z95 = 1.959963984540054


@dataclass(frozen=True)
class ExperimentSpec:
    config: SessionConfig
    attack: str
    trials: int
    engine: str = "event"
    output_format: str = "json"
    out: str | None = None

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.attack.replace("-", "_") not in STRATEGIES:
            raise ValueError(f"unknown attack {self.attack!r}")
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.output_format not in ("json", "csv"):
            raise ValueError("output format must be json or csv")


def wilson_interval(successes: int, total: int, z: float = _Z95) -> tuple[float, float]:
    if total <= 0:
        raise ValueError("total must be positive")
    phat = successes / total
    denom = 1 + z * z / total
    centre = (phat + z * z / (2 * total)) / denom
    half = z * math.sqrt(phat * (1 - phat) / total + z * z / (4 * total * total)) / denom
    return max(0.0, min(phat, centre - half)), min(1.0, max(phat, centre + half))


@dataclass
class ExperimentStats:
    attack: str
    engine: str
    seed: int
    trials: int
    n: int
    tau: int
    eta: float
    sessions_accepted: int
    rounds_accepted: int
    exact_oracle: float | None
    bound_kind: str | None = None
    bound_log2: float | None = None

    @property
    def total_rounds(self) -> int:
        return self.trials * self.n

    @property
    def session_accept_rate(self) -> float:
        return self.sessions_accepted / self.trials

    @property
    def session_ci(self) -> tuple[float, float]:
        return wilson_interval(self.sessions_accepted, self.trials)

    @property
    def per_round_rate(self) -> float:
        return self.rounds_accepted / self.total_rounds

    @property
    def per_round_ci(self) -> tuple[float, float]:
        return wilson_interval(self.rounds_accepted, self.total_rounds)

    @property
    def bound_value(self) -> float | None:
        return None if self.bound_log2 is None else 2.0 ** self.bound_log2

    def oracle_deviation(self) -> float | None:
        """|empirical - oracle| in units of the oracle's binomial standard error."""
        p = self.exact_oracle
        if p is None:
            return None
        sigma = math.sqrt(p * (1 - p) / self.total_rounds)
        diff = abs(self.per_round_rate - p)
        if sigma == 0:
            return 0.0 if diff == 0 else math.inf
        return diff / sigma

    def consistent(self, k: float = 4.0) -> bool:
        dev = self.oracle_deviation()
        return dev is None or dev <= k

    def to_dict(self) -> dict:
        fp = bounds.format_prob
        lo, hi = self.session_ci
        rlo, rhi = self.per_round_ci
        return {
            "attack": self.attack,
            "engine": self.engine,
            "seed": self.seed,
            "trials": self.trials,
            "n": self.n,
            "tau": self.tau,
            "eta": self.eta,
            "sessions_accepted": self.sessions_accepted,
            "session_accept_rate": fp(self.session_accept_rate),
            "session_ci_low": fp(lo),
            "session_ci_high": fp(hi),
            "rounds_accepted": self.rounds_accepted,
            "per_round_rate": fp(self.per_round_rate),
            "per_round_ci_low": fp(rlo),
            "per_round_ci_high": fp(rhi),
            "exact_oracle": None if self.exact_oracle is None else fp(self.exact_oracle),
            "oracle_consistent": self.consistent(),
            "bound_kind": self.bound_kind,
            "bound_log2": None if self.bound_log2 is None else bounds.format_log2(self.bound_log2),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True) + "\n"

    def to_csv(self) -> str:
        row = self.to_dict()
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        writer.writeheader()
        writer.writerow({k: "" if v is None else v for k, v in row.items()})
        return buf.getvalue()


def _oracle(attack: str, eta: float) -> float | None:
    try:
        return exact_round_success(attack, eta)
    except ValueError:
        return None  # adversary on a noisy channel has no closed form here


def _context_bound(n: int, tau: int, p: float | None) -> tuple[str | None, float | None]:
    """Chernoff bound on the session outcome that contradicts the per-round expectation."""
    if p is None or not 0 < p < 1:
        return None, None
    if tau > n * p:
        return "accept_upper", bounds.chernoff_upper_log2(n, tau, p)
    if tau < n * p:
        return "reject_upper", bounds.chernoff_lower_log2(n, tau, p)
    return None, None


# --- batch engine --------------------------------------------------------------------

def _table(fn: Callable[..., float], *shape: int) -> np.ndarray:
    out = np.empty(shape)
    for idx in np.ndindex(*shape):
        out[idx] = fn(*idx)
    return out


def _p0(state, basis) -> float:
    return measure_dist(state, Basis(basis)).p0


def _responder_timely(attack: str, config: SessionConfig) -> bool:
    """Whether responses land inside the deadline, from the parties' positions."""
    if attack == "df":
        return True  # pre-emits so the answer lands exactly on the deadline
    distance = config.prover_distance if attack == "honest" else 0.0
    return round_timely(0, 2 * propagation_delay(distance), config.bound_b)


class _BatchKernel:
    """Draws one block of rounds for a strategy; returns a boolean accept matrix."""

    def __init__(self, attack: str, eta: float):
        self.attack = attack
        self.eta = eta
        noisy = lambda s: depolarize(s, eta)  # noqa: E731
        # verifier's Z-outcome probability for a response prepared as |bit>_basis
        self.reply0 = _table(lambda bit, basis, b: _p0(noisy(bb84_state(bit, Basis(basis))), b), 2, 2, 2)
        if attack in ("honest", "tf"):
            self.fwd0 = _table(lambda c, a: _p0(noisy(bb84_state(c, Basis(a))), a), 2, 2)
        elif attack == "mf":
            _, guess1 = parity_measurement()
            self.pre0 = _table(lambda a: _p0(PREASK_STATE, a), 2)
            self.k1 = _table(lambda c_pre, b: outcome_prob(bb84_state(c_pre, Basis(b)), guess1), 2, 2)
            self.mf0 = _table(
                lambda c, a, k, b: _p0(noisy(mf_fast_response(noisy(bb84_state(c, Basis(a))), k)), b),
                2, 2, 2, 2,
            )

    def __call__(self, rng: np.random.Generator, rows: int, n: int) -> np.ndarray:
        shape = (rows, n)
        bit = lambda: rng.integers(0, 2, size=shape, dtype=np.int8)  # noqa: E731
        a, b, c = bit(), bit(), bit()
        if self.attack in ("honest", "tf"):
            c1 = (rng.random(shape) >= self.fwd0[c, a]).astype(np.int8)
            c2 = rng.random(shape) >= self.reply0[c1, b, b]
        elif self.attack == "df":
            r = (rng.random(shape) >= 0.5).astype(np.int8)
            c2 = rng.random(shape) >= self.reply0[r, b, b]
        elif self.attack == "tf_replay":
            r = (rng.random(shape) >= 0.5).astype(np.int8)
            c2 = rng.random(shape) >= self.reply0[r, int(Basis.Z), b]
        else:  # mf
            c_pre = (rng.random(shape) >= self.pre0[a]).astype(np.int8)
            k = (rng.random(shape) < self.k1[c_pre, b]).astype(np.int8)
            c2 = rng.random(shape) >= self.mf0[c, a, k, b]
        return c2 == c.astype(bool)


def _run_batch(spec: ExperimentSpec, attack: str) -> tuple[int, int]:
    cfg = spec.config
    kernel = _BatchKernel(attack, cfg.eta)
    timely = _responder_timely(attack, cfg)
    rows_per_block = max(1, BLOCK_ROUNDS // cfg.n)
    sessions = rounds = 0
    for block, start in enumerate(range(0, spec.trials, rows_per_block)):
        rows = min(rows_per_block, spec.trials - start)
        rng = streams.stream(cfg.seed, _BATCH_DOMAIN, block)
        accepted = kernel(rng, rows, cfg.n) if timely else np.zeros((rows, cfg.n), dtype=bool)
        per_session = accepted.sum(axis=1)
        sessions += int(np.count_nonzero(per_session >= cfg.tau))
        rounds += int(per_session.sum())
    return sessions, rounds


def _run_event(spec: ExperimentSpec, attack: str) -> tuple[int, int]:
    cfg = spec.config
    sessions = rounds = 0
    for t in range(spec.trials):
        trial_cfg = dataclasses.replace(cfg, seed=streams.child_seed(cfg.seed, t))
        if attack == "tf_replay":
            transcript = tf_replay(trial_cfg)[1]
        else:
            transcript = run_session(trial_cfg, make_behavior(attack))
        if transcript.decision != (transcript.accepted_count >= cfg.tau):
            raise RuntimeError("transcript decision disagrees with its accepted count")
        sessions += transcript.decision
        rounds += transcript.accepted_count
    return sessions, rounds


def monte_carlo(spec: ExperimentSpec) -> ExperimentStats:
    attack = spec.attack.replace("-", "_")
    runner = _run_event if spec.engine == "event" else _run_batch
    sessions, rounds = runner(spec, attack)
    cfg = spec.config
    oracle = _oracle(attack, cfg.eta)
    kind, log2 = _context_bound(cfg.n, cfg.tau, oracle)
    return ExperimentStats(
        attack=attack, engine=spec.engine, seed=cfg.seed, trials=spec.trials,
        n=cfg.n, tau=cfg.tau, eta=cfg.eta,
        sessions_accepted=sessions, rounds_accepted=rounds,
        exact_oracle=oracle, bound_kind=kind, bound_log2=log2,
    )
