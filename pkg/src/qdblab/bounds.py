"""Tail bounds and parameter sizing for threshold-based distance bounding.

All exponents are computed in natural-log space; ``*_log2`` variants stay finite
far below the double-precision underflow limit.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

LN2 = math.log(2)

# per-round cheating probabilities used for the baseline comparison
HK_PER_ROUND = 0.75
QDB_DF_PER_ROUND = 0.5
QDB_MF_PER_ROUND = 0.875
DEFAULT_TARGET_LOG2 = -80.0

DEFAULT_U_GRID = tuple(round(0.880 + 0.005 * k, 3) for k in range(24)) + (1.0,)


class RegimeError(ValueError):
    """A bound was requested outside the regime where it says anything."""


def _check_prob(name: str, x: float, open_: bool = False) -> None:
    if open_ and not 0.0 < x < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {x}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {x}")


def _xlogy(x: float, y: float) -> float:
    return 0.0 if x == 0 else x * math.log(y)


def kl_bernoulli(u: float, v: float) -> float:
    """Binary relative entropy D(u || v) in nats, with 0 ln 0 = 0."""
    _check_prob("u", u)
    if not 0.0 < v < 1.0:
        raise ValueError(f"v must lie strictly between 0 and 1, got {v}")
    return _xlogy(u, u / v) + _xlogy(1 - u, (1 - u) / (1 - v))


@dataclass(frozen=True)
class TailBoundQuery:
    n: int
    tau: int
    p: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if not 0 <= self.tau <= self.n:
            raise ValueError("tau must satisfy 0 <= tau <= n")
        _check_prob("p", self.p, open_=True)

    @property
    def ratio(self) -> float:
        return self.tau / self.n


def _exponent(q: TailBoundQuery) -> float:
    return -q.n * kl_bernoulli(q.ratio, q.p)


def chernoff_upper_ln(n: int, tau: int, p: float) -> float:
    """ln of the bound on Pr[S >= tau] when every round succeeds w.p. at most p."""
    q = TailBoundQuery(n, tau, p)
    if not tau > n * p:
        raise RegimeError(f"upper-tail bound needs tau > n*p, got tau={tau}, n*p={n * p:g}")
    return _exponent(q)


def chernoff_lower_ln(n: int, tau: int, p: float) -> float:
    """ln of the bound on Pr[S <= tau] when every round succeeds w.p. at least p."""
    q = TailBoundQuery(n, tau, p)
    if not tau < n * p:
        raise RegimeError(f"lower-tail bound needs tau < n*p, got tau={tau}, n*p={n * p:g}")
    return _exponent(q)


def chernoff_upper(n: int, tau: int, p: float) -> float:
    return math.exp(chernoff_upper_ln(n, tau, p))


def chernoff_lower(n: int, tau: int, p: float) -> float:
    return math.exp(chernoff_lower_ln(n, tau, p))


def chernoff_upper_log2(n: int, tau: int, p: float) -> float:
    return chernoff_upper_ln(n, tau, p) / LN2


def chernoff_lower_log2(n: int, tau: int, p: float) -> float:
    return chernoff_lower_ln(n, tau, p) / LN2


def _logsumexp(xs: list[float]) -> float:
    m = max(xs)
    if m == -math.inf:
        return -math.inf
    return m + math.log(sum(math.exp(x - m) for x in xs))


def binomial_tail_exact_ln(n: int, tau: int, p: float, side: str = "upper") -> float:
    """ln Pr[S >= tau] (upper) or ln Pr[S <= tau] (lower) for S ~ Binomial(n, p), by direct summation."""
    if not 0 <= n <= 10_000:
        raise ValueError("exact summation supports 0 <= n <= 10^4")
    _check_prob("p", p)
    if side not in ("upper", "lower"):
        raise ValueError("side must be 'upper' or 'lower'")
    ks = range(max(tau, 0), n + 1) if side == "upper" else range(0, min(tau, n) + 1)
    terms = []
    for k in ks:
        if (p == 0 and k > 0) or (p == 1 and k < n):
            continue
        log_c = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
        terms.append(log_c + _xlogy(k, p) + _xlogy(n - k, 1 - p))
    return _logsumexp(terms) if terms else -math.inf


def binomial_tail_exact(n: int, tau: int, p: float, side: str = "upper") -> float:
    return math.exp(binomial_tail_exact_ln(n, tau, p, side))


def binomial_tail_exact_log2(n: int, tau: int, p: float, side: str = "upper") -> float:
    return binomial_tail_exact_ln(n, tau, p, side) / LN2


def honest_round_prob(eta: float) -> float:
    """Honest acceptance per round with depolarizing noise ``eta`` on each hop."""
    _check_prob("eta", eta)
    return 1 - eta + eta * eta / 2


def max_noise(u: float) -> float:
    """Largest per-hop noise keeping the honest rate above the threshold ratio ``u``."""
    if not 0.5 < u < 1.0:
        raise ValueError(f"threshold ratio must lie in (1/2, 1), got {u}")
    return 1 - math.sqrt(2 * u - 1)


def _decimal(x: float) -> Fraction:
    # shortest repr, so that 0.875 + 0.05 is exactly 37/40
    return Fraction(repr(float(x)))


def threshold_size(n: int, p_df: float, p_mf: float, eps_prime: float) -> int:
    """Acceptance threshold ceil(n * (max(p_df, p_mf) + eps'))."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if eps_prime <= 0:
        raise ValueError("eps_prime must be positive")
    level = max(_decimal(p_df), _decimal(p_mf)) + _decimal(eps_prime)
    if level >= 1:
        raise ValueError("max(p_df, p_mf) + eps_prime must stay below 1")
    return math.ceil(n * level)


@dataclass(frozen=True)
class SizingResult:
    n_required: int
    tau: int
    achieved_log2: float

    @property
    def achieved_bound(self) -> float:
        return 2.0 ** self.achieved_log2


def min_rounds(u: float, p: float, target_log2: float = DEFAULT_TARGET_LOG2) -> SizingResult:
    """Fewest rounds with exp(-n D(u || p)) <= 2**target_log2 at threshold ratio ``u``."""
    _check_prob("p", p, open_=True)
    if not p < u <= 1:
        raise RegimeError(f"threshold ratio must satisfy p < u <= 1, got u={u}, p={p}")
    if target_log2 >= 0:
        raise ValueError("target_log2 must be negative")
    if u == 1:
        rate = -math.log2(p)  # log2 of 1/p, the bits earned per round
        n = math.ceil(-target_log2 / rate)
        ok = lambda m: -m * rate <= target_log2  # noqa: E731
        log2_at = lambda m: -m * rate  # noqa: E731
    else:
        d = kl_bernoulli(u, p)
        need = -target_log2 * LN2
        n = math.ceil(need / d)
        ok = lambda m: m * d >= need  # noqa: E731
        log2_at = lambda m: -m * d / LN2  # noqa: E731
    n = max(n, 1)
    while n > 1 and ok(n - 1):
        n -= 1
    while not ok(n):
        n += 1
    return SizingResult(n, math.ceil(n * _decimal(u)), log2_at(n))


def format_prob(x: float) -> str:
    return f"{x:.12g}"


def format_log2(x: float) -> str:
    return f"{x:.4f}"


def table1(target_log2: float = DEFAULT_TARGET_LOG2) -> list[tuple[str, str, str]]:
    """Rows (metric, hancke_kuhn, qdb) for the noiseless strict-threshold comparison."""
    hk = min_rounds(1.0, HK_PER_ROUND, target_log2).n_required
    return [
        ("per_round_df", format_prob(HK_PER_ROUND), format_prob(QDB_DF_PER_ROUND)),
        ("per_round_mf", format_prob(HK_PER_ROUND), format_prob(QDB_MF_PER_ROUND)),
        ("rounds_df", str(hk), str(min_rounds(1.0, QDB_DF_PER_ROUND, target_log2).n_required)),
        ("rounds_mf", str(hk), str(min_rounds(1.0, QDB_MF_PER_ROUND, target_log2).n_required)),
    ]


@dataclass(frozen=True)
class TradeoffRow:
    u: float
    n_df: int | None
    n_mf: int | None
    eta_max: float | None


def tradeoff_curves(u_grid: Iterable[float] = DEFAULT_U_GRID,
                    target_log2: float = DEFAULT_TARGET_LOG2) -> list[TradeoffRow]:
    """Rounds needed against DF and MF, and tolerable noise, per threshold ratio."""
    rows = []
    for u in u_grid:
        if not 0 < u <= 1:
            raise ValueError(f"threshold ratio must lie in (0, 1], got {u}")
        n_df = min_rounds(u, QDB_DF_PER_ROUND, target_log2).n_required if u > QDB_DF_PER_ROUND else None
        n_mf = min_rounds(u, QDB_MF_PER_ROUND, target_log2).n_required if u > QDB_MF_PER_ROUND else None
        eta = (1 - math.sqrt(2 * u - 1)) if u > 0.5 else None
        rows.append(TradeoffRow(u, n_df, n_mf, eta))
    return rows


def _csv(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def table1_csv(target_log2: float = DEFAULT_TARGET_LOG2) -> str:
    return _csv(("metric", "hk_value", "qdb_value"), table1(target_log2))


def tradeoff_csv(rows: Iterable[TradeoffRow]) -> str:
    def cell(x):
        return "" if x is None else (format_prob(x) if isinstance(x, float) else str(x))

    return _csv(("u", "n_df", "n_mf", "eta_max"),
                ((format_prob(r.u), cell(r.n_df), cell(r.n_mf), cell(r.eta_max)) for r in rows))
