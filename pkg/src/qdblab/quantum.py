"""Exact single-qubit mechanics on 2x2 density matrices.

Everything here is a pure function of its arguments except the sampling
helpers, which consume draws from a caller-owned ``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

TOL = 1e-12

_I2 = np.eye(2, dtype=complex)
_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


class Basis(IntEnum):
    """Z is the computational basis (bit 0), X the diagonal one (bit 1)."""

    Z = 0
    X = 1


def _check_bit(bit: int) -> int:
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit!r}")
    return int(bit)


def _min_eigenvalue(rho: np.ndarray) -> float:
    half_tr = 0.5 * (rho[0, 0].real + rho[1, 1].real)
    half_gap = 0.5 * (rho[0, 0].real - rho[1, 1].real)
    return half_tr - math.hypot(half_gap, abs(rho[0, 1]))


@dataclass(frozen=True, eq=False)
class QubitState:
    """A validated, read-only single-qubit density matrix."""

    rho: np.ndarray

    def __post_init__(self) -> None:
        rho = np.array(self.rho, dtype=complex)
        if rho.shape != (2, 2):
            raise ValueError(f"density matrix must be 2x2, got shape {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > TOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1) > TOL:
            raise ValueError("density matrix does not have unit trace")
        if _min_eigenvalue(rho) < -TOL:
            raise ValueError("density matrix is not positive semidefinite")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def _wrap(cls, rho: np.ndarray) -> QubitState:
        # internal fast path for results of trace-preserving maps on valid inputs
        obj = object.__new__(cls)
        rho.setflags(write=False)
        object.__setattr__(obj, "rho", rho)
        return obj

    def allclose(self, other: QubitState | np.ndarray, atol: float = TOL) -> bool:
        other_rho = other.rho if isinstance(other, QubitState) else np.asarray(other)
        return bool(np.allclose(self.rho, other_rho, rtol=0.0, atol=atol))

    def purity(self) -> float:
        return float(np.real(np.trace(self.rho @ self.rho)))

    def bloch(self) -> np.ndarray:
        return np.array([np.real(np.trace(p @ self.rho)) for p in _PAULI])


@dataclass(frozen=True)
class MeasurementDistribution:
    p0: float
    p1: float

    def __post_init__(self) -> None:
        if not (-TOL <= self.p0 <= 1 + TOL and -TOL <= self.p1 <= 1 + TOL):
            raise ValueError(f"probabilities out of range: {self.p0}, {self.p1}")
        if abs(self.p0 + self.p1 - 1) > TOL:
            raise ValueError("outcome probabilities do not sum to 1")

    def __getitem__(self, outcome: int) -> float:
        return (self.p0, self.p1)[_check_bit(outcome)]


def _ket(bit: int, basis: Basis) -> np.ndarray:
    if basis is Basis.Z:
        return _I2[:, bit]
    sign = 1 if bit == 0 else -1
    return np.array([1, sign], dtype=complex) / math.sqrt(2)


_BB84 = {
    (bit, basis): QubitState._wrap(np.outer(_ket(bit, basis), _ket(bit, basis).conj()))
    for bit in (0, 1)
    for basis in Basis
}
MAXIMALLY_MIXED = QubitState._wrap(_I2 / 2)


def bb84_state(bit: int, basis: Basis) -> QubitState:
    """Return the projector onto ``|bit>`` in ``basis``."""
    return _BB84[_check_bit(bit), Basis(basis)]


def projector(bit: int, basis: Basis) -> np.ndarray:
    return bb84_state(bit, basis).rho


def projector_from_bloch(direction) -> np.ndarray:
    """Rank-1 projector ``(I + n.sigma)/2`` for a unit Bloch vector ``n``."""
    n = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(n)
    if abs(norm - 1) > 1e-9:
        raise ValueError("measurement direction must be a unit vector")
    return (_I2 + sum(c * p for c, p in zip(n / norm, _PAULI))) / 2


def outcome_prob(state: QubitState, proj: np.ndarray) -> float:
    """``tr(proj @ rho)``, clipped into [0, 1] against rounding."""
    p = float(np.real(np.sum(proj * state.rho.T)))
    return min(1.0, max(0.0, p))


def measure_dist(state: QubitState, basis: Basis) -> MeasurementDistribution:
    p0 = outcome_prob(state, projector(0, basis))
    return MeasurementDistribution(p0, 1.0 - p0)


def sample_measure(state: QubitState, basis: Basis, rng: np.random.Generator) -> int:
    """Measure ``state`` in ``basis``; consumes exactly one ``rng.random()`` draw."""
    return sample_projector(state, projector(0, basis), rng)


def sample_projector(state: QubitState, proj0: np.ndarray, rng: np.random.Generator) -> int:
    """Two-outcome measurement {proj0, I - proj0}; one uniform draw, returns 0 on proj0."""
    return 0 if rng.random() < outcome_prob(state, proj0) else 1


def depolarize(state: QubitState, eta: float) -> QubitState:
    """Apply ``rho -> (1 - eta) rho + eta I/2``."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    if eta == 0:
        return state
    return QubitState._wrap((1.0 - eta) * state.rho + (eta / 2) * _I2)


def hadamard(state: QubitState) -> QubitState:
    return QubitState._wrap(_H @ state.rho @ _H)


def mixture(states, weights) -> QubitState:
    weights = [float(w) for w in weights]
    if any(w < 0 for w in weights) or abs(sum(weights) - 1) > TOL:
        raise ValueError("mixture weights must be a probability vector")
    return QubitState(sum(w * s.rho for s, w in zip(states, weights)))


def trace_distance(rho0: QubitState, rho1: QubitState) -> float:
    # for a traceless Hermitian 2x2 difference the eigenvalues are +/- half the Bloch norm
    return float(np.linalg.norm(rho0.bloch() - rho1.bloch()) / 2)


def helstrom_success(
    rho0: QubitState, rho1: QubitState, prior0: float = 0.5
) -> tuple[float, np.ndarray | None]:
    """Optimal probability of guessing which of two states was sent.

    The operator ``prior1*rho1 - prior0*rho0`` is written as ``alpha*I + beta.sigma``;
    its eigenvalues are ``alpha +/- |beta|`` and the guess-1 projector is the
    positive eigenspace. Returns ``(success, direction)`` where ``direction`` is the
    Bloch vector of the guess-1 projector, or ``None`` when the optimal rule ignores
    the state (always guess the likelier prior).
    """
    if not 0.0 <= prior0 <= 1.0:
        raise ValueError("prior0 must lie in [0, 1]")
    prior1 = 1.0 - prior0
    gamma = prior1 * rho1.rho - prior0 * rho0.rho
    alpha = 0.5 * np.real(gamma[0, 0] + gamma[1, 1])
    beta = np.array(
        [np.real(gamma[0, 1]), -np.imag(gamma[0, 1]), 0.5 * np.real(gamma[0, 0] - gamma[1, 1])]
    )
    radius = float(np.linalg.norm(beta))
    lam_hi, lam_lo = alpha + radius, alpha - radius
    success = prior0 + max(lam_hi, 0.0) + max(lam_lo, 0.0)
    if radius <= TOL or lam_lo >= 0 or lam_hi <= 0:
        return success, None
    return success, beta / radius
