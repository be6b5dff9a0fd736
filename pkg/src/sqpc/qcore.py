"""
Small exact state-vector engine for Bell-pair protocols.

Two numeric back ends share one API:

* sampling mode keeps normalized ``complex128`` amplitudes and collapses
  with renormalization after every measurement;
* exact mode keeps *unnormalized* Gaussian-rational amplitudes and never
  divides by a square root.  Born probabilities are ratios of squared
  norms, so every branch probability stays a :class:`fractions.Fraction`.

Randomness never comes from a global source.  Every measurement (and every
classical coin a caller wants enumerated) goes through a *sampler*: either a
:class:`RandomSampler` wrapping a seeded generator, or the replay sampler
driven by :func:`enumerate_branches`.

Qubit 0 is the most significant bit of the basis label, so ``|q0 q1>``
reads left to right as in the usual two-particle kets.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Sequence

import numpy as np

__all__ = [
    "AMPLITUDE_TOL",
    "BRANCH_TOL",
    "PRUNE_BELOW",
    "DEFAULT_CAPACITY",
    "BellKind",
    "PauliOp",
    "GaussianRational",
    "QuantumRegister",
    "ContractViolation",
    "CapacityError",
    "NondeterministicScript",
    "RandomSampler",
    "Branch",
    "BranchSet",
    "prepare_bell",
    "prepare_z",
    "apply_pauli",
    "measure_z",
    "measure_bell",
    "discard",
    "choose_uniform",
    "enumerate_branches",
    "sample_outcomes",
    "expected_bell",
]

AMPLITUDE_TOL = 1e-12
BRANCH_TOL = 1e-9
PRUNE_BELOW = 1e-15
DEFAULT_CAPACITY = 8


class ContractViolation(RuntimeError):
    """A caller broke an operation's precondition (dead or repeated qubit)."""


class CapacityError(ValueError):
    """The register would grow beyond its configured qubit budget."""


class NondeterministicScript(RuntimeError):
    """A script did not replay identically under :func:`enumerate_branches`."""


class BellKind(enum.Enum):
    PHI_PLUS = "phi+"
    PHI_MINUS = "phi-"
    PSI_PLUS = "psi+"
    PSI_MINUS = "psi-"

    @property
    def is_phi(self) -> bool:
        return self in (BellKind.PHI_PLUS, BellKind.PHI_MINUS)

    @property
    def sign(self) -> int:
        return 1 if self in (BellKind.PHI_PLUS, BellKind.PSI_PLUS) else -1

    def __str__(self) -> str:
        return self.value


# Measurement order of the Bell basis; also the order of ``list(BellKind)``.
_BELL_ORDER = (BellKind.PHI_PLUS, BellKind.PHI_MINUS, BellKind.PSI_PLUS, BellKind.PSI_MINUS)


class PauliOp(enum.Enum):
    I = "I"
    SIGMA_X = "X"

    def __str__(self) -> str:
        return self.value


def expected_bell(kind: BellKind, flip: int) -> BellKind:
    """Bell state reached from ``kind`` by ``sigma^a (x) sigma^b`` with ``a ^ b == flip``.

    The phi/psi family swaps when ``flip`` is 1 and the sign is kept; the
    global phase that may appear is irrelevant to a Bell measurement.
    """
    if not flip:
        return kind
    return {
        BellKind.PHI_PLUS: BellKind.PSI_PLUS,
        BellKind.PHI_MINUS: BellKind.PSI_MINUS,
        BellKind.PSI_PLUS: BellKind.PHI_PLUS,
        BellKind.PSI_MINUS: BellKind.PHI_MINUS,
    }[kind]


class GaussianRational:
    """Exact complex number ``re + i*im`` with rational parts."""

    __slots__ = ("re", "im")

    def __init__(self, re: Any = 0, im: Any = 0) -> None:
        self.re = re if isinstance(re, Fraction) else Fraction(re)
        self.im = im if isinstance(im, Fraction) else Fraction(im)

    @staticmethod
    def _lift(other: Any) -> "GaussianRational":
        if isinstance(other, GaussianRational):
            return other
        if isinstance(other, complex):
            raise TypeError("floating complex values cannot enter an exact register")
        return GaussianRational(other)

    def __add__(self, other: Any) -> "GaussianRational":
        o = self._lift(other)
        return GaussianRational(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, other: Any) -> "GaussianRational":
        o = self._lift(other)
        return GaussianRational(self.re - o.re, self.im - o.im)

    def __rsub__(self, other: Any) -> "GaussianRational":
        return self._lift(other) - self

    def __mul__(self, other: Any) -> "GaussianRational":
        o = self._lift(other)
        return GaussianRational(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> "GaussianRational":
        if isinstance(other, GaussianRational):
            raise TypeError("division by a complex value is not needed here")
        d = Fraction(other)
        return GaussianRational(self.re / d, self.im / d)

    def __neg__(self) -> "GaussianRational":
        return GaussianRational(-self.re, -self.im)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, GaussianRational):
            return self.re == other.re and self.im == other.im
        if isinstance(other, (int, Fraction)):
            return self.im == 0 and self.re == other
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.re, self.im))

    def conjugate(self) -> "GaussianRational":
        return GaussianRational(self.re, -self.im)

    def abs2(self) -> Fraction:
        return self.re * self.re + self.im * self.im

    def __complex__(self) -> complex:
        return complex(float(self.re), float(self.im))

    def __repr__(self) -> str:
        return f"GaussianRational({self.re}, {self.im})"


_ZERO_Q = GaussianRational(0)
_ONE_Q = GaussianRational(1)


class QuantumRegister:
    """Growing register of qubits holding one pure state.

    Parameters
    ----------
    capacity : int
        Maximum number of qubits the register may ever hold.
    exact : bool
        Use unnormalized Gaussian-rational amplitudes instead of
        ``complex128``.
    """

    def __init__(self, capacity: int = DEFAULT_CAPACITY, exact: bool = False) -> None:
        if capacity < 0:
            raise CapacityError("capacity must be non-negative")
        self.capacity = capacity
        self.exact = exact
        if exact:
            self._amps = np.array([_ONE_Q], dtype=object)
        else:
            self._amps = np.ones(1, dtype=np.complex128)
        self._live: list[bool] = []

    @property
    def num_qubits(self) -> int:
        return len(self._live)

    @property
    def qubit_liveness(self) -> tuple[bool, ...]:
        return tuple(self._live)

    def is_live(self, q: int) -> bool:
        return 0 <= q < len(self._live) and self._live[q]

    def norm2(self):
        """Squared norm of the stored vector (always 1 in sampling mode)."""
        return _norm2(self._amps)

    @property
    def amplitudes(self) -> np.ndarray:
        """Normalized ``complex128`` view of the state, qubit 0 most significant."""
        if self.exact:
            vec = np.array([complex(a) for a in self._amps], dtype=np.complex128)
            return vec / math.sqrt(float(self.norm2()))
        return self._amps.copy()

    def scale(self, factor) -> None:
        """Multiply the stored vector by a scalar (a global phase when ``|factor| == 1``)."""
        if self.exact:
            self._amps = self._amps * GaussianRational._lift(factor)
        else:
            self._amps = self._amps * complex(factor)

    def copy(self) -> "QuantumRegister":
        other = QuantumRegister.__new__(QuantumRegister)
        other.capacity = self.capacity
        other.exact = self.exact
        other._amps = self._amps.copy()
        other._live = list(self._live)
        return other

    def _append(self, vec: np.ndarray, count: int) -> int:
        if self.num_qubits + count > self.capacity:
            raise CapacityError(
                f"register capacity {self.capacity} exceeded "
                f"({self.num_qubits} live+discarded, {count} requested)"
            )
        self._amps = vec.copy() if self._amps.size == 1 and not self._live else np.outer(self._amps, vec).ravel()
        first = len(self._live)
        self._live.extend([True] * count)
        return first

    def _require_live(self, *qs: int) -> None:
        for q in qs:
            if not (0 <= q < len(self._live)):
                raise ContractViolation(f"qubit {q} does not exist")
            if not self._live[q]:
                raise ContractViolation(f"qubit {q} has been discarded")

    def _split(self, q: int) -> np.ndarray:
        n = self.num_qubits
        return self._amps.reshape(1 << q, 2, 1 << (n - q - 1))

    def __repr__(self) -> str:
        return f"QuantumRegister(num_qubits={self.num_qubits}, exact={self.exact})"


def _norm2(vec):
    if isinstance(vec, GaussianRational):
        return vec.abs2()
    if vec.dtype == object:
        total = Fraction(0)
        for a in vec.ravel():
            total += a.abs2()
        return total
    return np.vdot(vec, vec).real.item()


_BELL_INT = {
    BellKind.PHI_PLUS: (1, 0, 0, 1),
    BellKind.PHI_MINUS: (1, 0, 0, -1),
    BellKind.PSI_PLUS: (0, 1, 1, 0),
    BellKind.PSI_MINUS: (0, 1, -1, 0),
}
_SQRT_HALF = 1.0 / math.sqrt(2.0)


def prepare_bell(reg: QuantumRegister, kind: BellKind) -> tuple[int, int]:
    """Append two fresh qubits in the Bell state ``kind``; return their ids."""
    u = _BELL_INT[kind]
    if reg.exact:
        # Unnormalized: the missing 1/sqrt(2) cancels in every Born ratio.
        vec = np.array([GaussianRational(x) for x in u], dtype=object)
    else:
        vec = np.array(u, dtype=np.complex128) * _SQRT_HALF
    first = reg._append(vec, 2)
    return first, first + 1


def prepare_z(reg: QuantumRegister, bit: int) -> int:
    """Append one fresh qubit in ``|bit>``."""
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit!r}")
    if reg.exact:
        vec = np.array([_ZERO_Q, _ONE_Q] if bit else [_ONE_Q, _ZERO_Q], dtype=object)
    else:
        vec = np.array([0.0, 1.0] if bit else [1.0, 0.0], dtype=np.complex128)
    return reg._append(vec, 1)


def apply_pauli(reg: QuantumRegister, q: int, op: PauliOp) -> None:
    reg._require_live(q)
    if op is PauliOp.I:
        return
    view = reg._split(q)
    reg._amps = view[:, ::-1, :].reshape(-1).copy()


class RandomSampler:
    """Draws branch choices from a seeded :class:`numpy.random.Generator`.

    With ``record=True`` the labels of labelled choices are appended to
    :attr:`labels`, mirroring the replay sampler's outcome record.
    """

    exact = False

    def __init__(self, rng: np.random.Generator, record: bool = False) -> None:
        self.rng = rng
        self.record = record
        self.labels: list = []

    def choose(self, weights: Sequence, labels: Sequence | None = None) -> int:
        ws = [float(w) for w in weights]
        u = self.rng.random() * sum(ws)
        acc = 0.0
        last = 0
        for k, w in enumerate(ws):
            if w <= 0.0:
                continue
            last = k
            acc += w
            if u < acc:
                break
        if self.record and labels is not None:
            self.labels.append(labels[last])
        return last


def choose_uniform(sampler, k: int) -> int:
    """Classical fair choice among ``k`` options, routed through ``sampler``."""
    if sampler.exact:
        return sampler.choose([Fraction(1, k)] * k)
    return min(int(sampler.rng.random() * k), k - 1)


def _born(weights: list) -> list:
    # the weights of a complete measurement partition the squared norm
    total = sum(weights)
    return [w / total for w in weights]


def measure_z(reg: QuantumRegister, q: int, sampler, *, label: bool = True) -> int:
    """Z-basis measurement of qubit ``q``; the qubit stays live."""
    reg._require_live(q)
    view = reg._split(q)
    w0 = _norm2(view[:, 0, :])
    w1 = _norm2(view[:, 1, :])
    probs = _born([w0, w1])
    bit = sampler.choose(probs, (0, 1) if label else None)
    if not probs[1 - bit]:
        return bit
    kept = view.copy()
    kept[:, 1 - bit, :] = _ZERO_Q if reg.exact else 0.0
    if not reg.exact:
        kept /= math.sqrt(probs[bit])
    reg._amps = kept.reshape(-1)
    return bit


def _pair_index(n: int, q1: int, q2: int, b1: int, b2: int) -> tuple:
    idx: list = [slice(None)] * n
    idx[q1], idx[q2] = b1, b2
    return tuple(idx)


def measure_bell(reg: QuantumRegister, q1: int, q2: int, sampler) -> BellKind:
    """Bell-basis measurement of the ordered pair ``(q1, q2)``."""
    if q1 == q2:
        raise ContractViolation("Bell measurement needs two distinct qubits")
    reg._require_live(q1, q2)
    n = reg.num_qubits
    t = reg._amps.reshape((2,) * n)
    at = [[_pair_index(n, q1, q2, b1, b2) for b2 in (0, 1)] for b1 in (0, 1)]
    v00, v01, v10, v11 = t[at[0][0]], t[at[0][1]], t[at[1][0]], t[at[1][1]]
    coeffs = (v00 + v11, v00 - v11, v01 + v10, v01 - v10)
    # |<bell_k|v>|^2 = |u_k . v|^2 / 2
    weights = [_norm2(c) / 2 for c in coeffs]
    probs = _born(weights)
    k = sampler.choose(probs, _BELL_ORDER)
    kind = _BELL_ORDER[k]
    c = coeffs[k]
    u = _BELL_INT[kind]
    if reg.exact:
        out = np.full(t.shape, _ZERO_Q, dtype=object)
        half = c / 2
        scaled = (half, -half)
    else:
        out = np.zeros(t.shape, dtype=np.complex128)
        half = c / (2.0 * math.sqrt(probs[k]))
        scaled = (half, -half)
    for (b1, b2), x in zip(((0, 0), (0, 1), (1, 0), (1, 1)), u):
        if x:
            out[at[b1][b2]] = scaled[0] if x > 0 else scaled[1]
    reg._amps = out.reshape(-1)
    return kind


def discard(reg: QuantumRegister, q: int, sampler) -> None:
    """Mark ``q`` discarded via a Z measurement whose outcome is forgotten.

    Equivalent to tracing the qubit out for every later statistic because a
    discarded qubit is never touched again.
    """
    reg._require_live(q)
    measure_z(reg, q, sampler, label=False)
    reg._live[q] = False


# ---------------------------------------------------------------------------
# exhaustive enumeration


@dataclass
class Branch:
    probability: Any
    outcome_labels: tuple
    state: Any = None


@dataclass
class BranchSet:
    branches: list[Branch] = field(default_factory=list)

    def __iter__(self):
        return iter(self.branches)

    def __len__(self) -> int:
        return len(self.branches)

    def total(self):
        return sum((b.probability for b in self.branches), Fraction(0))

    def distribution(self, key: Callable[[Branch], Any] | None = None) -> dict:
        """Probability mass per outcome label sequence (or per ``key(branch)``)."""
        out: dict = {}
        for b in self.branches:
            k = b.outcome_labels if key is None else key(b)
            out[k] = out.get(k, 0) + b.probability
        return out

    def probability(self, predicate: Callable[[Branch], bool]):
        return sum((b.probability for b in self.branches if predicate(b)), Fraction(0))


class _ReplaySampler:
    exact = True

    def __init__(self, forced: list[tuple[int, tuple]]) -> None:
        self.forced = forced
        self.trace: list[tuple[int, tuple]] = []
        self.labels: list = []
        self.probability: Any = Fraction(1)

    def choose(self, weights: Sequence, labels: Sequence | None = None) -> int:
        weights = tuple(weights)
        depth = len(self.trace)
        if depth < len(self.forced):
            k, recorded = self.forced[depth]
            if not _same_weights(recorded, weights):
                raise NondeterministicScript(
                    f"decision {depth} saw weights {weights}, previously {recorded}"
                )
        else:
            k = next((i for i, w in enumerate(weights) if w > PRUNE_BELOW), None)
            if k is None:
                raise NondeterministicScript(f"decision {depth} has no admissible option")
        self.trace.append((k, weights))
        self.probability = self.probability * weights[k]
        if labels is not None:
            self.labels.append(labels[k])
        return k


def _same_weights(a: tuple, b: tuple) -> bool:
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        if isinstance(x, Fraction) and isinstance(y, Fraction):
            if x != y:
                return False
        elif abs(float(x) - float(y)) > AMPLITUDE_TOL:
            return False
    return True


def enumerate_branches(script: Callable[[Any], Any], max_branches: int = 1 << 16) -> BranchSet:
    """Run ``script(sampler)`` along every reachable measurement path.

    The script must create its registers itself (``exact=sampler.exact``)
    and take every random decision through ``sampler``; it is replayed once
    per branch.  Branches below :data:`PRUNE_BELOW` are never explored.

    Returns
    -------
    BranchSet
        One :class:`Branch` per path, holding the path probability, the
        labels recorded along it and the script's return value.
    """
    result = BranchSet()
    stack: list[list[tuple[int, tuple]]] = [[]]
    while stack:
        forced = stack.pop()
        sampler = _ReplaySampler(forced)
        state = script(sampler)
        if len(sampler.trace) < len(forced):
            raise NondeterministicScript("script stopped before replaying its recorded path")
        alternatives = []
        for depth in range(len(forced), len(sampler.trace)):
            k, weights = sampler.trace[depth]
            prefix = sampler.trace[:depth]
            for alt in range(k + 1, len(weights)):
                if weights[alt] > PRUNE_BELOW:
                    alternatives.append(prefix + [(alt, weights)])
        # reversed so that branches come out in lexicographic choice order
        stack.extend(reversed(alternatives))
        result.branches.append(Branch(sampler.probability, tuple(sampler.labels), state))
        if len(result.branches) > max_branches:
            raise NondeterministicScript(f"more than {max_branches} branches")
    total = result.total()
    if abs(float(total) - 1.0) > BRANCH_TOL:
        raise NondeterministicScript(f"branch probabilities sum to {float(total)!r}")
    return result


def sample_outcomes(script: Callable[[Any], Any], trials: int, rng: np.random.Generator) -> Counter:
    """Empirical counterpart of :func:`enumerate_branches`: label-sequence counts."""
    counts: Counter = Counter()
    for _ in range(trials):
        sampler = RandomSampler(rng, record=True)
        script(sampler)
        counts[tuple(sampler.labels)] += 1
    return counts
