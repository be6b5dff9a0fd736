import math
from fractions import Fraction
from itertools import count

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bell_scripts import EXAMPLES, bell_on_phi_plus, bell_on_zero_zero, z_both_of_phi_plus
from sqpc.qcore import (
    AMPLITUDE_TOL,
    BellKind,
    CapacityError,
    ContractViolation,
    GaussianRational,
    NondeterministicScript,
    PauliOp,
    QuantumRegister,
    RandomSampler,
    apply_pauli,
    discard,
    enumerate_branches,
    expected_bell,
    measure_bell,
    measure_z,
    prepare_bell,
    prepare_z,
    sample_outcomes,
)

S = 1 / math.sqrt(2)
# independent oracle: Bell vectors written out by hand, qubit 0 most significant
BELL_VEC = {
    BellKind.PHI_PLUS: np.array([S, 0, 0, S]),
    BellKind.PHI_MINUS: np.array([S, 0, 0, -S]),
    BellKind.PSI_PLUS: np.array([0, S, S, 0]),
    BellKind.PSI_MINUS: np.array([0, S, -S, 0]),
}
X = np.array([[0, 1], [1, 0]])


class ProbeSampler:
    """Always takes the most likely branch and keeps every weight vector it was offered."""

    exact = False

    def __init__(self):
        self.seen = []
        self.rng = np.random.default_rng(0)

    def choose(self, weights, labels=None):
        ws = [float(w) for w in weights]
        self.seen.append(ws)
        return int(np.argmax(ws))


def oracle_bell_probs(vec):
    """Born probabilities of the four Bell projectors on a 2-qubit state."""
    return {k: abs(np.vdot(b, vec)) ** 2 for k, b in BELL_VEC.items()}


# ---------------------------------------------------------------------------
# reference examples


@pytest.mark.parametrize("kind", list(BellKind))
def test_prepare_bell_matches_hand_written_vector(kind):
    reg = QuantumRegister(2)
    prepare_bell(reg, kind)
    np.testing.assert_allclose(reg.amplitudes, BELL_VEC[kind], atol=1e-15)


def test_two_bell_pairs_are_a_tensor_product():
    reg = QuantumRegister(4)
    prepare_bell(reg, BellKind.PHI_PLUS)
    prepare_bell(reg, BellKind.PSI_MINUS)
    expected = np.kron(BELL_VEC[BellKind.PHI_PLUS], BELL_VEC[BellKind.PSI_MINUS])
    np.testing.assert_allclose(reg.amplitudes, expected, atol=1e-15)
    assert reg.norm2() == pytest.approx(1.0, abs=AMPLITUDE_TOL)


@pytest.mark.parametrize("bit", [0, 1])
def test_prepare_z(bit):
    reg = QuantumRegister(1)
    prepare_z(reg, bit)
    np.testing.assert_array_equal(reg.amplitudes, np.eye(2)[bit])


def test_prepare_z_after_bell_extends_tensor():
    reg = QuantumRegister(3)
    prepare_bell(reg, BellKind.PHI_PLUS)
    prepare_z(reg, 1)
    np.testing.assert_allclose(reg.amplitudes, np.kron(BELL_VEC[BellKind.PHI_PLUS], [0, 1]), atol=1e-15)


def test_sigma_x_on_first_qubit_of_phi_plus_gives_psi_plus():
    def script(sampler):
        reg = QuantumRegister(2, exact=sampler.exact)
        q1, q2 = prepare_bell(reg, BellKind.PHI_PLUS)
        apply_pauli(reg, q1, PauliOp.SIGMA_X)
        return measure_bell(reg, q1, q2, sampler)

    assert enumerate_branches(script).distribution() == {(BellKind.PSI_PLUS,): 1}


def test_sigma_x_on_both_qubits_of_psi_minus_is_invisible():
    def script(sampler):
        reg = QuantumRegister(2, exact=sampler.exact)
        q1, q2 = prepare_bell(reg, BellKind.PSI_MINUS)
        apply_pauli(reg, q1, PauliOp.SIGMA_X)
        apply_pauli(reg, q2, PauliOp.SIGMA_X)
        return measure_bell(reg, q1, q2, sampler)

    assert enumerate_branches(script).distribution() == {(BellKind.PSI_MINUS,): 1}


def test_identity_leaves_state_unchanged():
    reg = QuantumRegister(3)
    prepare_bell(reg, BellKind.PHI_MINUS)
    prepare_z(reg, 1)
    before = reg.amplitudes
    for q in range(3):
        apply_pauli(reg, q, PauliOp.I)
    np.testing.assert_array_equal(reg.amplitudes, before)


def test_measure_z_on_one_is_certain():
    def script(sampler):
        reg = QuantumRegister(1, exact=sampler.exact)
        return measure_z(reg, prepare_z(reg, 1), sampler)

    assert enumerate_branches(script).distribution() == {(1,): 1}


def test_measure_z_on_phi_plus_collapses_to_00_or_11():
    branches = enumerate_branches(z_both_of_phi_plus)
    assert branches.distribution() == {(0, 0): Fraction(1, 2), (1, 1): Fraction(1, 2)}


def test_measure_z_collapse_state_and_renormalization():
    sampler = ProbeSampler()
    reg = QuantumRegister(2)
    q1, _ = prepare_bell(reg, BellKind.PHI_PLUS)
    bit = measure_z(reg, q1, sampler)
    np.testing.assert_allclose(reg.amplitudes, np.eye(4)[3 * bit], atol=1e-15)


def test_measure_z_on_psi_plus_always_differs():
    def script(sampler):
        reg = QuantumRegister(2, exact=sampler.exact)
        q1, q2 = prepare_bell(reg, BellKind.PSI_PLUS)
        return measure_z(reg, q1, sampler), measure_z(reg, q2, sampler)

    dist = enumerate_branches(script).distribution()
    assert dist == {(0, 1): Fraction(1, 2), (1, 0): Fraction(1, 2)}


def test_bell_measurement_examples():
    assert enumerate_branches(bell_on_phi_plus).distribution() == {(BellKind.PHI_PLUS,): 1}
    assert enumerate_branches(bell_on_zero_zero).distribution() == {
        (BellKind.PHI_PLUS,): Fraction(1, 2),
        (BellKind.PHI_MINUS,): Fraction(1, 2),
    }


def test_bell_measurement_collapses_onto_outcome():
    sampler = ProbeSampler()
    reg = QuantumRegister(2)
    q1, q2 = prepare_z(reg, 0), prepare_z(reg, 0)
    kind = measure_bell(reg, q1, q2, sampler)
    overlap = abs(np.vdot(BELL_VEC[kind], reg.amplitudes))
    assert overlap == pytest.approx(1.0, abs=1e-12)


def test_bell_on_mixed_qubit_and_zero_is_uniform():
    def script(sampler):
        reg = QuantumRegister(3, exact=sampler.exact)
        q1, q2 = prepare_bell(reg, BellKind.PHI_PLUS)
        discard(reg, q1, sampler)
        return measure_bell(reg, q2, prepare_z(reg, 0), sampler)

    dist = enumerate_branches(script).distribution()
    assert dist == {(k,): Fraction(1, 4) for k in BellKind}


def test_discard_half_of_phi_plus_leaves_uniform_partner():
    def script(sampler):
        reg = QuantumRegister(2, exact=sampler.exact)
        q1, q2 = prepare_bell(reg, BellKind.PHI_PLUS)
        discard(reg, q1, sampler)
        return measure_z(reg, q2, sampler)

    assert enumerate_branches(script).distribution() == {(0,): Fraction(1, 2), (1,): Fraction(1, 2)}


def test_discard_product_qubit_leaves_rest_unchanged():
    reg = QuantumRegister(3)
    prepare_bell(reg, BellKind.PSI_MINUS)
    q = prepare_z(reg, 1)
    before = reg.amplitudes
    discard(reg, q, ProbeSampler())
    np.testing.assert_allclose(reg.amplitudes, before, atol=1e-15)
    assert reg.qubit_liveness == (True, True, False)


# ---------------------------------------------------------------------------
# contract violations


def test_discarded_qubit_cannot_be_touched():
    reg = QuantumRegister(2)
    q1, q2 = prepare_bell(reg, BellKind.PHI_PLUS)
    discard(reg, q1, ProbeSampler())
    with pytest.raises(ContractViolation):
        apply_pauli(reg, q1, PauliOp.SIGMA_X)
    with pytest.raises(ContractViolation):
        measure_z(reg, q1, ProbeSampler())
    with pytest.raises(ContractViolation):
        measure_bell(reg, q1, q2, ProbeSampler())
    with pytest.raises(ContractViolation):
        discard(reg, q1, ProbeSampler())


def test_bell_measurement_needs_two_qubits():
    reg = QuantumRegister(2)
    q1, _ = prepare_bell(reg, BellKind.PHI_PLUS)
    with pytest.raises(ContractViolation):
        measure_bell(reg, q1, q1, ProbeSampler())


def test_capacity_is_enforced():
    reg = QuantumRegister(3)
    prepare_bell(reg, BellKind.PHI_PLUS)
    with pytest.raises(CapacityError):
        prepare_bell(reg, BellKind.PHI_PLUS)


def test_enumeration_rejects_external_nondeterminism():
    calls = count()

    def script(sampler):
        # a different circuit on every replay
        return bell_on_zero_zero(sampler) if next(calls) % 2 else z_both_of_phi_plus(sampler)

    with pytest.raises(NondeterministicScript):
        enumerate_branches(script)


def test_enumeration_respects_branch_cap():
    def script(sampler):
        reg = QuantumRegister(8, exact=sampler.exact)
        for _ in range(4):
            prepare_bell(reg, BellKind.PHI_PLUS)
        return [measure_z(reg, q, sampler) for q in range(0, 8, 2)]

    assert len(enumerate_branches(script)) == 16
    with pytest.raises(NondeterministicScript):
        enumerate_branches(script, max_branches=8)


# ---------------------------------------------------------------------------
# exact arithmetic


def test_gaussian_rational_arithmetic():
    a = GaussianRational(Fraction(1, 2), 3)
    b = GaussianRational(-1, Fraction(1, 3))
    assert complex(a * b) == pytest.approx(complex(0.5, 3) * complex(-1, 1 / 3))
    assert (a / 2) * 2 == a
    with pytest.raises(TypeError):
        a / b
    assert a.abs2() == Fraction(37, 4)
    assert a - a == GaussianRational(0)


def test_exact_mode_probabilities_are_fractions():
    dist = enumerate_branches(bell_on_zero_zero).distribution()
    assert all(isinstance(p, Fraction) for p in dist.values())


# ---------------------------------------------------------------------------
# properties

ops = st.lists(
    st.one_of(
        st.tuples(st.just("bell"), st.sampled_from(list(BellKind))),
        st.tuples(st.just("z"), st.integers(0, 1)),
        st.tuples(st.just("x"), st.integers(0, 5)),
        st.tuples(st.just("mz"), st.integers(0, 5)),
        st.tuples(st.just("mb"), st.integers(0, 5), st.integers(0, 5)),
        st.tuples(st.just("drop"), st.integers(0, 5)),
    ),
    max_size=12,
)


def run_ops(reg, program, sampler, after=None):
    for op in program:
        live = [q for q in range(reg.num_qubits) if reg.is_live(q)]
        name = op[0]
        if name == "bell" and reg.num_qubits + 2 <= reg.capacity:
            prepare_bell(reg, op[1])
        elif name == "z" and reg.num_qubits + 1 <= reg.capacity:
            prepare_z(reg, op[1])
        elif live and name == "x":
            apply_pauli(reg, live[op[1] % len(live)], PauliOp.SIGMA_X)
        elif live and name == "mz":
            measure_z(reg, live[op[1] % len(live)], sampler)
        elif len(live) >= 2 and name == "mb":
            q1 = live[op[1] % len(live)]
            rest = [q for q in live if q != q1]
            measure_bell(reg, q1, rest[op[2] % len(rest)], sampler)
        elif live and name == "drop":
            discard(reg, live[op[1] % len(live)], sampler)
        if after is not None:
            after(reg)


@settings(max_examples=200, deadline=None)
@given(ops, st.integers(0, 2**32))
def test_normalization_after_every_operation(program, seed):
    reg = QuantumRegister(6)
    prepare_z(reg, 0)

    def check(r):
        assert abs(r.norm2() - 1.0) <= AMPLITUDE_TOL

    run_ops(reg, program, RandomSampler(np.random.default_rng(seed)), after=check)


@settings(max_examples=100, deadline=None)
@given(ops, st.integers(0, 2**32))
def test_exact_mode_tracks_sampling_mode(program, seed):
    # identical random draws on both backends must give the same normalized state
    a, b = QuantumRegister(6), QuantumRegister(6, exact=True)
    prepare_z(a, 0)
    prepare_z(b, 0)
    run_ops(a, program, RandomSampler(np.random.default_rng(seed)))
    run_ops(b, program, RandomSampler(np.random.default_rng(seed)))
    np.testing.assert_allclose(a.amplitudes, b.amplitudes, atol=1e-9)


@pytest.mark.parametrize("kind", list(BellKind))
@pytest.mark.parametrize("a", [0, 1])
@pytest.mark.parametrize("b", [0, 1])
def test_bell_frame_closure(kind, a, b):
    # oracle: apply X^a (x) X^b to the hand-written vector
    vec = np.kron(np.linalg.matrix_power(X, a), np.linalg.matrix_power(X, b)) @ BELL_VEC[kind]
    probs = oracle_bell_probs(vec)
    oracle_kind = max(probs, key=probs.get)
    assert probs[oracle_kind] == pytest.approx(1.0)

    def script(sampler):
        reg = QuantumRegister(2, exact=sampler.exact)
        q1, q2 = prepare_bell(reg, kind)
        if a:
            apply_pauli(reg, q1, PauliOp.SIGMA_X)
        if b:
            apply_pauli(reg, q2, PauliOp.SIGMA_X)
        return measure_bell(reg, q1, q2, sampler)

    assert enumerate_branches(script).distribution() == {(oracle_kind,): 1}
    assert oracle_kind is expected_bell(kind, a ^ b)
    assert (oracle_kind is kind) == (a ^ b == 0)


@settings(max_examples=100, deadline=None)
@given(ops, st.floats(0, 2 * math.pi), st.integers(0, 2**32))
def test_phase_irrelevance(program, theta, seed):
    reg = QuantumRegister(6)
    prepare_bell(reg, BellKind.PHI_PLUS)
    run_ops(reg, program, RandomSampler(np.random.default_rng(seed)))
    live = [q for q in range(reg.num_qubits) if reg.is_live(q)]
    if len(live) < 2:
        return
    rotated = reg.copy()
    rotated.scale(complex(math.cos(theta), math.sin(theta)))
    p1, p2 = ProbeSampler(), ProbeSampler()
    measure_bell(reg, live[0], live[1], p1)
    measure_bell(rotated, live[0], live[1], p2)
    np.testing.assert_allclose(p1.seen[0], p2.seen[0], atol=1e-12)


@pytest.mark.parametrize("phase", [GaussianRational(0, 1), GaussianRational(Fraction(3, 5), Fraction(4, 5))])
def test_phase_irrelevance_exact(phase):
    def script(sampler):
        reg = QuantumRegister(3, exact=sampler.exact)
        q1, _ = prepare_bell(reg, BellKind.PSI_MINUS)
        q3 = prepare_z(reg, 1)
        reg.scale(phase)
        return measure_bell(reg, q1, q3, sampler)

    def plain(sampler):
        reg = QuantumRegister(3, exact=sampler.exact)
        q1, _ = prepare_bell(reg, BellKind.PSI_MINUS)
        return measure_bell(reg, q1, prepare_z(reg, 1), sampler)

    assert enumerate_branches(script).distribution() == enumerate_branches(plain).distribution()


@settings(max_examples=100, deadline=None)
@given(ops, st.integers(0, 2**32))
def test_measure_z_is_idempotent(program, seed):
    reg = QuantumRegister(6)
    prepare_bell(reg, BellKind.PSI_PLUS)
    sampler = RandomSampler(np.random.default_rng(seed))
    run_ops(reg, program, sampler)
    for q in range(reg.num_qubits):
        if reg.is_live(q):
            first = measure_z(reg, q, sampler)
            assert all(measure_z(reg, q, sampler) == first for _ in range(3))


@pytest.mark.parametrize("name", list(EXAMPLES))
def test_sampling_agrees_with_enumeration(name):
    script = EXAMPLES[name]
    trials = 20_000
    exact = enumerate_branches(script).distribution()
    counts = sample_outcomes(script, trials, np.random.default_rng(11))
    assert set(counts) <= set(exact)
    for outcome, p in exact.items():
        p = float(p)
        sigma = math.sqrt(p * (1 - p) / trials)
        assert abs(counts[outcome] / trials - p) <= 5 * sigma
