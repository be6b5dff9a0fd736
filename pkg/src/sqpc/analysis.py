"""
Quantitative checks: Bell-flip table check, per-pair detection probabilities
(exact and Monte Carlo), qubit efficiency and the early-abort experiment.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import streams
from .adversary import STRATEGIES, make_strategy
from .channel import ChannelTap, Particle
from .protocol import ProtocolConfig, rational_json, User, exchange_pair, run_protocol, tp_classify
from .qcore import (
    BellKind,
    PauliOp,
    QuantumRegister,
    RandomSampler,
    apply_pauli,
    choose_uniform,
    enumerate_branches,
    expected_bell,
    measure_bell,
    prepare_bell,
)
from .streams import Role

PHI_P, PHI_M, PSI_P, PSI_M = BellKind.PHI_PLUS, BellKind.PHI_MINUS, BellKind.PSI_PLUS, BellKind.PSI_MINUS

# (initial state, a_l, b_l, TP's result, c_l), transcribed row by row
TABLE1 = (
    (PHI_P, 0, 0, PHI_P, 0), (PHI_P, 0, 1, PSI_P, 1), (PHI_P, 1, 0, PSI_P, 1), (PHI_P, 1, 1, PHI_P, 0),
    (PHI_M, 0, 0, PHI_M, 0), (PHI_M, 0, 1, PSI_M, 1), (PHI_M, 1, 0, PSI_M, 1), (PHI_M, 1, 1, PHI_M, 0),
    (PSI_P, 0, 0, PSI_P, 0), (PSI_P, 0, 1, PHI_P, 1), (PSI_P, 1, 0, PHI_P, 1), (PSI_P, 1, 1, PSI_P, 0),
    (PSI_M, 0, 0, PSI_M, 0), (PSI_M, 0, 1, PHI_M, 1), (PSI_M, 1, 0, PHI_M, 1), (PSI_M, 1, 1, PSI_M, 0),
)

# qubit-efficiency row of the comparison table (other protocols; not recomputed)
REFERENCE_EFFICIENCY = {
    "Ref19": Fraction(1, 82),
    "Ref20": Fraction(1, 60),
    "Ref21": Fraction(1, 32),
    "Ref22": Fraction(1, 48),
    "Ref23": Fraction(1, 36),
    "Ref24": Fraction(1, 58),
    "ours": Fraction(1, 19),  # upper bound, reached at delta = 0, M = N
}

SCENARIOS = ("ctrl_ctrl", "sift_sift_checked")

# (strategy, scenario) pairs with the per-pair detection probabilities the
# security analysis states, for the default phi+ initial state.
CATALOG = (
    ("eve-ir", "ctrl_ctrl"),
    ("eve-mr", "ctrl_ctrl"),
    ("eve-mr", "sift_sift_checked"),
    ("alice-ir", "sift_sift_checked"),
    ("alice-mr", "sift_sift_checked"),
    ("alice-ir", "ctrl_ctrl"),
    ("alice-mr", "ctrl_ctrl"),
)

CHUNK = 10_000


# ---------------------------------------------------------------------------
# Table 1


@dataclass
class Table1Result:
    passed: bool
    rows: list[dict]
    failures: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "failures": self.failures, "rows": self.rows}


def _table1_script(initial: BellKind, a: int, b: int):
    def script(sampler):
        reg = QuantumRegister(exact=sampler.exact)
        qa, qb = prepare_bell(reg, initial)
        apply_pauli(reg, qa, PauliOp.SIGMA_X if a else PauliOp.I)
        apply_pauli(reg, qb, PauliOp.SIGMA_X if b else PauliOp.I)
        return measure_bell(reg, qa, qb, sampler)

    return script


def verify_table1() -> Table1Result:
    """Simulate all 16 rows exactly; a row passes when its listed result has probability 1."""
    rows, failures = [], []
    for idx, (initial, a, b, listed, c) in enumerate(TABLE1):
        law = enumerate_branches(_table1_script(initial, a, b)).distribution(key=lambda br: br.state)
        (simulated, p), = law.items() if len(law) == 1 else ((None, Fraction(0)),)
        ok = simulated is listed and p == 1 and tp_classify(initial, simulated) == c
        rows.append({
            "initial": str(initial), "a": a, "b": b,
            "alice_op": "sigma" if a else "I", "bob_op": "sigma" if b else "I",
            "expected": str(listed), "simulated": {str(k): rational_json(v) for k, v in law.items()},
            "c": c, "passed": ok,
        })
        if not ok:
            failures.append(idx + 1)
    return Table1Result(not failures, rows, failures)


# ---------------------------------------------------------------------------
# single-pair detection


class _SamplerCoins:
    """``Generator.integers`` look-alike that routes draws through a sampler."""

    def __init__(self, sampler) -> None:
        self.sampler = sampler

    def integers(self, low, high, size, dtype=np.int64):
        return np.array([low + choose_uniform(self.sampler, high - low) for _ in range(size)], dtype=dtype)


def _check_args(strategy: str, scenario: str) -> None:
    if strategy != "none" and strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; valid: none, {', '.join(STRATEGIES)}")
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; valid: {', '.join(SCENARIOS)}")


def pair_detection_script(strategy: str, scenario: str, kind: BellKind = PHI_P, **strategy_kwargs):
    """Script for one pair under attack; returns True when TP's report breaks the honest relation.

    In ``sift_sift_checked`` both users' bits are fair coins drawn through the
    sampler, so exact mode averages over them.
    """
    _check_args(strategy, scenario)
    ctrl = scenario == "ctrl_ctrl"

    def script(sampler) -> bool:
        attack = make_strategy(strategy, **strategy_kwargs)
        key_prime = np.array([1 if ctrl else 0], dtype=np.uint8)
        a = b = 0
        if not ctrl:
            a, b = choose_uniform(sampler, 2), choose_uniform(sampler, 2)
        alice = User("alice", key_prime, np.array([a], dtype=np.uint8))
        bob = User("bob", key_prime, np.array([b], dtype=np.uint8))
        if attack is not None and attack.replaces_tp:
            tp, tap = attack, ChannelTap()
            tp.begin(ProtocolConfig(n=1, key_mode="padded"), _SamplerCoins(sampler))
            pa, pb = tp.prepare(0, exact=sampler.exact)
        else:
            tp, tap = None, attack or ChannelTap()
            reg = QuantumRegister(exact=sampler.exact)
            qa, qb = prepare_bell(reg, kind)
            pa, pb = Particle(reg, qa), Particle(reg, qb)
        tap.begin(1, sampler, key_prime if tap.insider == "alice" else None)
        pa, pb, _, _ = exchange_pair(0, pa, pb, alice, bob, tap, sampler, None)
        if tp is None:
            initial, outcome = kind, measure_bell(pa.reg, pa.q, pb.q, sampler)
        else:
            tp.receive(0, pa, pb, sampler)
            tp.settle(0, ctrl, sampler)
            initial, outcome = tp.report(0)
        tap.finish(sampler)
        return outcome is not expected_bell(initial, 0 if ctrl else a ^ b)

    return script


def exact_detection(strategy: str, scenario: str, kind: BellKind = PHI_P, **strategy_kwargs) -> Fraction:
    branches = enumerate_branches(pair_detection_script(strategy, scenario, kind, **strategy_kwargs))
    return branches.probability(lambda br: br.state)


@dataclass
class DetectionReport:
    strategy: str
    scenario: str
    exact_p: Fraction
    empirical_p: float
    trials: int
    detections: int
    std_err: float
    within_3sigma: bool
    seed: int
    kind: str = "phi+"

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "scenario": self.scenario,
            "kind": self.kind,
            "exact_p": rational_json(self.exact_p),
            "empirical_p": self.empirical_p,
            "trials": self.trials,
            "detections": self.detections,
            "std_err": self.std_err,
            "within_3sigma": self.within_3sigma,
            "seed": self.seed,
        }


def _count_detections(args) -> int:
    strategy, scenario, kind, seed, chunk, size, kwargs = args
    script = pair_detection_script(strategy, scenario, kind, **kwargs)
    sampler = RandomSampler(streams.stream(seed, Role.TRIALS, chunk))
    return sum(1 for _ in range(size) if script(sampler))


def _chunks(trials: int) -> list[tuple[int, int]]:
    return [(c, min(CHUNK, trials - c * CHUNK)) for c in range(math.ceil(trials / CHUNK))]


def within_3sigma(hits: int, trials: int, p) -> tuple[float, float, bool]:
    """(empirical rate, sigma from the exact ``p``, |rate - p| <= 3 sigma)."""
    rate = hits / trials
    sigma = math.sqrt(float(p) * (1 - float(p)) / trials)
    return rate, sigma, abs(rate - float(p)) <= 3 * sigma + 1e-15


def monte_carlo_detection(strategy: str, scenario: str, trials: int, seed: int,
                          kind: BellKind = PHI_P, workers: int = 1, **strategy_kwargs) -> DetectionReport:
    """Sampled single-pair trials checked against :func:`exact_detection`.

    Trials run in chunks of :data:`CHUNK`, chunk ``c`` drawing from stream
    ``(seed, c)``; counts are summed, so the report does not depend on
    ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    streams.check_seed(seed)
    exact = exact_detection(strategy, scenario, kind, **strategy_kwargs)
    jobs = [(strategy, scenario, kind, seed, c, size, strategy_kwargs) for c, size in _chunks(trials)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            hits = sum(pool.map(_count_detections, jobs))
    else:
        hits = sum(map(_count_detections, jobs))
    rate, sigma, ok = within_3sigma(hits, trials, exact)
    return DetectionReport(strategy, scenario, exact, rate, trials, hits, sigma, ok, seed, str(kind))


def per_run_detection(strategy: str, n: int, kind: BellKind = PHI_P) -> Fraction:
    """Probability that a balanced-key run of length ``n`` aborts, from the per-pair values.

    A balanced key gives 2n CTRL pairs and n checked decoy pairs.
    """
    p_ctrl = exact_detection(strategy, "ctrl_ctrl", kind)
    p_sift = exact_detection(strategy, "sift_sift_checked", kind)
    return 1 - (1 - p_ctrl) ** (2 * n) * (1 - p_sift) ** n


# ---------------------------------------------------------------------------
# efficiency


@dataclass
class EfficiencyReport:
    n: int
    delta: Fraction
    N: int
    M: int
    lambda_s: int
    lambda_q: int
    lambda_c: int
    eta: Fraction
    reference_table: dict[str, Fraction]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "delta": str(self.delta),
            "N": self.N,
            "M": self.M,
            "lambda_s": self.lambda_s,
            "lambda_q": self.lambda_q,
            "lambda_c": self.lambda_c,
            "eta": rational_json(self.eta),
            "reference_table": {k: rational_json(v) for k, v in self.reference_table.items()},
        }


def efficiency(n: int, delta=0, M: int | None = None) -> EfficiencyReport:
    """Qubit efficiency ``n / (8n + N + M + 3n)`` with ``N = ceil(4n(1 + delta))``.

    ``delta`` is read through its decimal string so ``0.1`` means 1/10.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    d = Fraction(str(delta)) if isinstance(delta, float) else Fraction(delta)
    if d < 0:
        raise ValueError("delta must be non-negative")
    N = math.ceil(4 * n * (1 + d))
    if M is None:
        M = N
    elif M < N:
        raise ValueError(f"M must be at least N = {N}, got {M}")
    lam_q = 8 * n + N + M
    lam_c = 3 * n
    return EfficiencyReport(n, d, N, M, n, lam_q, lam_c, Fraction(n, lam_q + lam_c), dict(REFERENCE_EFFICIENCY))


# ---------------------------------------------------------------------------
# early abort


@dataclass
class LeakageReport:
    n: int
    trials: int
    early_aborts: int
    empirical: float
    analytic: Fraction
    std_err: float
    within_3sigma: bool
    seed: int
    unequal: int

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "trials": self.trials,
            "early_aborts": self.early_aborts,
            "empirical_early_abort_rate": self.empirical,
            "analytic": rational_json(self.analytic),
            "std_err": self.std_err,
            "within_3sigma": self.within_3sigma,
            "unequal_runs": self.unequal,
            "seed": self.seed,
        }


def _leakage_chunk(args) -> tuple[int, int]:
    n, seed, chunk, size = args
    rng = streams.stream(seed, Role.INPUTS, chunk)
    early = unequal = 0
    for _ in range(size):
        X = rng.integers(0, 2, n)
        Y = rng.integers(0, 2, n)
        run_seed = int(rng.integers(0, 1 << 63))
        res = run_protocol(ProtocolConfig(n=n, seed=run_seed), X, Y)
        if res.outcome == "unequal":
            unequal += 1
            early += res.rounds_used < n
    return early, unequal


def leakage_experiment(n: int, trials: int, seed: int, workers: int = 1) -> LeakageReport:
    """Fraction of honest runs, uniform inputs, stopping before round ``n``.

    Inputs are drawn uniformly and independently, which the analytic value
    ``1 - (1/2)^(n-1)`` assumes.
    """
    if n < 2:
        raise ValueError("n must be at least 2 for the early-abort rate")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    streams.check_seed(seed)
    jobs = [(n, seed, c, size) for c, size in _chunks(trials)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_leakage_chunk, jobs))
    else:
        parts = list(map(_leakage_chunk, jobs))
    early = sum(p[0] for p in parts)
    unequal = sum(p[1] for p in parts)
    analytic = 1 - Fraction(1, 2 ** (n - 1))
    rate, sigma, ok = within_3sigma(early, trials, analytic)
    return LeakageReport(n, trials, early, rate, analytic, sigma, ok, seed, unequal)
