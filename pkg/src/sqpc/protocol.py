"""
Three-party Bell-state private comparison: TP, quantum Alice, classical Bob.

A run proceeds in six stages:

1. secrets: masks, decoys, the shared key ``K_AB`` and its four-fold
   repetition ``K'``;
2. TP prepares 4n random Bell pairs and sends the halves one at a time;
3. each user returns position ``j`` untouched (CTRL, ``K'[j] = 1``) or
   applies ``sigma^bit`` with the next bit of its 2n-bit sequence (SIFT);
4. TP Bell-measures each returned pair, then the CTRL check and the
   decoy (SIFT) check run;
5. TP keeps the comparison bits of the data slots;
6. rounds ``i = 1..n`` announce ``c'_i`` and the masked key bits, stopping
   at the first ``m_i = 1``.

Every pair lives in its own small register, allocated when TP prepares it.
Attackers append their fake particles to that register.
"""

from __future__ import annotations

import copy
import enum
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Sequence

import numpy as np

from . import streams
from .channel import AdversaryKnowledge, ChannelTap, Particle
from .qcore import (
    BellKind,
    PauliOp,
    QuantumRegister,
    RandomSampler,
    apply_pauli,
    enumerate_branches,
    expected_bell,
    measure_bell,
    prepare_bell,
)
from .streams import Role

TRANSCRIPT_VERSION = "transcript_v1"
PAIR_CAPACITY = 8


class ConfigurationError(ValueError):
    pass


class KeyMode(str, enum.Enum):
    BALANCED = "balanced"
    PADDED = "padded"


class Mode(str, enum.Enum):
    SAMPLING = "sampling"
    EXACT = "exact"


def concat_placement(n: int) -> tuple[int, ...]:
    """Masked data first, decoys second (0-based positions)."""
    return tuple(range(2 * n))


def swap_placement(n: int) -> tuple[int, ...]:
    """Decoys first, masked data second."""
    return tuple(range(n, 2 * n)) + tuple(range(n))


@dataclass(frozen=True)
class ProtocolConfig:
    """All run parameters.

    ``placement[s]`` is the 0-based position in A (and B) of logical slot
    ``s``; slots ``0..n-1`` carry masked data and ``n..2n-1`` the decoys.
    """

    n: int
    placement: tuple[int, ...] | None = None
    key_mode: KeyMode = KeyMode.BALANCED
    delta: float = 0.0
    M: int | None = None
    seed: int = 0
    mode: Mode = Mode.SAMPLING

    def __post_init__(self) -> None:
        object.__setattr__(self, "key_mode", KeyMode(self.key_mode))
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.n < 1:
            raise ConfigurationError("n must be at least 1")
        if self.key_mode is KeyMode.BALANCED and self.n % 2:
            raise ConfigurationError("balanced key mode needs an even n")
        if self.placement is None:
            object.__setattr__(self, "placement", concat_placement(self.n))
        placement = tuple(int(p) for p in self.placement)
        if sorted(placement) != list(range(2 * self.n)):
            raise ConfigurationError(f"placement is not a bijection on {2 * self.n} slots")
        object.__setattr__(self, "placement", placement)
        if self.delta < 0:
            raise ConfigurationError("delta must be non-negative")
        streams.check_seed(self.seed)

    @property
    def pairs(self) -> int:
        return 4 * self.n


@dataclass
class PartySecrets:
    X: np.ndarray
    Y: np.ndarray
    R_A1: np.ndarray
    R_A2: np.ndarray
    R_B1: np.ndarray
    R_B2: np.ndarray
    K_AB: np.ndarray

    @property
    def K_prime(self) -> np.ndarray:
        return np.tile(self.K_AB, 4)

    @property
    def X_masked(self) -> np.ndarray:
        return mask_input(self.X, self.R_A1)

    @property
    def Y_masked(self) -> np.ndarray:
        return mask_input(self.Y, self.R_B1)


def as_bits(bits: Iterable[int], n: int | None = None) -> np.ndarray:
    arr = np.asarray(list(bits), dtype=np.uint8)
    if arr.size and arr.max() > 1:
        raise ValueError("bit vectors hold only 0 and 1")
    if n is not None and arr.size != n:
        raise ValueError(f"expected {n} bits, got {arr.size}")
    return arr


def sample_secrets(config: ProtocolConfig, X, Y, rng: np.random.Generator | None = None) -> PartySecrets:
    """Draw both users' masks and decoys and the shared key.

    Without ``rng`` each party draws from its own stream of ``config.seed``.
    """
    n = config.n
    X, Y = as_bits(X, n), as_bits(Y, n)
    rng_a = rng or streams.stream(config.seed, Role.SECRETS_ALICE)
    rng_b = rng or streams.stream(config.seed, Role.SECRETS_BOB)
    rng_k = rng or streams.stream(config.seed, Role.KEY)
    R_A1 = rng_a.integers(0, 2, n, dtype=np.uint8)
    R_A2 = rng_a.integers(0, 2, n, dtype=np.uint8)
    R_B1 = rng_b.integers(0, 2, n, dtype=np.uint8)
    R_B2 = rng_b.integers(0, 2, n, dtype=np.uint8)
    if config.key_mode is KeyMode.BALANCED:
        if n % 2:
            raise ConfigurationError("balanced key mode needs an even n")
        K = np.ones(n, dtype=np.uint8)
        K[rng_k.choice(n, n // 2, replace=False)] = 0
    else:
        K = rng_k.integers(0, 2, n, dtype=np.uint8)
    return PartySecrets(X, Y, R_A1, R_A2, R_B1, R_B2, K)


def mask_input(V, R) -> np.ndarray:
    V, R = as_bits(V), as_bits(R)
    if V.shape != R.shape:
        raise ValueError(f"length mismatch: {V.size} vs {R.size}")
    return V ^ R


def assemble_sequence(masked, decoys, placement: Sequence[int]) -> np.ndarray:
    masked, decoys = as_bits(masked), as_bits(decoys)
    logical = np.concatenate([masked, decoys])
    if sorted(placement) != list(range(logical.size)):
        raise ConfigurationError("placement is not a bijection")
    seq = np.empty_like(logical)
    seq[list(placement)] = logical
    return seq


def disassemble_sequence(seq, placement: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    seq = as_bits(seq)
    logical = seq[list(placement)]
    n = seq.size // 2
    return logical[:n], logical[n:]


# ---------------------------------------------------------------------------
# transcript


@dataclass(frozen=True)
class Event:
    seq: int
    actor: str
    event_type: str
    payload: dict

    def to_dict(self) -> dict:
        return {"seq": self.seq, "actor": self.actor, "event_type": self.event_type, "payload": self.payload}


class AbortedRun(Exception):
    def __init__(self, check: str, detail: dict) -> None:
        super().__init__(f"{check} check failed")
        self.check = check
        self.detail = detail


class Transcript:
    """Ordered record of particle transfers and public announcements."""

    def __init__(self, listeners: Sequence = ()) -> None:
        self.events: list[Event] = []
        self.listeners = list(listeners)
        self.closed = False

    def emit(self, actor: str, event_type: str, **payload) -> Event:
        if self.closed:
            raise RuntimeError("transcript already terminated")
        ev = Event(len(self.events) + 1, actor, event_type, payload)
        self.events.append(ev)
        if event_type in ("announcement", "abort"):
            for listener in self.listeners:
                listener(ev)
        if event_type in ("abort", "result"):
            self.closed = True
        return ev

    def announce(self, speaker: str, kind: str, **body) -> Event:
        return self.emit(speaker, "announcement", kind=kind, **body)

    def to_jsonl(self) -> str:
        lines = [json.dumps({"version": TRANSCRIPT_VERSION, **e.to_dict()}, sort_keys=True) for e in self.events]
        return "\n".join(lines) + ("\n" if lines else "")

    def __iter__(self):
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)


def validate_transcript(events: Iterable[Event]) -> None:
    """Raise ``ValueError`` if TP ever has two particles in flight to one party,
    or if anything follows an abort."""
    in_flight: dict[str, int | None] = {"alice": None, "bob": None}
    ended = False
    for ev in events:
        if ended:
            raise ValueError(f"event {ev.seq} follows the end of the run")
        if ev.event_type == "particle_sent":
            party = ev.payload["to"]
            if in_flight[party] is not None:
                raise ValueError(
                    f"particle {ev.payload['position']} sent to {party} while "
                    f"{in_flight[party]} is still in flight"
                )
            in_flight[party] = ev.payload["position"]
        elif ev.event_type == "particle_returned":
            party = ev.payload["from"]
            if in_flight[party] != ev.payload["position"]:
                raise ValueError(f"unexpected return of particle {ev.payload['position']} from {party}")
            in_flight[party] = None
        elif ev.event_type in ("abort", "result"):
            ended = True


# ---------------------------------------------------------------------------
# parties


@dataclass(frozen=True)
class ParticleAction:
    kind: str  # "CTRL" or "SIFT"
    op: PauliOp | None = None
    slot: int | None = None  # 0-based SIFT index l; None for CTRL and padding

    @property
    def is_ctrl(self) -> bool:
        return self.kind == "CTRL"

    @property
    def padding(self) -> bool:
        return self.kind == "SIFT" and self.slot is None

    def __str__(self) -> str:
        return "CTRL" if self.is_ctrl else f"SIFT({self.op})"


CTRL = ParticleAction("CTRL")


def user_respond(particle: Particle, key_bit: int, data_seq: np.ndarray, sift_counter: int) -> tuple[ParticleAction, int]:
    """Apply one user's CTRL/SIFT rule to ``particle``; return the action and the new counter."""
    if key_bit:
        return CTRL, sift_counter
    if sift_counter < data_seq.size:
        op = PauliOp.SIGMA_X if data_seq[sift_counter] else PauliOp.I
        apply_pauli(particle.reg, particle.q, op)
        return ParticleAction("SIFT", op, sift_counter), sift_counter + 1
    # surplus SIFT position in padded key mode
    return ParticleAction("SIFT", PauliOp.I, None), sift_counter + 1


class User:
    def __init__(self, name: str, key_prime: np.ndarray, data_seq: np.ndarray) -> None:
        self.name = name
        self.key_prime = key_prime
        self.data_seq = data_seq
        self.sift_counter = 0

    def respond(self, j: int, particle: Particle) -> ParticleAction:
        action, self.sift_counter = user_respond(particle, int(self.key_prime[j]), self.data_seq, self.sift_counter)
        return action


def tp_classify(initial: BellKind, measured: BellKind) -> int:
    return 0 if measured is initial else 1


class HonestTP:
    """TP following the protocol: random Bell pairs, Bell measurement, truthful reports."""

    replaces_tp = False

    def __init__(self) -> None:
        self.knowledge = None

    def begin(self, config: ProtocolConfig, rng: np.random.Generator) -> None:
        self.total = config.pairs
        self.kinds = [list(BellKind)[k] for k in rng.integers(0, 4, self.total)]
        self.prepared = 0
        self.outcomes: dict[int, BellKind] = {}

    def prepare(self, j: int, exact: bool = False) -> tuple[Particle, Particle]:
        if j >= self.total:
            raise ConfigurationError(f"TP already prepared all {self.total} pairs")
        reg = QuantumRegister(PAIR_CAPACITY, exact=exact)
        qa, qb = prepare_bell(reg, self.kinds[j])
        self.prepared = max(self.prepared, j + 1)
        return Particle(reg, qa), Particle(reg, qb)

    def receive(self, j: int, pa: Particle, pb: Particle, sampler) -> None:
        if pa.reg is not pb.reg:
            raise RuntimeError("returned particles do not share a register")
        self.outcomes[j] = measure_bell(pa.reg, pa.q, pb.q, sampler)

    def settle(self, j: int, is_ctrl: bool, sampler) -> None:
        pass

    def report(self, j: int) -> tuple[BellKind, BellKind]:
        return self.kinds[j], self.outcomes[j]

    def c_bit(self, j: int) -> int:
        return tp_classify(*self.report(j))

    def hear(self, event: Event) -> None:
        pass


def tp_prepare_round(tp: HonestTP, exact: bool = False) -> tuple[BellKind, Particle, Particle]:
    """Prepare TP's next pair; raises once all 4n pairs exist."""
    j = tp.prepared
    pa, pb = tp.prepare(j, exact)
    return tp.kinds[j], pa, pb


# ---------------------------------------------------------------------------
# checks and comparison


@dataclass
class PairRecord:
    j: int
    initial: BellKind
    alice_action: ParticleAction
    bob_action: ParticleAction
    tp_outcome: BellKind
    role: str  # "ctrl_check", "sift_data", "padding"
    slot: int | None = None
    c_bit: int | None = None


def ctrl_check(records: Iterable[PairRecord]) -> int | None:
    """Position of the first CTRL pair whose outcome differs from its initial state."""
    for r in records:
        if r.tp_outcome is not r.initial:
            return r.j
    return None


def sift_check(records_by_slot: dict[int, PairRecord], decoy_slots: Sequence[int], R_A2, R_B2) -> int | None:
    """First decoy slot whose published (initial, outcome) breaks the Bell-flip relation."""
    for i, l in enumerate(decoy_slots):
        rec = records_by_slot[l]
        if rec.tp_outcome is not expected_bell(rec.initial, int(R_A2[i]) ^ int(R_B2[i])):
            return l
    return None


def extract_c_prime(C: Sequence[int], placement: Sequence[int]) -> np.ndarray:
    n = len(C) // 2
    C = np.asarray(C, dtype=np.uint8)
    return C[list(placement[:n])]


@dataclass
class ProtocolResult:
    outcome: str  # "equal", "unequal", "aborted"
    rounds_used: int
    M_bits: list[int]
    transcript: Transcript
    aborted_check: str | None = None
    n: int = 0
    seed: int = 0
    attack: str = "none"
    records: list[PairRecord] = field(default_factory=list)
    secrets: PartySecrets | None = None
    c_prime: list[int] | None = None
    knowledge: AdversaryKnowledge | None = None
    distribution: dict[str, Fraction] | None = None

    def to_dict(self) -> dict:
        out = {
            "outcome": self.outcome,
            "rounds_used": self.rounds_used,
            "n": self.n,
            "seed": self.seed,
            "attack": self.attack,
            "aborted_check": self.aborted_check,
        }
        if self.distribution is not None:
            out["distribution"] = {k: rational_json(v) for k, v in self.distribution.items()}
        return out


def rational_json(p) -> dict:
    p = Fraction(p)
    return {"num": p.numerator, "den": p.denominator, "value": float(p)}


def comparison_loop(c_prime: Sequence[int], secrets: PartySecrets, transcript: Transcript) -> tuple[str, list[int]]:
    M: list[int] = []
    n = len(c_prime)
    for i in range(n):
        c = int(c_prime[i])
        transcript.announce("tp", "c_prime_bit", i=i + 1, value=c)
        ma = int(secrets.R_A1[i] ^ secrets.K_AB[i])
        transcript.announce("alice", "masked_bit", party="alice", i=i + 1, value=ma)
        mb = int(secrets.R_B1[i] ^ secrets.K_AB[i])
        transcript.announce("bob", "masked_bit", party="bob", i=i + 1, value=mb)
        m = ma ^ mb ^ c
        M.append(m)
        if m:
            return "unequal", M
    return "equal", M


# ---------------------------------------------------------------------------
# runs


def _sift_layout(key_prime: np.ndarray, n: int) -> tuple[list[int], list[int]]:
    """(positions of the 2n SIFT slots in order, padding positions)."""
    sift = [j for j in range(key_prime.size) if not key_prime[j]]
    return sift[: 2 * n], sift[2 * n :]


def exchange_pair(j: int, pa: Particle, pb: Particle, alice: User, bob: User, tap, sampler, transcript):
    if transcript is not None:
        transcript.emit("tp", "particle_sent", to="alice", position=j + 1)
    pa = tap.tp_to_alice(j, pa, sampler)
    act_a = alice.respond(j, pa)
    pa = tap.alice_to_tp(j, pa, sampler)
    if transcript is not None:
        transcript.emit("alice", "particle_returned", **{"from": "alice"}, position=j + 1)
        transcript.emit("tp", "particle_sent", to="bob", position=j + 1)
    pb = tap.tp_to_bob(j, pb, sampler)
    act_b = bob.respond(j, pb)
    pb = tap.bob_to_tp(j, pb, sampler)
    if transcript is not None:
        transcript.emit("bob", "particle_returned", **{"from": "bob"}, position=j + 1)
    return pa, pb, act_a, act_b


def _attack_name(attack) -> str:
    return "none" if attack is None else getattr(attack, "name", type(attack).__name__)


def run_protocol(config: ProtocolConfig, X, Y, attack=None) -> ProtocolResult:
    """Execute one full run against ``attack`` (a channel tap or a TP replacement).

    The run is deterministic given ``config.seed``.  In exact mode the
    returned result is the sampled run for that seed, with
    :attr:`ProtocolResult.distribution` holding the exact outcome
    probabilities over all measurement outcomes (secrets, TP's state
    choices and the attacker's classical draws stay fixed by the seed).
    """
    n = config.n
    secrets = sample_secrets(config, X, Y)
    A = assemble_sequence(secrets.X_masked, secrets.R_A2, config.placement)
    B = assemble_sequence(secrets.Y_masked, secrets.R_B2, config.placement)
    key_prime = secrets.K_prime
    sift_pos, padding_pos = _sift_layout(key_prime, n)
    if len(sift_pos) < 2 * n:
        raise ConfigurationError(
            f"key has {len(sift_pos)} SIFT positions, {2 * n} needed; rejected before transmission"
        )

    if attack is not None and attack.replaces_tp:
        tp, tap = attack, ChannelTap()
    else:
        tp, tap = HonestTP(), attack or ChannelTap()
    tp.begin(config, streams.stream(config.seed, Role.TP))
    tap_template = copy.deepcopy(tap) if config.mode is Mode.EXACT else None
    coins = RandomSampler(streams.stream(config.seed, Role.ATTACK))
    tap.begin(n, coins, key_prime.copy() if tap.insider == "alice" else None)
    sampler = RandomSampler(streams.stream(config.seed, Role.QUANTUM))
    transcript = Transcript([tap.on_announcement, tp.hear])

    result = ProtocolResult(
        outcome="aborted", rounds_used=0, M_bits=[], transcript=transcript,
        n=n, seed=config.seed, attack=_attack_name(attack), secrets=secrets,
    )

    alice, bob = User("alice", key_prime, A), User("bob", key_prime, B)
    actions = []
    for j in range(config.pairs):
        pa, pb = tp.prepare(j)
        pa, pb, act_a, act_b = exchange_pair(j, pa, pb, alice, bob, tap, sampler, transcript)
        tp.receive(j, pa, pb, sampler)
        actions.append((act_a, act_b))

    ctrl_positions = [j for j in range(config.pairs) if key_prime[j]]
    for party in ("alice", "bob"):
        transcript.announce(party, "ctrl_positions", positions=[j + 1 for j in ctrl_positions])
    for j in range(config.pairs):
        tp.settle(j, bool(key_prime[j]), sampler)

    slot_of = {j: l for l, j in enumerate(sift_pos)}
    records = []
    for j, (act_a, act_b) in enumerate(actions):
        initial, outcome = tp.report(j)
        if act_a.is_ctrl:
            rec = PairRecord(j, initial, act_a, act_b, outcome, "ctrl_check")
        elif j in slot_of:
            rec = PairRecord(j, initial, act_a, act_b, outcome, "sift_data", slot_of[j], tp.c_bit(j))
        else:
            rec = PairRecord(j, initial, act_a, act_b, outcome, "padding")
        records.append(rec)
    result.records = records

    if config.mode is Mode.EXACT:
        result.distribution = exact_outcome_distribution(config, secrets, tp, tap_template)

    try:
        bad = ctrl_check(r for r in records if r.role == "ctrl_check")
        transcript.announce("tp", "ctrl_verdict", passed=bad is None)
        if bad is not None:
            raise AbortedRun("ctrl", {"position": bad + 1})

        decoy_slots = list(config.placement[n:])
        decoy_positions = [sift_pos[l] for l in decoy_slots]
        transcript.announce("alice", "decoy_positions", positions=[j + 1 for j in decoy_positions])
        transcript.announce(
            "tp", "tp_reveal",
            pairs=[{"position": j + 1, "initial": str(records[j].initial), "outcome": str(records[j].tp_outcome)}
                   for j in decoy_positions],
        )
        transcript.announce("alice", "decoy_reveal", party="alice", bits=[int(b) for b in secrets.R_A2])
        transcript.announce("bob", "decoy_reveal", party="bob", bits=[int(b) for b in secrets.R_B2])
        by_slot = {r.slot: r for r in records if r.role == "sift_data"}
        bad = sift_check(by_slot, decoy_slots, secrets.R_A2, secrets.R_B2)
        if bad is not None:
            raise AbortedRun("sift", {"slot": bad + 1})
    except AbortedRun as abort:
        transcript.emit("protocol", "abort", reason=abort.check, **abort.detail)
        result.aborted_check = abort.check
        tap.finish(sampler)
        result.knowledge = _knowledge(tap, tp)
        return result

    C = [by_slot[l].c_bit for l in range(2 * n)]
    c_prime = extract_c_prime(C, config.placement)
    result.c_prime = [int(c) for c in c_prime]
    outcome, M = comparison_loop(c_prime, secrets, transcript)
    transcript.emit("protocol", "result", outcome=outcome, rounds_used=len(M))
    result.outcome, result.M_bits, result.rounds_used = outcome, M, len(M)
    tap.finish(sampler)
    result.knowledge = _knowledge(tap, tp)
    return result


def _knowledge(tap, tp) -> AdversaryKnowledge | None:
    if tp.replaces_tp:
        return tp.knowledge
    if type(tap) is ChannelTap:
        return None
    return tap.knowledge


def exact_outcome_distribution(config: ProtocolConfig, secrets: PartySecrets, tp, tap_template) -> dict[str, Fraction]:
    """Exact probabilities of the four run outcomes given the seeded classical choices.

    Each pair is enumerated on its own; pairs interact with nothing but the
    checks and comparison bits, so the per-pair laws combine by products.
    """
    n = config.n
    key_prime = secrets.K_prime
    A = assemble_sequence(secrets.X_masked, secrets.R_A2, config.placement)
    B = assemble_sequence(secrets.Y_masked, secrets.R_B2, config.placement)
    sift_pos, _ = _sift_layout(key_prime, n)
    slot_of = {j: l for l, j in enumerate(sift_pos)}

    def pair_law(j: int) -> dict:
        def script(sampler):
            tap = copy.deepcopy(tap_template)
            tp_copy = copy.deepcopy(tp)
            tap.begin(n, sampler, key_prime.copy() if tap.insider == "alice" else None)
            alice, bob = User("alice", key_prime, A), User("bob", key_prime, B)
            # users' counters must match position j
            alice.sift_counter = bob.sift_counter = sum(1 for k in range(j) if not key_prime[k])
            pa, pb = tp_copy.prepare(j, exact=True)
            pa, pb, _, _ = exchange_pair(j, pa, pb, alice, bob, tap, sampler, None)
            tp_copy.receive(j, pa, pb, sampler)
            tp_copy.settle(j, bool(key_prime[j]), sampler)
            initial, outcome = tp_copy.report(j)
            c = tp_copy.c_bit(j) if j in slot_of else None
            return initial, outcome, c

        return enumerate_branches(script).distribution(key=lambda b: b.state)

    p_ctrl = Fraction(1)
    for j in range(config.pairs):
        if key_prime[j]:
            law = pair_law(j)
            p_ctrl *= sum((p for (ini, out, _), p in law.items() if out is ini), Fraction(0))

    p_sift = Fraction(1)
    for i, l in enumerate(config.placement[n:]):
        flip = int(secrets.R_A2[i]) ^ int(secrets.R_B2[i])
        law = pair_law(sift_pos[l])
        p_sift *= sum((p for (ini, out, _), p in law.items() if out is expected_bell(ini, flip)), Fraction(0))

    # m_i = r_A1 ^ r_B1 ^ c'_i: the key bits cancel
    p_equal = Fraction(1)
    p_unequal = Fraction(0)
    for i, l in enumerate(config.placement[:n]):
        law = pair_law(sift_pos[l])
        r = int(secrets.R_A1[i]) ^ int(secrets.R_B1[i])
        p_m1 = sum((p for (_, _, c), p in law.items() if c ^ r), Fraction(0))
        p_unequal += p_equal * p_m1
        p_equal *= 1 - p_m1

    passed = p_ctrl * p_sift
    return {
        "aborted_ctrl": 1 - p_ctrl,
        "aborted_sift": p_ctrl * (1 - p_sift),
        "equal": passed * p_equal,
        "unequal": passed * p_unequal,
    }
