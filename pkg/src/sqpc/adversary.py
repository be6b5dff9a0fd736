"""
Attack strategies: channel taps for an outside eavesdropper or a dishonest
Alice, and a wholesale replacement for a dishonest TP.

Every strategy records what it learns in an :class:`AdversaryKnowledge`.
Outsiders decode retrospectively, once the CTRL positions are announced.
"""

from __future__ import annotations

import numpy as np

from .channel import AdversaryKnowledge, ChannelTap, Particle
from .protocol import PAIR_CAPACITY, ConfigurationError, ProtocolConfig
from .qcore import (
    BellKind,
    QuantumRegister,
    choose_uniform,
    discard,
    expected_bell,
    measure_z,
    prepare_z,
)

__all__ = [
    "ChannelTap",
    "AdversaryKnowledge",
    "EveInterceptResend",
    "EveMeasureResend",
    "AliceInterceptResend",
    "AliceMeasureResend",
    "DishonestTP",
    "eve_intercept_resend",
    "eve_measure_resend",
    "alice_intercept_resend",
    "alice_measure_resend",
    "dishonest_tp",
    "STRATEGIES",
    "make_strategy",
]

FAKE_POLICIES = ("all_zero", "uniform_random")


def _sift_from_ctrl(total: int, ctrl_positions_1based) -> list[int]:
    ctrl = {p - 1 for p in ctrl_positions_1based}
    return [j for j in range(total) if j not in ctrl]


class _Outsider(ChannelTap):
    """Shared bookkeeping for Eve: per-leg observations, decoded once SIFT positions are public."""

    def begin(self, n, coins, key_prime=None) -> None:
        super().begin(n, coins, key_prime)
        self.obs = {"alice": ({}, {}), "bob": ({}, {})}  # (outbound, inbound) per position
        self.kept: list[Particle] = []
        self.knowledge = AdversaryKnowledge()

    def _decode(self, party: str, sift: list[int]) -> list[int]:
        out, back = self.obs[party]
        return [out[j] ^ back[j] for j in sift[: 2 * self.n]]

    def on_announcement(self, event) -> None:
        if event.payload.get("kind") != "ctrl_positions" or self.knowledge.learned_A is not None:
            return
        sift = _sift_from_ctrl(4 * self.n, event.payload["positions"])
        k = self.knowledge
        k.learned_A = self._decode("alice", sift)
        k.learned_B = self._decode("bob", sift)
        # without the masks or the layout the best guess reads the masked data as plain data
        k.guessed_X = k.learned_A[: self.n]
        k.guessed_Y = k.learned_B[: self.n]
        k.notes["sift_positions"] = [j + 1 for j in sift]

    def finish(self, sampler) -> None:
        for p in self.kept:
            if p.reg.is_live(p.q):
                discard(p.reg, p.q, sampler)
        self.kept = []


class EveInterceptResend(_Outsider):
    """Keep TP's particle, send a Z-basis fake, Z-measure what comes back."""

    name = "eve-ir"

    def __init__(self, fake_bits: str = "all_zero") -> None:
        super().__init__()
        if fake_bits not in FAKE_POLICIES:
            raise ValueError(f"fake_bits must be one of {FAKE_POLICIES}")
        self.fake_bits = fake_bits

    def _fake(self, party: str, j: int, particle: Particle) -> Particle:
        bit = 0 if self.fake_bits == "all_zero" else choose_uniform(self.coins, 2)
        self.obs[party][0][j] = bit
        self.kept.append(particle)
        return Particle(particle.reg, prepare_z(particle.reg, bit))

    def _collect(self, party: str, j: int, particle: Particle, sampler) -> Particle:
        self.obs[party][1][j] = measure_z(particle.reg, particle.q, sampler)
        return particle

    def tp_to_alice(self, j, particle, sampler):
        return self._fake("alice", j, particle)

    def alice_to_tp(self, j, particle, sampler):
        return self._collect("alice", j, particle, sampler)

    def tp_to_bob(self, j, particle, sampler):
        return self._fake("bob", j, particle)

    def bob_to_tp(self, j, particle, sampler):
        return self._collect("bob", j, particle, sampler)


class EveMeasureResend(_Outsider):
    name = "eve-mr"

    def _measure(self, party: str, leg: int, j: int, particle: Particle, sampler) -> Particle:
        self.obs[party][leg][j] = measure_z(particle.reg, particle.q, sampler)
        return particle

    def tp_to_alice(self, j, particle, sampler):
        return self._measure("alice", 0, j, particle, sampler)

    def alice_to_tp(self, j, particle, sampler):
        return self._measure("alice", 1, j, particle, sampler)

    def tp_to_bob(self, j, particle, sampler):
        return self._measure("bob", 0, j, particle, sampler)

    def bob_to_tp(self, j, particle, sampler):
        return self._measure("bob", 1, j, particle, sampler)


class _AliceInsider(ChannelTap):
    """Alice co-owns the key, so she touches only Bob's SIFT particles and decodes B on the fly.

    Without R_B1 she has no basis for a guess at Y, so ``guessed_Y`` stays unset.
    """

    insider = "alice"

    def begin(self, n, coins, key_prime=None) -> None:
        super().begin(n, coins, key_prime)
        if key_prime is None:
            raise ConfigurationError("an insider tap needs the shared key")
        self.key_prime = np.asarray(key_prime)
        self.outbound: dict[int, int] = {}
        self.decoded: list[int] = []
        self.knowledge = AdversaryKnowledge()

    def _is_sift(self, j: int) -> bool:
        return not self.key_prime[j]

    def _record(self, j: int, inbound: int) -> None:
        if len(self.decoded) < 2 * self.n:
            self.decoded.append(self.outbound[j] ^ inbound)
        self.knowledge.learned_B = list(self.decoded)

    def bob_to_tp(self, j, particle, sampler):
        if self._is_sift(j):
            self._record(j, measure_z(particle.reg, particle.q, sampler))
        return particle


class AliceInterceptResend(_AliceInsider):
    name = "alice-ir"

    def __init__(self, fake_bits: str = "all_zero") -> None:
        super().__init__()
        if fake_bits not in FAKE_POLICIES:
            raise ValueError(f"fake_bits must be one of {FAKE_POLICIES}")
        self.fake_bits = fake_bits

    def tp_to_bob(self, j, particle, sampler):
        if not self._is_sift(j):
            return particle
        bit = 0 if self.fake_bits == "all_zero" else choose_uniform(self.coins, 2)
        discard(particle.reg, particle.q, sampler)
        self.outbound[j] = bit
        return Particle(particle.reg, prepare_z(particle.reg, bit))


class AliceMeasureResend(_AliceInsider):
    name = "alice-mr"

    def tp_to_bob(self, j, particle, sampler):
        if self._is_sift(j):
            self.outbound[j] = measure_z(particle.reg, particle.q, sampler)
        return particle


class DishonestTP:
    """TP that sends Z-basis singles instead of Bell pairs and fabricates consistent reports.

    Its announcements always pass both checks.  It decodes A and B
    exactly, announces the true ``c'``, and guesses X and Y by reading the
    masked data as plain data.
    """

    name = "tp-fake"
    replaces_tp = True

    def begin(self, config: ProtocolConfig, rng: np.random.Generator) -> None:
        self.n = config.n
        self.total = config.pairs
        self.placement = config.placement
        self.rng = rng
        self.singles: dict[int, tuple[int, int]] = {}
        self.fabricated: dict[int, BellKind] = {}
        self.returned: dict[int, tuple[Particle, Particle]] = {}
        self.decoded: dict[int, tuple[int, int]] = {}
        self.prepared = 0

    def prepare(self, j: int, exact: bool = False) -> tuple[Particle, Particle]:
        if j >= self.total:
            raise ConfigurationError(f"TP already prepared all {self.total} positions")
        if j not in self.singles:
            # drawn on first use so a replayed position reuses its draws
            bits = self.rng.integers(0, 2, 2)
            self.singles[j] = (int(bits[0]), int(bits[1]))
            self.fabricated[j] = list(BellKind)[int(self.rng.integers(0, 4, 1)[0])]
        reg = QuantumRegister(PAIR_CAPACITY, exact=exact)
        qa = prepare_z(reg, self.singles[j][0])
        qb = prepare_z(reg, self.singles[j][1])
        self.prepared = max(self.prepared, j + 1)
        return Particle(reg, qa), Particle(reg, qb)

    def receive(self, j: int, pa: Particle, pb: Particle, sampler) -> None:
        self.returned[j] = (pa, pb)

    def settle(self, j: int, is_ctrl: bool, sampler) -> None:
        if is_ctrl:
            return
        pa, pb = self.returned[j]
        ma = measure_z(pa.reg, pa.q, sampler)
        mb = measure_z(pb.reg, pb.q, sampler)
        sa, sb = self.singles[j]
        self.decoded[j] = (sa ^ ma, sb ^ mb)

    def report(self, j: int) -> tuple[BellKind, BellKind]:
        initial = self.fabricated[j]
        if j not in self.decoded:
            return initial, initial
        a, b = self.decoded[j]
        return initial, expected_bell(initial, a ^ b)

    def c_bit(self, j: int) -> int:
        a, b = self.decoded[j]
        return a ^ b

    def hear(self, event) -> None:
        pass

    @property
    def knowledge(self) -> AdversaryKnowledge:
        sift = sorted(self.decoded)[: 2 * self.n]
        A = [self.decoded[j][0] for j in sift]
        B = [self.decoded[j][1] for j in sift]
        k = AdversaryKnowledge(learned_A=A, learned_B=B)
        if len(sift) == 2 * self.n:
            k.guessed_X = [A[l] for l in self.placement[: self.n]]
            k.guessed_Y = [B[l] for l in self.placement[: self.n]]
        return k


def eve_intercept_resend(fake_bits: str = "all_zero") -> EveInterceptResend:
    return EveInterceptResend(fake_bits)


def eve_measure_resend() -> EveMeasureResend:
    return EveMeasureResend()


def alice_intercept_resend(fake_bits: str = "all_zero") -> AliceInterceptResend:
    return AliceInterceptResend(fake_bits)


def alice_measure_resend() -> AliceMeasureResend:
    return AliceMeasureResend()


def dishonest_tp() -> DishonestTP:
    return DishonestTP()


STRATEGIES = {
    "eve-ir": eve_intercept_resend,
    "eve-mr": eve_measure_resend,
    "alice-ir": alice_intercept_resend,
    "alice-mr": alice_measure_resend,
    "tp-fake": dishonest_tp,
}


def make_strategy(name: str, **kwargs):
    """Fresh strategy instance by CLI name; ``"none"`` gives ``None``."""
    if name == "none":
        return None
    try:
        factory = STRATEGIES[name]
    except KeyError:
        raise ValueError(f"unknown strategy {name!r}; valid: {', '.join(STRATEGIES)}") from None
    return factory(**kwargs)
