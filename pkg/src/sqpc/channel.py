"""Particle handles and the pass-through channel tap."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .qcore import QuantumRegister


@dataclass(frozen=True, eq=False)
class Particle:
    """One qubit in flight: the register holding it and its id there."""

    reg: QuantumRegister
    q: int


@dataclass
class AdversaryKnowledge:
    learned_A: list[int] | None = None
    learned_B: list[int] | None = None
    guessed_X: list[int] | None = None
    guessed_Y: list[int] | None = None
    notes: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "learned_A": self.learned_A,
            "learned_B": self.learned_B,
            "guessed_X": self.guessed_X,
            "guessed_Y": self.guessed_Y,
            "notes": self.notes,
        }


class ChannelTap:
    """Interception points on both user channels; the base class forwards untouched.

    A tap sees particles only through the four hooks below and public
    announcements through :meth:`on_announcement`.  It is bound to a single
    protocol run by :meth:`begin`.  ``insider`` names the participant the
    tap acts for (``None`` for an outsider); only an insider tap is handed
    the shared 4n-bit key at :meth:`begin`.
    """

    name = "none"
    insider: str | None = None
    replaces_tp = False

    def __init__(self) -> None:
        self.knowledge = AdversaryKnowledge()
        self.n = 0
        self.coins = None

    def begin(self, n: int, coins, key_prime=None) -> None:
        self.n = n
        self.coins = coins

    def tp_to_alice(self, j: int, particle: Particle, sampler) -> Particle:
        return particle

    def alice_to_tp(self, j: int, particle: Particle, sampler) -> Particle:
        return particle

    def tp_to_bob(self, j: int, particle: Particle, sampler) -> Particle:
        return particle

    def bob_to_tp(self, j: int, particle: Particle, sampler) -> Particle:
        return particle

    def on_announcement(self, event) -> None:
        pass

    def finish(self, sampler) -> None:
        pass
