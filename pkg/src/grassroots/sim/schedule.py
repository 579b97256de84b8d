"""Fair round-robin scheduling with seeded tie-breaks.

Agents take turns in a fixed rotation of the sorted agent list, offset by
the seed.  Since the rotation never changes between rounds, any agent
acts exactly once in every window of ``len(agents)`` consecutive turns.
Within a turn, an agent's pending actions are shuffled by an RNG derived
from (seed, round, agent), so the order is arbitrary but reproducible.
"""

from __future__ import annotations

import random
from typing import Hashable, Iterable, Sequence


def rotation(agents: Iterable[str], seed: int) -> list[str]:
    order = sorted(agents)
    if not order:
        return []
    k = seed % len(order)
    return order[k:] + order[:k]


def tie_break_rng(seed: int, round_no: int, agent: str) -> random.Random:
    return random.Random(f"{seed}/{round_no}/{agent}")


def tie_break(items: Sequence, seed: int, round_no: int, agent: str) -> list:
    out = list(items)
    tie_break_rng(seed, round_no, agent).shuffle(out)
    return out


def fair_schedule(pending: dict[str, Sequence[Hashable]], seed: int, round_no: int) -> list[tuple[str, Hashable]]:
    """Order one round of pending actions: agents in rotation, each agent's actions shuffled."""
    out = []
    for a in rotation(pending.keys(), seed):
        for act in tie_break(sorted(pending[a], key=repr), seed, round_no, a):
            out.append((a, act))
    return out
