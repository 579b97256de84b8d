"""Mapping dissemination configurations to coin configurations and back.

``sigma_local`` reads an agent's own consecutively indexed blocks
``(p,1,⊥), (p,2,x_2), ..., (p,n,x_n)`` as the coin sequence ``x_2..x_n``.
``gamma`` rebuilds a whole coin configuration from any block set and
``sigma_hat`` turns a coin configuration into the dissemination
configuration where every agent knows every block.  Block index ``k+1``
holds the coin at sequence position ``k`` throughout.

``verify_refinement`` checks a recorded dissemination run: the mapped run,
with stutters removed, must consist of correct coin transitions, and no
pending claim may starve beyond the horizon.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable

from .gcd import CoinBlock, GcdConfig, View
from .mts import AgentId, Run, check_live_bounded
from .sc import CoinLedger, ScConfig, ScRules, sc_guard, sc_liveness

log = logging.getLogger(__name__)


class UndefinedAt(Exception):
    def __init__(self, agent: AgentId, reason: str):
        super().__init__(f"sigma undefined at {agent}: {reason}")
        self.agent = agent
        self.reason = reason


@dataclass(frozen=True)
class SigmaResult:
    value: tuple | None
    defined: bool
    reason: str = ""


def _chain(blocks: Iterable[CoinBlock], owner: AgentId) -> SigmaResult:
    own = sorted((b for b in blocks if b.author == owner), key=CoinBlock.sort_key)
    if not own:
        return SigmaResult((), True)
    idx = [b.index for b in own]
    if idx != list(range(1, len(own) + 1)):
        if len(set(idx)) != len(idx):
            return SigmaResult(None, False, "fork: two blocks with the same index")
        return SigmaResult(None, False, "index gap")
    if own[0].coin is not None:
        return SigmaResult(None, False, "initial block carries a coin")
    coins = []
    for b in own[1:]:
        if b.coin is None:
            return SigmaResult(None, False, f"block {b.index} carries no coin")
        coins.append(b.coin)
    return SigmaResult(tuple(coins), True)


def sigma_local(blocks, owner: AgentId) -> SigmaResult:
    if isinstance(blocks, View):
        blocks = blocks.author_blocks(owner)
    return _chain(blocks, owner)


def sigma(c: GcdConfig) -> ScConfig:
    out = {}
    for p, view in c.items():
        r = sigma_local(view, p)
        if not r.defined:
            raise UndefinedAt(p, r.reason)
        out[p] = r.value
    return ScConfig.from_map(out)


def gamma(blocks: Iterable[CoinBlock], agents: Iterable[AgentId]) -> ScConfig | None:
    """Coin view of a block set, or None when holed, forked, incomplete or inconsistent."""
    blocks = list(blocks)
    agents = sorted(set(agents))
    if any(b.author not in agents for b in blocks):
        return None
    seqs = {}
    for p in agents:
        r = _chain(blocks, p)
        if not r.defined:
            return None
        seqs[p] = r.value
    c = ScConfig.from_map(seqs)
    led = c.ledger
    if not (led.is_complete() and led.is_consistent()):
        return None
    return c


def sigma_hat(c: ScConfig) -> GcdConfig:
    blocks = set()
    for p, seq in c.items():
        if seq:
            blocks.add(CoinBlock(p, 1, None))
            for k, x in enumerate(seq, start=1):
                blocks.add(CoinBlock(p, k + 1, x))
    view = View(frozenset(blocks))
    return GcdConfig(tuple((p, view) for p in c.agents))


# -- refinement harness ------------------------------------------------------

@dataclass
class Violation:
    step: int
    kind: str
    detail: str

    def to_json(self) -> dict:
        return {"step": self.step, "kind": self.kind, "detail": self.detail}


@dataclass
class RefinementReport:
    violations: list[Violation] = field(default_factory=list)
    sigma_steps: int = 0
    stutters: int = 0
    sigma_run: Run | None = None
    gcd_steps: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {"violations": [v.to_json() for v in self.violations],
                "sigma_steps": self.sigma_steps, "stutters": self.stutters}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def verify_refinement(run: Run, horizon: int | None = None, agent_progress: bool = False,
                      check_liveness: bool = True) -> RefinementReport:
    """Map a dissemination run to a coin run and check it.

    Only own-authored blocks change the mapped state, so the mapped run is
    tracked incrementally per agent.  The first step at which some agent's
    chain stops being a gap-free sequence ends the check.
    """
    agents = run.initial.agents
    rules = ScRules(agent_progress=agent_progress)
    sc0 = rules.initial(agents)
    for p in agents:
        r = sigma_local(run.initial[p], p)
        if not r.defined or r.value:
            raise ValueError("run must start from the initial configuration")
    srun = Run(rules, sc0)
    rep = RefinementReport(sigma_run=srun)
    own_max = {p: 0 for p in agents}
    current = sc0
    rounds = run.rounds()
    for i, st in enumerate(run.steps):
        b: CoinBlock = st.delta
        p = st.actor
        if b.author != p:
            rep.stutters += 1
            continue
        if b.index != own_max[p] + 1 or (b.index == 1) != (b.coin is None):
            rep.violations.append(Violation(i, "sigma-undefined",
                                            f"{p} added block {b.index} after {own_max[p]}"))
            break
        own_max[p] = b.index
        if b.index == 1:
            rep.stutters += 1
            continue
        v = sc_guard(current, p, b.coin)
        if not v:
            rep.violations.append(Violation(i, "unsafe", f"{v.reason}: {v.detail}"))
        current = current.append(p, b.coin)
        srun.append(p, b.coin, v.label or "", rounds[i], config=current)
        rep.gcd_steps.append(i)
        rep.sigma_steps += 1
    srun.end_round = rounds[-1] if rounds else 0
    if run.end_round is not None:
        srun.end_round = run.end_round
    if check_liveness and horizon is not None and not any(v.kind == "sigma-undefined" for v in rep.violations):
        for flag in check_live_bounded(srun, rules.liveness(), horizon):
            rep.violations.append(Violation(-1, "starvation", flag.describe()))
    return rep
