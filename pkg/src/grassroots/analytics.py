"""Economic measurements over coin holdings.

``nu[(p, q)]`` counts the q-coins held by p, with ``nu(p, p) = 0``.  All
ratios are exact :class:`fractions.Fraction` values, and ``UNDEFINED`` is
returned when a ratio's denominator is zero.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .mts import AgentId, BudgetExceeded
from .nft import Nft
from .sc import ClaimStatus, CoinLedger, claim_status, issuer, ledger_of

log = logging.getLogger(__name__)


class _Undefined:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "UNDEFINED"

    def __bool__(self):
        return False


UNDEFINED = _Undefined()

CURRENT_RATIO_CAVEAT = ("current ratio uses the displayed formula 1 - circulation/holdings, "
                        "which can be negative; the accompanying prose describes a different quotient")


def render(v) -> str:
    if v is UNDEFINED:
        return "UNDEFINED"
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    return str(v)


@dataclass
class HoldingsMatrix:
    agents: tuple
    nu: dict = field(default_factory=dict)
    t: int = 0
    own: dict = field(default_factory=dict)
    forked: list = field(default_factory=list)

    def __call__(self, p: AgentId, q: AgentId) -> int:
        if p == q:
            return 0
        return self.nu.get((p, q), 0)

    def held_by(self, p: AgentId) -> int:
        """Foreign coins held by p."""
        return sum(v for (h, _), v in self.nu.items() if h == p)

    def circulation(self, p: AgentId) -> int:
        """p-coins held by others."""
        return sum(v for (_, i), v in self.nu.items() if i == p)

    def total(self) -> int:
        return sum(self.nu.values())

    def with_counts(self, changes: dict) -> "HoldingsMatrix":
        nu = dict(self.nu)
        for k, d in changes.items():
            if k[0] == k[1]:
                continue
            v = nu.get(k, 0) + d
            if v < 0:
                raise ValueError(f"negative holding at {k}")
            if v:
                nu[k] = v
            else:
                nu.pop(k, None)
        return HoldingsMatrix(self.agents, nu, self.t, dict(self.own), list(self.forked))

    def to_json(self) -> dict:
        return {"t": self.t, "nu": [[p, q, v] for (p, q), v in sorted(self.nu.items())]}


def coin_tips(led: CoinLedger) -> tuple[dict, list]:
    """Holder per coin object from a ledger; forked objects are listed separately."""
    kids: dict[str, int] = {}
    for x in led:
        if not x.is_object:
            kids[x.payload.digest] = kids.get(x.payload.digest, 0) + 1
    tips: dict[str, list[Nft]] = {}
    objs: dict[str, Nft] = {}
    for x in led:
        o = x.object
        objs[o.digest] = o
        if kids.get(x.digest, 0) == 0:
            tips.setdefault(o.digest, []).append(x)
        elif kids[x.digest] > 1:
            tips.setdefault(o.digest, []).append(None)
    holders, forked = {}, []
    for d, ts in tips.items():
        if len(ts) == 1 and ts[0] is not None:
            holders[d] = ts[0]
        else:
            forked.append(d)
    return holders, sorted(forked)


def holdings(c, t: int = 0, agents: Iterable[AgentId] | None = None) -> HoldingsMatrix:
    led = c.world if hasattr(c, "world") else ledger_of(c)
    if agents is None:
        agents = c.agents if hasattr(c, "agents") else ()
    holders, forked = coin_tips(led)
    nu: dict = {}
    own: dict = {}
    for tip in holders.values():
        h, i = tip.recipient, issuer(tip)
        if h == i:
            own[h] = own.get(h, 0) + 1
        else:
            nu[(h, i)] = nu.get((h, i), 0) + 1
    return HoldingsMatrix(tuple(sorted(agents)), nu, t, own, forked)


def foreign_debt(m: HoldingsMatrix, p: AgentId) -> int:
    return m.circulation(p) - m.held_by(p)


def trade_balance(m_t: HoldingsMatrix, m_t2: HoldingsMatrix, p: AgentId) -> int:
    return -(foreign_debt(m_t2, p) - foreign_debt(m_t, p))


def delta(m: HoldingsMatrix, p: AgentId, q: AgentId) -> int:
    return max(m(p, q) - m(q, p), 0)


def cash_ratio(m: HoldingsMatrix, p: AgentId):
    circ = m.circulation(p)
    if circ == 0:
        return UNDEFINED
    issuers_holders = {h for (h, i) in m.nu if i == p}
    short = sum(delta(m, q, p) for q in issuers_holders)
    return 1 - Fraction(short, circ)


def current_ratio(m: HoldingsMatrix, p: AgentId):
    held = m.held_by(p)
    if held == 0:
        return UNDEFINED
    return 1 - Fraction(m.circulation(p), held)


def insolvent(m: HoldingsMatrix, p: AgentId) -> bool:
    return m.circulation(p) > 0 and m.held_by(p) == 0


def velocity(segment, p: AgentId):
    """p-coin transfers per unit of mean circulation over a segment of configs."""
    configs = list(segment.configs if hasattr(segment, "configs") else segment)
    if not configs:
        raise ValueError("segment must be nonempty")
    circ = [holdings(c).circulation(p) for c in configs]
    moves = 0
    prev = None
    for c in configs:
        led = c.world if hasattr(c, "world") else ledger_of(c)
        digests = {x.digest for x in led if not x.is_object and issuer(x) == p}
        if prev is not None:
            moves += len(digests - prev)
        prev = digests
    mean = Fraction(sum(circ), len(circ))
    if mean == 0:
        return UNDEFINED
    return Fraction(moves) / mean


# -- quick ratio ---------------------------------------------------------------

def _claims_from(nu: dict, p: AgentId):
    """Single redemptions p can initiate: give an r-coin to r, receive an s-coin r holds."""
    for (h, r), v in sorted(nu.items()):
        if h != p or v <= 0:
            continue
        for (h2, s), v2 in sorted(nu.items()):
            if h2 == r and v2 > 0 and s != r:
                yield r, s


def _redeem(nu: dict, p: AgentId, r: AgentId, s: AgentId) -> dict:
    out = dict(nu)

    def bump(k, d):
        if k[0] == k[1]:
            return
        v = out.get(k, 0) + d
        if v:
            out[k] = v
        else:
            out.pop(k, None)

    bump((p, r), -1)
    bump((r, s), -1)
    bump((p, s), +1)
    return out


def _cash(nu: dict, agents, p: AgentId):
    return cash_ratio(HoldingsMatrix(agents, nu), p)


def quick_ratio(m: HoldingsMatrix, p: AgentId, search_depth: int = 3, budget: int = 200_000,
                greedy: bool = True, greedy_limit: int = 64):
    """Best cash ratio reachable by redemption sequences p initiates; a lower bound.

    Exhaustive up to ``search_depth`` redemptions, then (optionally) extended
    by at most ``greedy_limit`` greedy redemptions that each strictly improve
    the ratio.
    """
    base = cash_ratio(m, p)
    if base is UNDEFINED or base == 1:
        return base
    best = base
    seen: dict = {}
    nodes = 0
    stack = [(m.nu, 0)]
    while stack:
        nu, d = stack.pop()
        key = tuple(sorted(nu.items()))
        if seen.get(key, -1) >= search_depth - d:
            continue
        seen[key] = search_depth - d
        nodes += 1
        if nodes > budget:
            raise BudgetExceeded(f"quick ratio search exceeded {budget} states")
        v = _cash(nu, m.agents, p)
        if v is not UNDEFINED and v > best:
            best = v
        if best == 1 or d == search_depth:
            continue
        for r, s in _claims_from(nu, p):
            stack.append((_redeem(nu, p, r, s), d + 1))
    if greedy and best < 1:
        nu = m.nu
        cur = base
        for _ in range(min(greedy_limit, sum(m.nu.values()))):
            options = []
            for r, s in _claims_from(nu, p):
                nxt = _redeem(nu, p, r, s)
                v = _cash(nxt, m.agents, p)
                if v is not UNDEFINED and v > cur:
                    options.append((v, r, s, nxt))
            if not options:
                break
            v, _, _, nu = max(options, key=lambda o: (o[0], o[1], o[2]))
            cur = v
        best = max(best, cur)
    return best


# -- liquidity paths ------------------------------------------------------------

@dataclass(frozen=True)
class LiquidityPath:
    agents: tuple
    coins: tuple

    def __len__(self) -> int:
        return len(self.coins)

    def steps(self) -> list[tuple[AgentId, Nft]]:
        return list(zip(self.agents, self.coins))

    def to_json(self) -> dict:
        return {"agents": list(self.agents), "coins": [x.digest for x in self.coins]}


def _holding_index(led: CoinLedger) -> dict[tuple[AgentId, AgentId], list[Nft]]:
    holders, _ = coin_tips(led)
    idx: dict = {}
    for tip in holders.values():
        h, i = tip.recipient, issuer(tip)
        if h != i:
            idx.setdefault((h, i), []).append(tip)
    for v in idx.values():
        v.sort(key=lambda x: x.digest)
    return idx


def one_liquidity_path(c, p: AgentId, q: AgentId) -> LiquidityPath | None:
    led = c.world if hasattr(c, "world") else ledger_of(c)
    idx = _holding_index(led)
    succ: dict[AgentId, list[AgentId]] = {}
    for (h, i) in idx:
        succ.setdefault(h, []).append(i)
    for v in succ.values():
        v.sort()
    prev = {p: None}
    frontier = deque([p])
    while frontier:
        a = frontier.popleft()
        if a == q and a != p:
            break
        for b in succ.get(a, []):
            if b not in prev:
                prev[b] = a
                frontier.append(b)
    if q not in prev or q == p:
        return None
    chain = [q]
    while prev[chain[-1]] is not None:
        chain.append(prev[chain[-1]])
    chain.reverse()
    coins = tuple(idx[(chain[i], chain[i + 1])][0] for i in range(len(chain) - 1))
    return LiquidityPath(tuple(chain), coins)


@dataclass(frozen=True)
class PlannedClaim:
    """One step of a chain redemption: ``claimant`` returns an obligor-coin to the obligor for ``requested``."""
    claimant: AgentId
    obligor: AgentId
    give: Nft
    requested: Nft

    def to_json(self) -> dict:
        return {"claimant": self.claimant, "obligor": self.obligor,
                "give_object": self.give.object.digest, "requested": self.requested.digest}


def chain_redemption_plan(c, path: LiquidityPath) -> list[PlannedClaim]:
    if path is None or len(path) <= 1:
        return []
    p = path.agents[0]
    plan = []
    for i in range(1, len(path)):
        plan.append(PlannedClaim(p, path.agents[i], path.coins[i - 1], path.coins[i]))
    return plan


# -- reports -------------------------------------------------------------------

@dataclass
class LiquidityReport:
    t: int
    foreign_debt: dict
    cash_ratio: dict
    quick_ratio: dict
    current_ratio: dict
    insolvent: set
    current_ratio_caveat: str = CURRENT_RATIO_CAVEAT

    def rows(self, round_no: int | None = None) -> list[dict]:
        r = self.t if round_no is None else round_no
        return [{"round": r, "agent": a, "fd": self.foreign_debt[a],
                 "cash_ratio": render(self.cash_ratio[a]),
                 "quick_ratio_lb": render(self.quick_ratio[a]),
                 "current_ratio": render(self.current_ratio[a]),
                 "insolvent": int(a in self.insolvent)} for a in sorted(self.foreign_debt)]


def liquidity_report(m: HoldingsMatrix, agents: Sequence[AgentId] | None = None,
                     search_depth: int = 3) -> LiquidityReport:
    agents = list(agents if agents is not None else m.agents)
    return LiquidityReport(
        m.t,
        {a: foreign_debt(m, a) for a in agents},
        {a: cash_ratio(m, a) for a in agents},
        {a: quick_ratio(m, a, search_depth) for a in agents},
        {a: current_ratio(m, a) for a in agents},
        {a for a in agents if insolvent(m, a)},
    )


class HoldingsTracker:
    """Holdings maintained step by step as coins are appended to a correct ledger.

    A fresh coin adds one to its issuer's own stock; a transfer moves one
    unit from the payload's recipient to the new recipient.  Used to
    cross-check :func:`holdings`, which recomputes from the ledger tips.
    """

    def __init__(self, agents: Iterable[AgentId] = ()):
        self.agents = tuple(sorted(agents))
        self.nu: dict = {}
        self.own: dict = {}

    def _bump(self, holder: AgentId, iss: AgentId, d: int) -> None:
        if holder == iss:
            self.own[holder] = self.own.get(holder, 0) + d
            return
        v = self.nu.get((holder, iss), 0) + d
        if v:
            self.nu[(holder, iss)] = v
        else:
            self.nu.pop((holder, iss), None)

    def add(self, y: Nft) -> None:
        i = issuer(y)
        if y.is_object:
            self._bump(y.sender, i, 1)
        else:
            self._bump(y.payload.recipient, i, -1)
            self._bump(y.recipient, i, 1)

    def matrix(self, t: int = 0) -> HoldingsMatrix:
        return HoldingsMatrix(self.agents, dict(self.nu), t, {k: v for k, v in self.own.items() if v}, [])


def reclaim_counts(c) -> dict[tuple[AgentId, AgentId], int]:
    """Claims filed on a coin whose previous claim was rejected, per (claimant, obligor).

    A rejected claim hands the claim coin back, and nothing stops the
    claimant from claiming it again; a growing count shows such a loop.
    """
    led = ledger_of(c)
    out: dict = {}
    for x in led.claims():
        earlier = [h for h in led.claims_on(x) if led.index(h) < led.index(x)]
        if earlier and claim_status(earlier[-1], led) is ClaimStatus.SETTLED_REJECTED:
            key = (x.sender, x.recipient)
            out[key] = out.get(key, 0) + 1
    return out
