"""Coin dissemination over a friendship graph.

Each agent's local state is a set of coin blocks ``(author, index, coin)``.
An agent extends its own chain with consecutively indexed blocks (the
initial block carries no coin), follows another agent by adding that
agent's initial block, and pulls blocks from friends when it already has
the preceding block of the same author.

Holding is decided on the acting agent's own view.  Claims, freezes and
settlements are decided on the world ledger: every coin appearing in an
own-authored block of some agent.
"""

from __future__ import annotations

import hashlib
import logging
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional

from .mts import AgentId, Config, LivenessPartition, Rules, Verdict
from .nft import Nft, Plain, Redeem, Signer
from .nft import make_object, make_transfer
from .sc import (CoinLedger, check_coin_step, coin_name, held_coins, issuer, open_recoveries,
                 respond, sc_order, unanswered_claims)

log = logging.getLogger(__name__)


class GammaUndefined(Exception):
    pass


@dataclass(frozen=True)
class CoinBlock:
    author: AgentId
    index: int
    coin: Optional[Nft] = None

    @cached_property
    def digest(self) -> str:
        h = hashlib.sha256()
        for part in (self.author.encode(), str(self.index).encode(),
                     (self.coin.digest if self.coin is not None else "").encode()):
            h.update(len(part).to_bytes(4, "big") + part)
        return h.hexdigest()

    @property
    def is_initial(self) -> bool:
        return self.index == 1 and self.coin is None

    def sort_key(self):
        return (self.author, self.index, self.coin.digest if self.coin is not None else "")

    def __repr__(self):
        return f"({self.author},{self.index},{self.coin.short if self.coin is not None else '⊥'})"

    def to_json(self) -> dict:
        return {"author": self.author, "index": self.index,
                "coin": self.coin.digest if self.coin is not None else None}


class View:
    """Immutable set of coin blocks with per-author index and a ledger of its coins."""

    __slots__ = ("blocks", "by_author", "ledger", "forked", "_tops")

    def __init__(self, blocks: frozenset = frozenset(), by_author: dict | None = None,
                 ledger: CoinLedger | None = None, forked: frozenset | None = None):
        self.blocks = blocks
        if by_author is None:
            by_author = {}
            for b in sorted(blocks, key=CoinBlock.sort_key):
                by_author.setdefault(b.author, {}).setdefault(b.index, ())
                by_author[b.author][b.index] += (b,)
        self.by_author = by_author
        if forked is None:
            forked = frozenset(a for a, inner in by_author.items() if any(len(t) > 1 for t in inner.values()))
        # authors with two blocks at the same index somewhere in this view
        self.forked = forked
        if ledger is None:
            ledger = CoinLedger.build(b.coin for b in blocks if b.coin is not None)
        self.ledger = ledger
        self._tops: dict = {}

    def __eq__(self, other):
        return isinstance(other, View) and self.blocks == other.blocks

    def __hash__(self):
        return hash(self.blocks)

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    def __contains__(self, b) -> bool:
        return b in self.blocks

    def __repr__(self):
        return "View{" + ", ".join(map(repr, sorted(self.blocks, key=CoinBlock.sort_key))) + "}"

    def add(self, b: CoinBlock) -> "View":
        if b in self.blocks:
            return self
        by_author = dict(self.by_author)
        inner = dict(by_author.get(b.author, {}))
        inner[b.index] = inner.get(b.index, ()) + (b,)
        by_author[b.author] = inner
        led = self.ledger.add(b.coin) if b.coin is not None else self.ledger
        forked = self.forked | {b.author} if len(inner[b.index]) > 1 else self.forked
        return View(self.blocks | {b}, by_author, led, forked)

    def follows(self, author: AgentId) -> bool:
        return author in self.by_author

    def authors(self):
        return self.by_author.keys()

    def has_index(self, author: AgentId, i: int) -> bool:
        return i in self.by_author.get(author, ())

    def max_index(self, author: AgentId) -> int:
        top = self._tops.get(author)
        if top is None:
            inner = self.by_author.get(author)
            top = self._tops[author] = max(inner) if inner else 0
        return top

    def author_blocks(self, author: AgentId) -> list[CoinBlock]:
        inner = self.by_author.get(author, {})
        return [b for i in sorted(inner) for b in inner[i]]


EMPTY_VIEW = View()


def _world_of(entries) -> CoinLedger:
    coins = [b.coin for p, v in entries for b in v.blocks if b.author == p and b.coin is not None]
    return CoinLedger.build(coins)


@dataclass(frozen=True)
class GcdConfig(Config):
    world: CoinLedger = field(default=None, compare=False, repr=False, hash=False)  # type: ignore[assignment]

    def __post_init__(self):
        super().__post_init__()
        if self.world is None:
            object.__setattr__(self, "world", _world_of(self.entries))

    @classmethod
    def of(cls, views: dict) -> "GcdConfig":
        return cls(tuple(sorted((p, v if isinstance(v, View) else View(frozenset(v))) for p, v in views.items())))

    def replace(self, agent, state):
        i = self._index[agent]
        return GcdConfig(self.entries[:i] + ((agent, state),) + self.entries[i + 1:])

    def add_block(self, agent: AgentId, b: CoinBlock) -> "GcdConfig":
        i = self._index[agent]
        view = self.entries[i][1]
        world = self.world
        if b.author == agent and b.coin is not None:
            world = world.add(b.coin)
        entries = self.entries[:i] + ((agent, view.add(b)),) + self.entries[i + 1:]
        return GcdConfig(entries, world=world)


def follows(c: GcdConfig, p: AgentId, q: AgentId) -> bool:
    return c[p].follows(q)


def friends(c: GcdConfig, p: AgentId, q: AgentId) -> bool:
    return p != q and c[p].follows(q) and c[q].follows(p)


def friends_of(c: GcdConfig, p: AgentId) -> list[AgentId]:
    view = c[p]
    return [q for q in c.agents if q != p and view.follows(q) and c[q].follows(p)]


def friendship_edges(c: GcdConfig) -> set[tuple[AgentId, AgentId]]:
    return {(p, q) for p in c.agents for q in c.agents if p < q and friends(c, p, q)}


def pull_sources(c: GcdConfig, p: AgentId, b: CoinBlock) -> list[AgentId]:
    return [q for q in friends_of(c, p) if b in c[q]]


def gcd_guard(c: GcdConfig, p: AgentId, b: CoinBlock, signer: Signer | None = None) -> Verdict:
    view = c[p]
    if not isinstance(b, CoinBlock):
        return Verdict.reject("BadBlock", "not a coin block")
    if b in view:
        return Verdict.reject("AlreadyKnown")
    if b.author == p:
        expect = view.max_index(p) + 1
        if b.index != expect:
            return Verdict.reject("IndexGap", f"expected index {expect}")
        if b.index == 1:
            if b.coin is not None:
                return Verdict.reject("BadInitial", "initial block carries no coin")
            return Verdict.admit("create-initial")
        if b.coin is None:
            return Verdict.reject("BadInitial", "only index 1 may be empty")
        y = b.coin
        if not y.is_object:
            if y.sender != p or not friends(c, p, y.recipient):
                return Verdict.reject("NotFriends", f"{p} and {y.recipient} are not friends")
            v = check_coin_step(view.ledger, c.world, p, y, signer)
        else:
            v = check_coin_step(view.ledger, c.world, p, y, signer, fresh_index=b.index)
        if not v:
            return v
        return Verdict.admit("create-" + (v.label or "coin").removeprefix("create-"))
    if b.index == 1:
        if b.coin is not None:
            return Verdict.reject("BadInitial", "initial block carries no coin")
        if b.author not in c:
            return Verdict.reject("UnknownSource", f"{b.author} is not an agent")
        return Verdict.admit("follow")
    if not view.has_index(b.author, b.index - 1):
        return Verdict.reject("MissingPredecessor", f"lacks ({b.author},{b.index - 1})")
    if pull_sources(c, p, b):
        return Verdict.admit("sent")
    if any(b in v for _, v in c.items()):
        return Verdict.reject("NotFriends", "no friend knows the block")
    return Verdict.reject("UnknownSource", "no agent knows the block")


def reachable_blocks(c: GcdConfig, p: AgentId, q: AgentId, correct: Iterable[AgentId] | None = None) -> set[CoinBlock]:
    """q-blocks known on friendship paths from p whose members are correct and follow q."""
    ok = set(c.agents if correct is None else correct)
    if p not in ok or not follows(c, p, q):
        return set()
    seen = {p}
    frontier = deque([p])
    out: set[CoinBlock] = set()
    while frontier:
        a = frontier.popleft()
        out.update(c[a].author_blocks(q))
        for f in friends_of(c, a):
            if f not in seen and f in ok and follows(c, f, q):
                seen.add(f)
                frontier.append(f)
    return out


def gcd_order(c: GcdConfig, c2: GcdConfig) -> bool:
    from .sigma import gamma
    if c.agents != c2.agents:
        return False
    for p in c.agents:
        g1 = gamma(c[p].blocks, c.agents)
        g2 = gamma(c2[p].blocks, c.agents)
        if g1 is None or g2 is None:
            raise GammaUndefined(f"coin view of {p} is undefined")
        if not sc_order(g1, g2):
            return False
    return True


def blocks_order(c: GcdConfig, c2: GcdConfig) -> bool:
    """Per-agent set inclusion."""
    return c.agents == c2.agents and all(c[p].blocks <= c2[p].blocks for p in c.agents)


def _pullable_of(c: GcdConfig, p: AgentId, a: AgentId, fr, found: dict) -> None:
    """Blocks by author ``a`` that ``p`` could pull from one of ``fr``, added to ``found``."""
    view = c[p]
    nxt = view.max_index(a) + 1
    for f in fr:
        fv = c[f]
        forked = a in fv.forked
        if not forked and fv.max_index(a) < nxt:
            continue
        inner = fv.by_author.get(a, {})
        span = range(2, nxt + 1) if forked else (nxt,)
        for i in span:
            for b in inner.get(i, ()):
                if b not in view and view.has_index(a, i - 1) and b not in found:
                    found[b] = f


def pullable(c: GcdConfig, p: AgentId) -> list[tuple[CoinBlock, AgentId]]:
    """Blocks ``p`` could pull now, each with its first friend source, in canonical order."""
    fr = friends_of(c, p)
    found: dict[CoinBlock, AgentId] = {}
    for a in c[p].authors():
        if a != p:
            _pullable_of(c, p, a, fr, found)
    return sorted(found.items(), key=lambda kv: kv[0].sort_key())


def pending_obligations(c: GcdConfig, p: AgentId) -> list[Nft]:
    """Claims and recovery demands addressed to ``p`` that ``p`` knows and has not answered."""
    view = c[p]
    out = [cl for cl in unanswered_claims(c.world) if cl.recipient == p and cl in view.ledger]
    out += [r for r in open_recoveries(c.world) if r.recipient == p and r in view.ledger]
    return sorted(out, key=lambda x: x.digest)


def respond_blocks(c: GcdConfig, p: AgentId, claim: Nft, signer: Signer | None = None) -> list[CoinBlock]:
    """Blocks by which a correct ``p`` answers ``claim``, indexed consecutively."""
    i = c[p].max_index(p) + 1
    ys = respond(claim, c.world, c[p].ledger, signer, fresh_index=i)
    return [CoinBlock(p, i + k, y) for k, y in enumerate(ys)]


# -- rules -------------------------------------------------------------------

class GcdRules(Rules):
    initial_state = EMPTY_VIEW
    # payload alphabet used by exhaustive enumeration
    enum_coins = (2, 3)

    def __init__(self, signer: Signer | None = None, agent_progress: bool = False):
        self.signer = signer
        self.agent_progress = agent_progress

    def initial(self, agents):
        return GcdConfig.initial(agents, EMPTY_VIEW)

    def extend(self, state, delta):
        return state.add(delta)

    def extend_config(self, config, actor, delta):
        if not isinstance(config, GcdConfig):
            config = GcdConfig(config.entries)
        return config.add_block(actor, delta)

    def delta(self, before, after):
        new = after.blocks - before.blocks
        if len(new) == 1 and before.blocks <= after.blocks:
            return next(iter(new))
        return None

    def guard(self, config, actor, delta):
        return gcd_guard(config, actor, delta, self.signer)

    def order(self, a, b):
        return blocks_order(a, b)

    def candidates(self, lower, upper):
        for p in lower.agents:
            for b in sorted(upper[p].blocks - lower[p].blocks, key=CoinBlock.sort_key):
                yield p, b

    def moves(self, c, p):
        view = c[p]
        mx = view.max_index(p)
        if mx == 0:
            yield CoinBlock(p, 1, None)
        else:
            i = mx + 1
            if i in self.enum_coins:
                yield CoinBlock(p, i, make_object(p, coin_name(i), self.signer))
            for x in held_coins(view.ledger, p):
                for q in friends_of(c, p):
                    yield CoinBlock(p, i, make_transfer(x, Plain("t"), p, q, self.signer))
                if issuer(x) != p and friends(c, p, issuer(x)):
                    yield CoinBlock(p, i, make_transfer(x, Redeem(None), p, issuer(x), self.signer))
            for cl in pending_obligations(c, p):
                ys = respond(cl, c.world, view.ledger, self.signer, fresh_index=i)
                if len(ys) == 1:
                    yield CoinBlock(p, i, ys[0])
        for a in c.agents:
            if a != p and not view.follows(a):
                yield CoinBlock(a, 1, None)
        for b, _ in pullable(c, p):
            yield b

    def liveness(self) -> LivenessPartition:
        return gcd_liveness(self.agent_progress)


def gcd_liveness(agent_progress: bool = False) -> LivenessPartition:
    def classify(c, actor, b):
        if b.author == actor:
            return [("create", actor)] if agent_progress else []
        if b.index == 1:
            return []
        return [("recv", actor, b.digest)]

    # Pullable blocks split by author, and a step that adds a non-follow
    # block by author a only changes the author-a entries of the receiver and
    # of its friends.  Successive configs of a run are mostly one step apart,
    # so the enabled set is maintained incrementally against the previous one.
    state: dict = {"prev": None, "friends": {}, "pulls": {}}

    def refresh(c, p, a):
        found: dict = {}
        if a != p and c[p].follows(a):
            _pullable_of(c, p, a, state["friends"][p], found)
        state["pulls"][(p, a)] = [b.digest for b in found]

    def rebuild(c):
        state["friends"] = {p: friends_of(c, p) for p in c.agents}
        state["pulls"] = {}
        for p in c.agents:
            for a in c[p].authors():
                refresh(c, p, a)

    def update(c):
        prev = state["prev"]
        if prev is None or prev.agents != c.agents:
            rebuild(c)
            return
        touched = []
        for x in c.agents:
            if c[x] is prev[x]:
                continue
            new = c[x].blocks - prev[x].blocks
            if any(b.index == 1 for b in new) or len(prev[x].blocks - c[x].blocks):
                rebuild(c)
                return
            touched.extend((x, b.author) for b in new)
        for x, a in set(touched):
            refresh(c, x, a)
            for q in state["friends"][x]:
                refresh(c, q, a)

    def enabled(c):
        update(c)
        state["prev"] = c
        keys = []
        for p in c.agents:
            if agent_progress:
                keys.append(("create", p))
        for (p, _a), ds in state["pulls"].items():
            keys.extend(("recv", p, d) for d in ds)
        return keys

    return LivenessPartition(classify, enabled)


# -- the all-to-all toy protocol --------------------------------------------

class AllToAllRules(Rules):
    """Toy dissemination where block i>1 needs every agent's block i-1.

    Local states are frozensets of (author, index).  Any agent may receive
    any block known to any other agent.  Its guard depends on the whole
    agent set, which is what breaks the grassroots property.
    """

    initial_state = frozenset()

    def __init__(self, agents: Iterable[AgentId]):
        self.agents = tuple(sorted(agents))

    def extend(self, state, delta):
        return state | {delta}

    def delta(self, before, after):
        new = after - before
        return next(iter(new)) if len(new) == 1 and before <= after else None

    def guard(self, c, p, b):
        s = c[p]
        if b in s:
            return Verdict.reject("AlreadyKnown")
        a, i = b
        if a == p:
            mine = [j for (x, j) in s if x == p]
            if i != max(mine, default=0) + 1:
                return Verdict.reject("IndexGap")
            if i > 1 and not all((q, i - 1) in s for q in self.agents):
                return Verdict.reject("WaitingForAll")
            return Verdict.admit("create")
        if any(b in c[q] for q in self.agents if q != p):
            return Verdict.admit("receive")
        return Verdict.reject("UnknownSource")

    def moves(self, c, p):
        s = c[p]
        mine = [j for (x, j) in s if x == p]
        yield (p, max(mine, default=0) + 1)
        known = set()
        for q in self.agents:
            if q != p:
                known |= c[q]
        for b in sorted(known - s):
            yield b
