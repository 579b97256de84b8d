"""Grassroots coins: coin NFTs, redemption claims, settlement and the freeze rule.

A coin is an NFT whose object payload has the form ``coin_<i>``; its issuer
is the creator of the object.  A redemption claim is a transfer of a q-coin
back to q with ``Redeem`` metadata.  The issuer answers with a transfer
carrying ``Settle(claim)`` metadata.

All predicates work over a :class:`CoinLedger`, an append-only index of the
coins known in a configuration.  Settlement outcomes are evaluated against
the ledger as it stood just before the settling transfer was added, so a
claim's status never flips once settled.
"""

from __future__ import annotations

import bisect
import enum
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .mts import AgentId, Config, LivenessPartition, Rules, Verdict
from .nft import (DoublespendEvidence, Evidence, Nft, Plain, Redeem, Settle, Signer,
                  check_evidence, find_doublespend, first_divergence, history,
                  make_object, make_transfer, verify_signature)

log = logging.getLogger(__name__)

COIN_RE = re.compile(r"^coin_?([1-9][0-9]*)$")


def coin_index(s) -> int | None:
    if not isinstance(s, str):
        return None
    m = COIN_RE.match(s)
    return int(m.group(1)) if m else None


def coin_name(i: int) -> str:
    return f"coin_{i}"


def is_coin(x: Nft) -> bool:
    return coin_index(x.object.payload) is not None


def issuer(x: Nft) -> AgentId:
    return x.object.sender


class ScError(Exception):
    pass


class EvidenceInvalid(ScError):
    pass


class CulpritNotUpstream(ScError):
    pass


class Outcome(enum.Enum):
    ACCEPTED = "Accepted"
    REJECTED = "Rejected"
    NOT_SETTLING = "NotSettling"


class ClaimStatus(enum.Enum):
    VALID_OUTSTANDING = "Valid-Outstanding"
    INVALID = "Invalid"
    SETTLED_ACCEPTED = "Settled-Accepted"
    SETTLED_REJECTED = "Settled-Rejected"


# -- ledger ------------------------------------------------------------------

class _Store:
    __slots__ = ("items", "pos", "children", "by_object", "settlements", "claims_against",
                 "claims_on_object", "names", "claims", "recoveries", "outcomes", "missing")

    def __init__(self):
        self.items: list[Nft] = []
        self.pos: dict[str, int] = {}
        self.children: dict[str, list[int]] = {}
        self.by_object: dict[str, list[int]] = {}
        self.settlements: dict[str, list[int]] = {}
        self.claims_against: dict[str, list[int]] = {}
        self.claims_on_object: dict[str, list[int]] = {}
        self.names: dict[tuple[str, str], int] = {}
        self.claims: list[int] = []
        self.recoveries: list[int] = []
        self.outcomes: dict[int, Outcome] = {}
        self.missing: dict[str, int] = {}


def _cut(lst: list[int] | None, n: int) -> list[int]:
    if not lst:
        return []
    return lst[:bisect.bisect_left(lst, n)]


class CoinLedger:
    """Append-only index of coin NFTs.

    Snapshots share one store; a snapshot sees only the first ``n`` items.
    Appending to a snapshot that is not the newest copies the store first,
    so older snapshots stay valid.
    """

    __slots__ = ("_s", "n")

    def __init__(self, store: _Store | None = None, n: int = 0):
        self._s = store or _Store()
        self.n = n

    @classmethod
    def build(cls, xs: Iterable[Nft]) -> "CoinLedger":
        led = cls()
        for x in causal_order(xs):
            led = led.add(x)
        return led

    def __len__(self) -> int:
        return self.n

    def __iter__(self):
        return iter(self._s.items[:self.n])

    def __contains__(self, x) -> bool:
        d = x.digest if isinstance(x, Nft) else x
        i = self._s.pos.get(d)
        return i is not None and i < self.n

    def index(self, x) -> int | None:
        d = x.digest if isinstance(x, Nft) else x
        i = self._s.pos.get(d)
        return i if i is not None and i < self.n else None

    def get(self, digest: str) -> Nft | None:
        i = self.index(digest)
        return None if i is None else self._s.items[i]

    def before(self, x) -> "CoinLedger":
        i = self.index(x)
        return self if i is None else CoinLedger(self._s, i)

    def _items(self, idx: list[int]) -> list[Nft]:
        its = self._s.items
        return [its[i] for i in idx]

    def has_children(self, x: Nft) -> bool:
        kids = self._s.children.get(x.digest)
        return bool(kids) and kids[0] < self.n

    def children(self, x: Nft) -> list[Nft]:
        return self._items(_cut(self._s.children.get(x.digest), self.n))

    def items_of(self, obj: Nft) -> list[Nft]:
        return self._items(_cut(self._s.by_object.get(obj.object.digest), self.n))

    def tips(self, obj: Nft) -> list[Nft]:
        return [x for x in self.items_of(obj) if not self.has_children(x)]

    def settlements_of(self, claim: Nft) -> list[Nft]:
        return self._items(_cut(self._s.settlements.get(claim.digest), self.n))

    def claims_against(self, obj: Nft) -> list[Nft]:
        """Claims whose requested coin belongs to ``obj``."""
        return self._items(_cut(self._s.claims_against.get(obj.object.digest), self.n))

    def claims_on(self, obj: Nft) -> list[Nft]:
        """Claims whose claim coin belongs to ``obj``."""
        return self._items(_cut(self._s.claims_on_object.get(obj.object.digest), self.n))

    def claims(self) -> list[Nft]:
        return self._items(_cut(self._s.claims, self.n))

    def recoveries(self) -> list[Nft]:
        return self._items(_cut(self._s.recoveries, self.n))

    def has_name(self, agent: AgentId, name: str) -> bool:
        i = self._s.names.get((agent, name))
        return i is not None and i < self.n

    def creations(self, agent: AgentId) -> int:
        return sum(1 for x in self if x.is_object and x.sender == agent)

    def outcome(self, settlement: Nft) -> Outcome | None:
        i = self.index(settlement)
        return None if i is None else self._s.outcomes.get(i)

    def is_complete(self) -> bool:
        return not any(i < self.n for i in self._s.missing.values()) and all(
            x.payload.digest in self for x in self if not x.is_object)

    def is_consistent(self) -> bool:
        for d, kids in self._s.children.items():
            if len(_cut(kids, self.n)) > 1 and d in self:
                return False
        if self.is_complete():
            return True
        return find_doublespend(self) is None

    def add(self, x: Nft) -> "CoinLedger":
        if x in self:
            return self
        s = self._s
        if len(s.items) != self.n:
            s = _Store()
            fresh = CoinLedger(s, 0)
            for y in self._s.items[:self.n]:
                fresh = fresh._append(y)
            return fresh._append(x)
        return self._append(x)

    def _append(self, x: Nft) -> "CoinLedger":
        s = self._s
        i = len(s.items)
        outcome = None
        meta = x.metadata
        if isinstance(meta, Settle):
            claim = self.get(meta.claim)
            if claim is not None:
                outcome = _settles_on(x, claim, self)
        s.items.append(x)
        s.pos[x.digest] = i
        obj = x.object.digest
        s.by_object.setdefault(obj, []).append(i)
        if not x.is_object:
            s.children.setdefault(x.payload.digest, []).append(i)
        else:
            s.names.setdefault((x.sender, x.payload), i)
        if isinstance(meta, Redeem) and not x.is_object:
            s.claims.append(i)
            s.claims_on_object.setdefault(obj, []).append(i)
            if meta.requested is not None:
                req = self.get(meta.requested)
                if req is not None:
                    s.claims_against.setdefault(req.object.digest, []).append(i)
        elif isinstance(meta, Evidence) and not x.is_object:
            s.recoveries.append(i)
        elif isinstance(meta, Settle):
            s.settlements.setdefault(meta.claim, []).append(i)
            if outcome is not None:
                s.outcomes[i] = outcome
        return CoinLedger(s, i + 1)


def causal_order(xs: Iterable[Nft]) -> list[Nft]:
    """Order NFTs so every payload (and every referenced claim) precedes its users."""
    pending = {x.digest: x for x in xs}
    out: list[Nft] = []
    done: set[str] = set()

    def deps(x: Nft) -> list[str]:
        d = []
        if not x.is_object:
            d.append(x.payload.digest)
        m = x.metadata
        if isinstance(m, Settle):
            d.append(m.claim)
        elif isinstance(m, Redeem) and m.requested:
            d.append(m.requested)
        return [e for e in d if e in pending]

    def visit(x: Nft, stack: set):
        if x.digest in done:
            return
        stack.add(x.digest)
        for d in deps(x):
            if d not in stack:
                visit(pending[d], stack)
        stack.discard(x.digest)
        done.add(x.digest)
        out.append(x)

    for d in sorted(pending, key=lambda d: (pending[d].depth, d)):
        visit(pending[d], set())
    return out


def ledger_of(c) -> CoinLedger:
    if isinstance(c, CoinLedger):
        return c
    led = getattr(c, "ledger", None)
    if led is not None:
        return led
    if isinstance(c, Config):
        return CoinLedger.build(x for _, seq in c.items() for x in seq)
    return CoinLedger.build(c)


# -- claims ------------------------------------------------------------------

@dataclass(frozen=True)
class RedemptionClaim:
    nft: Nft
    requested: Optional[Nft] = None

    @classmethod
    def of(cls, nft: Nft, c=None) -> "RedemptionClaim":
        if not isinstance(nft.metadata, Redeem) or nft.is_object:
            raise ValueError(f"{nft!r} is not a redemption claim")
        req = None
        if nft.metadata.requested is not None and c is not None:
            req = ledger_of(c).get(nft.metadata.requested)
        return cls(nft, req)

    @property
    def digest(self) -> str:
        return self.nft.digest

    @property
    def claim_coin(self) -> Nft:
        return self.nft

    @property
    def claimant(self) -> AgentId:
        return self.nft.sender

    @property
    def obligor(self) -> AgentId:
        return self.nft.recipient

    @property
    def degenerate(self) -> bool:
        return self.claimant == self.obligor

    def to_json(self) -> dict:
        return {"claim": self.digest, "claimant": self.claimant, "obligor": self.obligor,
                "requested": self.nft.metadata.requested, "degenerate": self.degenerate}


def _as_claim_nft(claim) -> Nft:
    return claim.nft if isinstance(claim, RedemptionClaim) else claim


def _holds(led: CoinLedger, obj: Nft, agent: AgentId) -> bool:
    return any(t.recipient == agent for t in led.tips(obj))


def _settles_on(y: Nft, claim: Nft, led: CoinLedger) -> Outcome:
    """Outcome of ``y`` against ``claim`` with ``led`` the ledger before ``y``."""
    meta = y.metadata
    if not isinstance(meta, Settle) or meta.claim != claim.digest or y.is_object:
        return Outcome.NOT_SETTLING
    if y.sender != claim.recipient or y.recipient != claim.sender:
        return Outcome.NOT_SETTLING
    cm = claim.metadata
    x = y.payload
    if isinstance(cm, Evidence):
        return Outcome.ACCEPTED if x != claim else Outcome.REJECTED
    if not isinstance(cm, Redeem):
        return Outcome.NOT_SETTLING
    q = claim.recipient
    if x == claim and not claim_valid(claim, led):
        # an invalid claim is answered by handing the claim coin back
        return Outcome.REJECTED
    if cm.requested is not None:
        req = led.get(cm.requested)
        if req is None:
            return Outcome.REJECTED if x == claim else Outcome.NOT_SETTLING
        if x.object == req.object and x.recipient == q and not led.has_children(x):
            return Outcome.ACCEPTED
        if x == claim and not _acceptable_now(claim, led):
            return Outcome.REJECTED
    else:
        if x.is_object and x.sender == q and is_coin(x) and not led.has_children(x):
            return Outcome.ACCEPTED
    if x == claim and _contested(claim, led):
        return Outcome.REJECTED
    return Outcome.NOT_SETTLING


def _awaiting_answer(x: Nft, led: CoinLedger) -> bool:
    return claim_status(x, led) in (ClaimStatus.VALID_OUTSTANDING, ClaimStatus.INVALID)


def _acceptable_now(claim: Nft, led: CoinLedger) -> bool:
    """The obligor holds a tip of the requested coin that is not locked as another pending claim."""
    req = led.get(claim.metadata.requested)
    for t in led.tips(req):
        if t.recipient != claim.recipient:
            continue
        if t != claim and isinstance(t.metadata, Redeem) and _awaiting_answer(t, led):
            continue
        return True
    return False


def _contested(claim: Nft, led: CoinLedger) -> bool:
    """The claim coin's object is forked or was already redeemed on another branch."""
    if len(led.tips(claim)) > 1 or any(len(led.children(z)) > 1 for z in led.items_of(claim)):
        return True
    return _other_branch_redeemed(claim, led)


def _other_branch_redeemed(claim: Nft, led: CoinLedger) -> bool:
    anc = {h.digest for h in history(claim)}
    for other in led.claims_on(claim):
        if other == claim or other.digest in anc:
            continue
        if claim.digest in {h.digest for h in history(other)}:
            continue
        if any(led.outcome(s) is Outcome.ACCEPTED for s in led.settlements_of(other)):
            return True
    return False


def settles(transfer: Nft, claim, c) -> Outcome:
    led = ledger_of(c)
    claim = _as_claim_nft(claim)
    if transfer in led:
        led = led.before(transfer)
    return _settles_on(transfer, claim, led)


def claim_valid(claim, c) -> bool:
    led = ledger_of(c)
    x = _as_claim_nft(claim)
    if not isinstance(x.metadata, Redeem) or x.is_object:
        return False
    coin = x.payload
    if coin.recipient != x.sender:
        return False
    if any(ch != x for ch in led.children(coin)):
        return False
    req_d = x.metadata.requested
    if req_d is not None:
        req = led.get(req_d)
        if req is None:
            return False
        for other in led.claims_against(req):
            if other == x:
                continue
            if any(led.outcome(s) is Outcome.ACCEPTED for s in led.settlements_of(other)):
                return False
    return True


def claim_status(claim, c) -> ClaimStatus:
    led = ledger_of(c)
    x = _as_claim_nft(claim)
    for s in led.settlements_of(x):
        o = led.outcome(s)
        if o is Outcome.ACCEPTED:
            return ClaimStatus.SETTLED_ACCEPTED
        if o is Outcome.REJECTED:
            return ClaimStatus.SETTLED_REJECTED
    return ClaimStatus.VALID_OUTSTANDING if claim_valid(x, led) else ClaimStatus.INVALID


def outstanding_claims(c) -> list[RedemptionClaim]:
    led = ledger_of(c)
    return [RedemptionClaim.of(x, led) for x in led.claims()
            if claim_status(x, led) is ClaimStatus.VALID_OUTSTANDING]


def unanswered_claims(c) -> list[Nft]:
    """Claims, valid or not, that have no settlement yet; a correct obligor answers all of them."""
    led = ledger_of(c)
    return [x for x in led.claims()
            if claim_status(x, led) in (ClaimStatus.VALID_OUTSTANDING, ClaimStatus.INVALID)]


def open_recoveries(c) -> list[Nft]:
    led = ledger_of(c)
    return [r for r in led.recoveries()
            if not any(led.outcome(s) in (Outcome.ACCEPTED, Outcome.REJECTED) for s in led.settlements_of(r))]


@dataclass
class ClaimReport:
    claim: RedemptionClaim
    status: ClaimStatus
    degenerate: bool

    def to_json(self) -> dict:
        d = self.claim.to_json()
        d["status"] = self.status.value
        return d


def claim_reports(c) -> list[ClaimReport]:
    led = ledger_of(c)
    out = []
    for x in led.claims():
        rc = RedemptionClaim.of(x, led)
        out.append(ClaimReport(rc, claim_status(x, led), rc.degenerate))
    return out


# -- guard -------------------------------------------------------------------

def check_coin_step(local: CoinLedger, world: CoinLedger, actor: AgentId, y: Nft,
                    signer: Signer | None = None, fresh_index: int | None = None) -> Verdict:
    """Shared coin rules.

    Holding is decided on ``local`` (what the actor knows); freeze, claim and
    settlement conditions on ``world``.  ``fresh_index`` pins the index a
    fresh coin must carry, when the carrier layer dictates one.
    """
    if not isinstance(y, Nft) or not y.well_formed() or y.sender != actor:
        return Verdict.reject("BadObjectShape", "malformed or not sent by the actor")
    if not is_coin(y):
        return Verdict.reject("NotCoin")
    if signer is not None and not verify_signature(y, signer):
        return Verdict.reject("BadSignature")
    if y in local or y in world:
        return Verdict.reject("Duplicate")
    if y.is_object:
        i = coin_index(y.payload)
        if fresh_index is not None and i != fresh_index:
            return Verdict.reject("BadFreshCoin", f"expected coin index {fresh_index}")
        if world.has_name(actor, y.payload) or local.has_name(actor, y.payload):
            return Verdict.reject("BadFreshCoin", f"{y.payload} already issued")
        return Verdict.admit("create-coin")
    x = y.payload
    if x not in local:
        return Verdict.reject("NotHolder", "payload unknown")
    if x.recipient != actor or local.has_children(x):
        return Verdict.reject("NotHolder", "payload is not the actor's latest coin")
    if x in world and world.has_children(x):
        return Verdict.reject("NotHolder", "payload already transferred")
    meta = y.metadata
    label = "transfer"
    settled_claim = None
    outcome = None
    if isinstance(meta, Redeem):
        if y.recipient != issuer(x):
            return Verdict.reject("BadClaim", "claims go to the coin's issuer")
        if meta.requested is not None and world.get(meta.requested) is None:
            return Verdict.reject("BadClaim", "requested coin unknown")
        label = "claim"
    elif isinstance(meta, Evidence):
        v = _check_recovery(world, y)
        if not v:
            return v
        label = "recovery"
    elif isinstance(meta, Settle):
        claim = world.get(meta.claim)
        if claim is None or not isinstance(claim.metadata, (Redeem, Evidence)):
            return Verdict.reject("BadSettlement", "no such claim")
        if claim.recipient != actor or y.recipient != claim.sender:
            return Verdict.reject("BadSettlement", "parties do not match the claim")
        if any(world.outcome(s) in (Outcome.ACCEPTED, Outcome.REJECTED) for s in world.settlements_of(claim)):
            return Verdict.reject("BadSettlement", "claim already settled")
        outcome = _settles_on(y, claim, world)
        if outcome is Outcome.NOT_SETTLING:
            return Verdict.reject("BadSettlement", "transfer does not settle the claim")
        if isinstance(claim.metadata, Redeem) and outcome is Outcome.ACCEPTED:
            if not claim_valid(claim, world):
                return Verdict.reject("BadSettlement", "claim is not valid")
            if _other_branch_redeemed(claim, world):
                return Verdict.reject("DoubleRedemption", "coin already redeemed on another branch")
            req = claim.metadata.requested
            if req is not None:
                rivals = [o for o in world.claims_against(world.get(req))
                          if o != claim and o.recipient == claim.recipient
                          and claim_status(o, world) is ClaimStatus.VALID_OUTSTANDING
                          and _acceptable_now(o, world)]
                if any(o.digest < claim.digest for o in rivals):
                    return Verdict.reject("ClaimOrder", "a lower-hash claim on the coin is pending")
        settled_claim = claim
        label = "settle-accept" if outcome is Outcome.ACCEPTED else "settle-reject"
    # freeze rule: a claimed coin moves only as the settlement of that claim
    # only claims addressed to the mover bind it, and only while the mover could
    # accept them; a requested coin locked as another pending claim is not available
    against = [cl for cl in world.claims_against(x) if cl.recipient == actor and _acceptable_now(cl, world)]
    exempt = outcome is Outcome.ACCEPTED and settled_claim in against
    if not exempt:
        for cl in against:
            if claim_status(cl, world) is ClaimStatus.VALID_OUTSTANDING:
                return Verdict.reject("CoinFrozen", cl.digest)
    # a claim coin awaiting an answer, valid or not, moves only as that answer
    if isinstance(x.metadata, Redeem) and settled_claim != x and _awaiting_answer(x, world):
        return Verdict.reject("CoinFrozen", f"claim {x.short} awaits settlement")
    if isinstance(x.metadata, Evidence) and settled_claim != x and x in open_recoveries(world):
        return Verdict.reject("CoinFrozen", f"recovery {x.short} awaits settlement")
    return Verdict.admit(label)


def _check_recovery(world: CoinLedger, y: Nft) -> Verdict:
    meta = y.metadata
    a, b = world.get(meta.fork_a), world.get(meta.fork_b)
    if a is None or b is None:
        return Verdict.reject("BadEvidence", "forks unknown")
    ev = DoublespendEvidence(a, b, meta.culprit)
    try:
        _validate_recovery(y.sender, y.recipient, y.payload, ev)
    except ScError as e:
        return Verdict.reject("BadEvidence", str(e))
    return Verdict.admit("recovery")


def sc_guard(c, actor: AgentId, y: Nft, signer: Signer | None = None) -> Verdict:
    led = ledger_of(c)
    return check_coin_step(led, led, actor, y, signer)


# -- recovery ----------------------------------------------------------------

def _validate_recovery(payee: AgentId, payer: AgentId, coin: Nft, ev: DoublespendEvidence) -> None:
    if not check_evidence(ev):
        raise EvidenceInvalid("forks are not a doublespend by the named culprit")
    if ev.fork_a.object != coin.object:
        raise EvidenceInvalid("evidence concerns a different coin")
    if coin.recipient != payee:
        raise EvidenceInvalid("payee does not hold the coin")
    prov = coin.provenance
    j = None
    for k in range(len(prov) - 1):
        if prov[k] == payer and prov[k + 1] == payee:
            j = k
    if j is None:
        raise EvidenceInvalid(f"{payer} never paid this coin to {payee}")
    k = first_divergence(ev.fork_a, ev.fork_b)
    # the culprit signed at divergence position k, i.e. while holding at k-1
    if ev.culprit == payee or k - 1 >= j or ev.culprit not in prov[:j]:
        raise CulpritNotUpstream(f"{ev.culprit} is not upstream of {payer}")


def recovery_claim(payee: AgentId, payer: AgentId, coin: Nft, evidence: DoublespendEvidence,
                   signer: Signer | None = None) -> Nft:
    """Transfer of ``coin`` back to ``payer`` demanding compensation for a doublespend."""
    _validate_recovery(payee, payer, coin, evidence)
    meta = Evidence(evidence.fork_a.digest, evidence.fork_b.digest, evidence.culprit)
    return make_transfer(coin, meta, payee, payer, signer)


# -- order and configs -------------------------------------------------------

def is_prefix(a: tuple, b: tuple) -> bool:
    return len(a) <= len(b) and b[:len(a)] == a


def sc_order(c: Config, c2: Config) -> bool:
    if c.agents != c2.agents:
        return False
    for cfg in (c, c2):
        led = ledger_of(cfg)
        if not (led.is_complete() and led.is_consistent()):
            return False
    return all(is_prefix(c[p], c2[p]) for p in c.agents)


@dataclass(frozen=True)
class ScConfig(Config):
    ledger: CoinLedger = field(default=None, compare=False, repr=False, hash=False)  # type: ignore[assignment]

    def __post_init__(self):
        super().__post_init__()
        if self.ledger is None:
            object.__setattr__(self, "ledger", CoinLedger.build(x for _, seq in self.entries for x in seq))

    def replace(self, agent, state):
        i = self._index[agent]
        entries = self.entries[:i] + ((agent, state),) + self.entries[i + 1:]
        return ScConfig(entries)

    def append(self, agent: AgentId, y: Nft) -> "ScConfig":
        i = self._index[agent]
        entries = self.entries[:i] + ((agent, self.entries[i][1] + (y,)),) + self.entries[i + 1:]
        return ScConfig(entries, ledger=self.ledger.add(y))


class ScRules(Rules):
    initial_state = ()

    def __init__(self, signer: Signer | None = None, agent_progress: bool = False):
        self.signer = signer
        self.agent_progress = agent_progress

    def initial(self, agents):
        return ScConfig.initial(agents, ())

    def extend(self, state, delta):
        return state + (delta,)

    def extend_config(self, config, actor, delta):
        if not isinstance(config, ScConfig):
            config = ScConfig(config.entries)
        return config.append(actor, delta)

    def delta(self, before, after):
        if len(after) == len(before) + 1 and after[:-1] == before:
            return after[-1]
        return None

    def guard(self, config, actor, delta):
        return sc_guard(config, actor, delta, self.signer)

    def liveness(self) -> LivenessPartition:
        return sc_liveness(self.agent_progress)

    def order(self, a, b):
        return sc_order(a, b)

    def candidates(self, lower, upper):
        for p in lower.agents:
            lo, up = lower[p], upper[p]
            if len(up) > len(lo) and is_prefix(lo, up):
                yield p, up[len(lo)]


def sc_liveness(agent_progress: bool = False) -> LivenessPartition:
    """Classes: one per pending claim or recovery (its answer), optionally one per agent."""

    def classify(c, actor, y):
        out = []
        if isinstance(y, Nft) and isinstance(y.metadata, Settle):
            out.append(("respond", y.metadata.claim))
        if agent_progress:
            out.append(("agent", actor))
        return out

    def enabled(c):
        led = ledger_of(c)
        keys = [("respond", cl.digest) for cl in outstanding_claims(led)]
        keys += [("respond", r.digest) for r in open_recoveries(led)]
        if agent_progress:
            keys += [("agent", a) for a in c.agents]
        return keys

    return LivenessPartition(classify, enabled)


# -- convenience constructors used by drivers and tests ----------------------

def fresh_coin(agent: AgentId, led: CoinLedger, signer: Signer | None = None, index: int | None = None) -> Nft:
    i = index if index is not None else led.creations(agent) + 1
    while index is None and led.has_name(agent, coin_name(i)):
        i += 1
    return make_object(agent, coin_name(i), signer)


def held_coins(led: CoinLedger, agent: AgentId) -> list[Nft]:
    """Coins whose latest item was received by ``agent`` (branch-local tips)."""
    seen = set()
    out = []
    for x in led:
        if x.recipient == agent and not led.has_children(x) and x.object.digest not in seen:
            seen.add(x.object.digest)
            out.append(x)
    return out


def claim_transfer(coin: Nft, claimant: AgentId, requested: Nft | None, signer: Signer | None = None) -> Nft:
    return make_transfer(coin, Redeem(requested.digest if requested is not None else None),
                         claimant, issuer(coin), signer)


def settle_transfer(payload: Nft, claim: Nft, signer: Signer | None = None) -> Nft:
    return make_transfer(payload, Settle(claim.digest), claim.recipient, claim.sender, signer)


def plain_transfer(coin: Nft, sender: AgentId, recipient: AgentId, text: str = "pay",
                   signer: Signer | None = None) -> Nft:
    return make_transfer(coin, Plain(text), sender, recipient, signer)


def respond(claim: Nft, world: CoinLedger, local: CoinLedger | None = None,
            signer: Signer | None = None, fresh_index: int | None = None) -> list[Nft]:
    """The correct obligor's answer to a pending claim or recovery.

    Returns the NFTs to append in order; a fresh coin creation may precede
    the settling transfer.  ``local`` is what the obligor can see (defaults
    to ``world``); ``fresh_index`` pins the index of a fresh coin.
    """
    local = world if local is None else local
    q = claim.recipient
    meta = claim.metadata

    def fresh() -> list[Nft]:
        coin = fresh_coin(q, world, signer, index=fresh_index)
        return [coin, settle_transfer(coin, claim, signer)]

    if isinstance(meta, Evidence):
        return fresh()
    if _other_branch_redeemed(claim, world) or not claim_valid(claim, world):
        return [settle_transfer(claim, claim, signer)]
    if meta.requested is None:
        return fresh()
    req = world.get(meta.requested)
    tips = []
    if req is not None:
        tips = [t for t in local.tips(req) if t.recipient == q and not world.has_children(t)
                and (t == claim or not (isinstance(t.metadata, Redeem) and _awaiting_answer(t, world)))]
    if tips:
        return [settle_transfer(tips[0], claim, signer)]
    return [settle_transfer(claim, claim, signer)]
