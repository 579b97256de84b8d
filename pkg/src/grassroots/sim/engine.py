"""Deterministic round-based scenario engine over the dissemination protocol.

Each round every agent takes one turn, in a fixed seeded rotation.  A turn:

1. adds the agent's initial block and follows its declared partners;
2. pulls every block it can from friends;
3. answers claims and recovery demands it knows of (unless it dodges);
4. issues pending credit-line coins to partners it is now friends with;
5. advances the script if the current directive is waiting on this agent.

Correct agents' steps must pass the guard; a rejected scripted step is a
:class:`ScriptError`.  Byzantine steps bypass the guard and are logged with
the verdict the guard would have given.
"""

from __future__ import annotations

import csv
import inspect
import io
import json
import logging
import os
from dataclasses import dataclass, field

from ..analytics import (chain_redemption_plan, coin_tips, holdings, liquidity_report,
                         one_liquidity_path)
from ..gcd import (CoinBlock, GcdConfig, GcdRules, friends, pending_obligations, pull_sources,
                   pullable, respond_blocks)
from ..mts import Run, Verdict
from ..nft import Nft, Plain, evidence_for, find_doublespend, make_object, make_transfer
from ..sc import (Outcome, ScError, claim_transfer, coin_name, issuer, open_recoveries, plain_transfer,
                  recovery_claim, unanswered_claims)
from .eventlog import EventLog, make_header
from .schedule import rotation, tie_break
from .spec import Directive, ScenarioSpec

log = logging.getLogger(__name__)

METRIC_COLUMNS = ["round", "agent", "fd", "cash_ratio", "quick_ratio_lb", "current_ratio", "insolvent",
                  "doublespender"]


class ScriptError(Exception):
    def __init__(self, round_no: int, directive: Directive | None, reason: str, detail: str = ""):
        what = directive.describe() if directive is not None else "setup"
        super().__init__(f"round {round_no}: {what}: {reason}{': ' + detail if detail else ''}")
        self.round = round_no
        self.directive = directive
        self.reason = reason
        self.detail = detail


class CorrectStepRejected(AssertionError):
    pass


@dataclass
class ClaimRecord:
    directive: int
    claim: str
    claimant: str
    obligor: str
    requested: str | None
    outcome: str | None = None
    round: int | None = None


@dataclass
class SimResult:
    spec: ScenarioSpec
    final: GcdConfig
    log: EventLog
    run: Run
    metrics: list = field(default_factory=list)
    rounds: int = 0
    stalled: list = field(default_factory=list)
    claims: list = field(default_factory=list)
    recoveries: list = field(default_factory=list)
    culprits: dict = field(default_factory=dict)
    completed: list = field(default_factory=list)

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=METRIC_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in self.metrics:
            w.writerow(row)
        return buf.getvalue()

    def final_state(self) -> dict:
        from ..sigma import sigma_local
        agents = {}
        m = holdings(self.final)
        for p, view in self.final.items():
            s = sigma_local(view, p)
            agents[p] = {
                "blocks": len(view.blocks),
                "own_blocks": view.max_index(p),
                "coins": [x.digest for x in s.value] if s.defined else None,
                "holds": {q: m(p, q) for q in self.final.agents if m(p, q)},
            }
        return {"schema": 1, "scenario": self.spec.name, "seed": self.spec.seed, "rounds": self.rounds,
                "final_digest": self.log.footer["final_digest"] if self.log.footer else None,
                "agents": agents, "stalled": self.stalled,
                "claims": [c.__dict__ for c in self.claims],
                "culprits": self.culprits}

    def write(self, outdir) -> None:
        os.makedirs(outdir, exist_ok=True)
        self.log.write(os.path.join(outdir, "eventlog.jsonl"))
        with open(os.path.join(outdir, "metrics.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(self.metrics_csv())
        with open(os.path.join(outdir, "final-state.json"), "w", encoding="utf-8") as fh:
            json.dump(self.final_state(), fh, indent=2, sort_keys=True)
            fh.write("\n")


class Engine:
    def __init__(self, spec: ScenarioSpec, signer=None, metrics: bool = True):
        spec.validate()
        self.spec = spec
        self.signer = signer
        self.rules = GcdRules(signer)
        self.agents = sorted(spec.names)
        self.byzantine = spec.byzantine
        # without a stated preference, community (bank) coins are spent first
        self.banks = sorted(a.name for a in spec.agents if a.role == "bank")
        self.config: GcdConfig = self.rules.initial(self.agents)
        self.run = Run(self.rules, self.config)
        self.log = EventLog(make_header(spec.name, self.agents, spec.seed, self.byzantine))
        self.with_metrics = metrics
        self.metrics: list = []
        self.round = 0
        self.dodging: set[str] = set()
        self.serve_only: dict[CoinBlock, frozenset] = {}
        self.partners: dict[str, set] = {a: set() for a in self.agents}
        self.credit: dict[str, list] = {a: [] for a in self.agents}
        for e in spec.trust_edges:
            self.partners[e.a].add(e.b)
            self.partners[e.b].add(e.a)
            if e.credit_a:
                self.credit[e.a].append((e.b, e.credit_a))
            if e.credit_b:
                self.credit[e.b].append((e.a, e.credit_b))
        for a, b in spec.friends:
            self.partners[a].add(b)
            self.partners[b].add(a)
        for a, b in spec.follows:
            self.partners[a].add(b)
        self.cursor = 0
        self.script_from: int | None = None
        self.active = None
        self.current: Directive | None = None
        self.claims: list[ClaimRecord] = []
        self.recoveries: list[dict] = []
        self.culprits: dict[str, int] = {}
        self.completed: list[int] = []

    # -- primitive steps -------------------------------------------------

    def _apply(self, p: str, b: CoinBlock, source: str | None = None, byzantine: bool = False) -> Verdict:
        v = self.rules.guard(self.config, p, b)
        if not v and not byzantine:
            raise CorrectStepRejected(f"round {self.round}: correct step by {p} rejected: {v.reason} {v.detail}")
        label = v.label if v else "byzantine-" + ("create" if b.author == p else "receive")
        self.config = self.rules.extend_config(self.config, p, b)
        self.run.append(p, b, label, self.round, config=self.config)
        coin = b.coin if (b.author == p and b.coin is not None) else None
        self.log.append(self.round, p, label, b, v.render(), source, byzantine, coin)
        return v

    def _next_block(self, p: str, y: Nft | None) -> CoinBlock:
        return CoinBlock(p, self.config[p].max_index(p) + 1, y)

    def _scripted(self, p: str, y: Nft) -> Nft:
        """A directive-driven coin block by a correct agent; guard failures are script errors."""
        b = self._next_block(p, y)
        v = self.rules.guard(self.config, p, b)
        if not v:
            raise ScriptError(self.round, self.current, v.reason or "Rejected", v.detail)
        self._apply(p, b)
        return y

    def _fresh(self, p: str) -> Nft:
        i = self.config[p].max_index(p) + 1
        return self._scripted(p, make_object(p, coin_name(i), self.signer))

    # -- turn phases -------------------------------------------------------

    def _setup(self, p: str) -> None:
        view = self.config[p]
        if view.max_index(p) == 0:
            self._apply(p, CoinBlock(p, 1, None))
        for q in sorted(self.partners[p]):
            if not self.config[p].follows(q):
                self._apply(p, CoinBlock(q, 1, None))

    def _allowed_sources(self, p: str, b: CoinBlock) -> list[str]:
        srcs = pull_sources(self.config, p, b)
        only = self.serve_only.get(b)
        if only is None:
            return srcs
        return [s for s in srcs if s != b.author or p in only]

    def _pull(self, p: str) -> int:
        n = 0
        while True:
            cand = [(b, self._allowed_sources(p, b)) for b, _ in pullable(self.config, p)]
            cand = [(b, s) for b, s in cand if s]
            if not cand:
                return n
            by_author: dict[str, list] = {}
            for b, s in cand:
                by_author.setdefault(b.author, []).append((b, s))
            for a in tie_break(sorted(by_author), self.spec.seed, self.round, p):
                for b, srcs in by_author[a]:
                    if self.rules.guard(self.config, p, b):
                        self._apply(p, b, source=srcs[0])
                        n += 1

    def _answer(self, p: str) -> None:
        while True:
            owed = pending_obligations(self.config, p)
            if not owed:
                return
            # an answer may hand over a claim coin that is itself still owed,
            # so take the first obligation whose answer is admissible now
            for cl in owed:
                bs = respond_blocks(self.config, p, cl, self.signer)
                if self.rules.guard(self.config, p, bs[0]):
                    break
            for b in bs:
                self._apply(p, b)

    def _issue_credit(self, p: str) -> None:
        rest = []
        for q, count in self.credit[p]:
            if not friends(self.config, p, q):
                rest.append((q, count))
                continue
            for _ in range(count):
                x = self._fresh(p)
                self._scripted(p, make_transfer(x, Plain("credit"), p, q, self.signer))
        self.credit[p] = rest

    def _turn(self, p: str) -> None:
        self._setup(p)
        self._pull(p)
        if p not in self.dodging:
            self._answer(p)
        self._issue_credit(p)
        self._advance_script(p)

    # -- script ------------------------------------------------------------

    def _advance_script(self, p: str) -> None:
        # the script starts the round after every credit line has been issued
        if self.script_from is None:
            if any(self.credit.values()):
                return
            self.script_from = self.round + 1
        if self.round < self.script_from:
            return
        resumed = False
        script = self.spec.script
        while self.cursor < len(script):
            if self.active is None:
                d = script[self.cursor]
                if d.actor != p or resumed:
                    return
                self.current = d
                gen = getattr(self, "_do_" + d.op.replace("-", "_"))(d)
                if not inspect.isgenerator(gen):
                    self._finish()
                    continue
                self.active = [gen, d.actor]
                resumed = False
            gen, waiting = self.active
            if waiting != p or resumed:
                return
            resumed = True
            self.current = script[self.cursor]
            try:
                self.active[1] = next(gen)
            except StopIteration:
                self._finish()
                resumed = False
                continue
            return

    def _finish(self) -> None:
        self.completed.append(self.cursor)
        self.active = None
        self.cursor += 1

    def script_done(self) -> bool:
        return self.cursor >= len(self.spec.script)

    # -- directive helpers ---------------------------------------------------

    def _spendable(self, p: str, to: str | None, of_issuer: str | None = None,
                   foreign_only: bool = True) -> list[Nft]:
        view = self.config[p]
        world = self.config.world
        out = []
        for x in view.ledger:
            if x.recipient != p or view.ledger.has_children(x) or world.has_children(x):
                continue
            i = issuer(x)
            if of_issuer is not None and i != of_issuer:
                continue
            if foreign_only and of_issuer is None and i == p:
                continue
            if to is not None:
                probe = CoinBlock(p, view.max_index(p) + 1, make_transfer(x, Plain("probe"), p, to, self.signer))
                if not self.rules.guard(self.config, p, probe):
                    continue
            out.append(x)
        prefer = self.spec.agent(p).prefer or self.banks
        rank = {a: k for k, a in enumerate(prefer)}
        out.sort(key=lambda x: (rank.get(issuer(x), len(rank)), issuer(x), x.digest))
        return out

    def _choose_requested(self, obligor: str, of_issuer: str) -> Nft:
        world = self.config.world
        holders, _ = coin_tips(world)
        taken = set()
        for cl in unanswered_claims(world):
            if cl.metadata.requested:
                req = world.get(cl.metadata.requested)
                if req is not None:
                    taken.add(req.object.digest)
        tips = sorted((t for t in holders.values() if issuer(t) == of_issuer), key=lambda t: t.digest)
        for t in tips:
            if t.recipient == obligor and t.object.digest not in taken:
                return t
        for t in tips:
            if t.recipient != obligor:
                return t
        raise ScriptError(self.round, self.current, "NoLiquidity", f"no {of_issuer}-coin to request")

    def _settlement_in_view(self, p: str, claim: Nft) -> Nft | None:
        led = self.config[p].ledger
        for s in led.settlements_of(claim):
            if self.config.world.outcome(s) in (Outcome.ACCEPTED, Outcome.REJECTED):
                return s
        return None

    # -- directives ------------------------------------------------------------

    def _do_wait(self, d: Directive):
        until = int(d.get("until", self.round + int(d.get("rounds", 1))))
        while self.round < until:
            yield d.actor

    def _do_follow(self, d: Directive):
        target = d.get("target")
        if not self.config[d.actor].follows(target):
            self._apply(d.actor, CoinBlock(target, 1, None))
        self.partners[d.actor].add(target)

    def _do_issue(self, d: Directive):
        for _ in range(int(d.get("count", 1))):
            self._fresh(d.actor)

    def _do_exchange(self, d: Directive):
        a, b = d.actor, d.get("to")
        self.credit[a].append((b, int(d.get("count", 1))))
        self.credit[b].append((a, int(d.get("count_back", d.get("count", 1)))))
        self.partners[a].add(b)
        self.partners[b].add(a)

    def _do_pay(self, d: Directive):
        p, to, count = d.actor, d.get("to"), int(d.get("count", 1))
        of_issuer = d.get("issuer")
        while True:
            if of_issuer == p:
                coins = []
                for _ in range(count):
                    coins.append(self._fresh(p))
            else:
                coins = self._spendable(p, to, of_issuer)
            if len(coins) >= count:
                break
            yield p
        for x in coins[:count]:
            self._scripted(p, plain_transfer(x, p, to, d.get("memo", "pay"), self.signer))

    def _claim_and_wait(self, p: str, coin: Nft, want: Nft | None, idx: int):
        y = self._scripted(p, claim_transfer(coin, p, want, self.signer))
        rec = ClaimRecord(idx, y.digest, p, issuer(coin), want.digest if want is not None else None)
        self.claims.append(rec)
        return y, rec

    def _do_claim(self, d: Directive):
        p, q, count = d.actor, d.get("obligor"), int(d.get("count", 1))
        request = d.get("request", "fresh")
        wants = request if isinstance(request, list) else [request] * count
        count = len(wants)
        while True:
            coins = self._spendable(p, q, of_issuer=q)
            if len(coins) >= count:
                break
            yield p
        pending = []
        for coin, r in zip(coins, wants):
            want = None if r in (None, "fresh") else self._choose_requested(q, r)
            pending.append(self._claim_and_wait(p, coin, want, self.cursor))
        while True:
            left = []
            for y, rec in pending:
                s = self._settlement_in_view(p, y)
                if s is None:
                    left.append((y, rec))
                else:
                    rec.outcome = self.config.world.outcome(s).value
                    rec.round = self.round
            pending = left
            if not pending:
                return
            yield p

    def _do_chain_pay(self, d: Directive):
        p, to, count = d.actor, d.get("to"), int(d.get("count", 1))
        for _ in range(count):
            path = one_liquidity_path(self.config, p, to)
            if path is None:
                raise ScriptError(self.round, d, "NoLiquidity", f"no 1-liquidity path from {p} to {to}")
            plan = chain_redemption_plan(self.config, path)
            coin = path.coins[0]
            while coin not in self.config[p].ledger:
                yield p
            for step in plan:
                tips = [t for t in self.config.world.tips(coin) if t.recipient == p]
                if not tips:
                    raise ScriptError(self.round, d, "NoLiquidity", "planned coin moved")
                y, rec = self._claim_and_wait(p, tips[0], step.requested, self.cursor)
                while True:
                    s = self._settlement_in_view(p, y)
                    if s is not None:
                        break
                    yield p
                rec.outcome = self.config.world.outcome(s).value
                rec.round = self.round
                if rec.outcome != Outcome.ACCEPTED.value:
                    raise ScriptError(self.round, d, "ChainBroken", f"claim {y.short} rejected")
                coin = s
            tips = [t for t in self.config.world.tips(coin) if t.recipient == p]
            while not tips or tips[0] not in self.config[p].ledger:
                yield p
                tips = [t for t in self.config.world.tips(coin) if t.recipient == p]
            self._scripted(p, plain_transfer(tips[0], p, to, d.get("memo", "chain-pay"), self.signer))

    def _do_recover(self, d: Directive):
        p, payer = d.actor, d.get("payer")
        world = self.config.world
        while True:
            held = [x for x in self.config[p].ledger if x.recipient == p and not world.has_children(x)]
            found = None
            for x in sorted(held, key=lambda z: z.digest):
                if issuer(x) == p:
                    continue
                ev = find_doublespend(world.items_of(x))
                if ev is None:
                    continue
                # point the evidence at the branch the payer handed over
                for other in world.items_of(x):
                    e2 = evidence_for(x, other)
                    if e2 is not None:
                        ev = e2
                        break
                found = (x, ev)
                break
            if found is not None:
                break
            yield p
            world = self.config.world
        x, ev = found
        try:
            y = recovery_claim(p, payer, x, ev, self.signer)
        except ScError as e:
            raise ScriptError(self.round, d, type(e).__name__, str(e)) from e
        self._scripted(p, y)
        rec = {"claim": y.digest, "payee": p, "payer": payer, "culprit": ev.culprit, "outcome": None}
        self.recoveries.append(rec)
        while True:
            s = self._settlement_in_view(p, y)
            if s is not None:
                rec["outcome"] = self.config.world.outcome(s).value
                rec["round"] = self.round
                return
            yield p

    def _do_dodge_claims(self, d: Directive):
        self.dodging.add(d.actor)

    def _do_doublespend(self, d: Directive):
        p = d.actor
        victims = list(d.get("victims", ()))
        if len(victims) < 2:
            raise ScriptError(self.round, d, "BadDirective", "doublespend needs two victims")
        while True:
            coins = self._spendable(p, None, d.get("issuer"))
            coins = [x for x in coins if all(friends(self.config, p, v) for v in victims)]
            if coins:
                break
            yield p
        x = coins[0]
        i = self.config[p].max_index(p) + 1
        for k, v in enumerate(victims):
            b = CoinBlock(p, i, make_transfer(x, Plain("pay"), p, v, self.signer))
            self._apply(p, b, byzantine=True)
            self.serve_only[b] = frozenset({v})

    def _do_fork_chain(self, d: Directive):
        p = d.actor
        i = int(d.get("index") or (self.config[p].max_index(p) + 1))
        for k in range(2):
            b = CoinBlock(p, i, make_object(p, f"coin_{i}" if k == 0 else f"coin{i}", self.signer))
            self._apply(p, b, byzantine=True)

    # -- main loop --------------------------------------------------------------

    def _quiescent(self) -> bool:
        if not self.script_done() or any(self.credit.values()):
            return False
        world = self.config.world
        if unanswered_claims(world) or open_recoveries(world):
            return False
        for p in self.agents:
            for b, _ in pullable(self.config, p):
                if self._allowed_sources(p, b):
                    return False
        return True

    def _record_metrics(self, r: int) -> None:
        m = holdings(self.config, r)
        _, forked = coin_tips(self.config.world)
        for od in forked:
            ev = find_doublespend(self.config.world.items_of(self.config.world.get(od)))
            if ev is not None and ev.culprit not in self.culprits:
                self.culprits[ev.culprit] = r
        if not self.with_metrics:
            return
        rep = liquidity_report(m, self.agents, self.spec.quick_depth)
        for row in rep.rows(r):
            row["doublespender"] = int(row["agent"] in self.culprits)
            self.metrics.append(row)

    def execute(self) -> SimResult:
        order = rotation(self.agents, self.spec.seed)
        rounds = 0
        if self.spec.horizon == 0:
            self._record_metrics(0)
        for r in range(self.spec.horizon):
            self.round = r
            for p in order:
                self._turn(p)
            self._record_metrics(r)
            rounds = r + 1
            if self._quiescent():
                break
        self.log.close(self.config, rounds)
        stalled = []
        if not self.script_done():
            stalled = [self.spec.script[i].describe() for i in range(self.cursor, len(self.spec.script))]
        self.run.end_round = rounds - 1
        return SimResult(self.spec, self.config, self.log, self.run, self.metrics, rounds, stalled,
                         self.claims, self.recoveries, dict(self.culprits), self.completed)


def run_scenario(spec: ScenarioSpec, signer=None, metrics: bool = True) -> SimResult:
    return Engine(spec, signer, metrics).execute()
