"""JSON-lines event log of a dissemination run, and its replay.

Line 1 is a header, then one line per step, then a footer holding the
digest of the final configuration.  A step that introduces a coin (any
own-authored block with a coin) carries the full coin record; pulls and
follows refer to blocks by their fields only, so the log stays linear in
the number of coins.  Replaying rebuilds every NFT from these records and
must reproduce the footer digest exactly.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field

from ..gcd import CoinBlock, GcdConfig, GcdRules
from ..mts import Run
from ..nft import Nft, nft_from_json

log = logging.getLogger(__name__)

SCHEMA = 1


class ReplayMismatch(Exception):
    pass


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_digest(c: GcdConfig) -> str:
    h = hashlib.sha256()
    for p, view in c.items():
        h.update(p.encode() + b"\x00")
        for d in sorted(b.digest for b in view.blocks):
            h.update(d.encode())
        h.update(b"\x01")
    return h.hexdigest()


@dataclass
class EventLog:
    header: dict
    events: list = field(default_factory=list)
    footer: dict | None = None

    def append(self, round_no: int, actor: str, label: str, block: CoinBlock, verdict: str,
               source: str | None = None, byzantine: bool = False, coin: Nft | None = None) -> None:
        ev = {"kind": "event", "seq": len(self.events), "round": round_no, "actor": actor,
              "label": label, "block": {"author": block.author, "index": block.index,
                                        "coin": block.coin.digest if block.coin is not None else None},
              "verdict": verdict}
        if source is not None:
            ev["source"] = source
        if byzantine:
            ev["byzantine"] = True
        if coin is not None:
            ev["nft"] = coin.to_json()
        self.events.append(ev)

    def close(self, final: GcdConfig, rounds: int) -> None:
        self.footer = {"kind": "footer", "events": len(self.events), "rounds": rounds,
                       "final_digest": config_digest(final)}

    def lines(self) -> list[str]:
        out = [dumps(self.header)] + [dumps(e) for e in self.events]
        if self.footer is not None:
            out.append(dumps(self.footer))
        return out

    def text(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.text().encode()).hexdigest()

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.text())


def make_header(scenario: str, agents, seed: int, byzantine=()) -> dict:
    return {"kind": "header", "schema": SCHEMA, "scenario": scenario, "agents": sorted(agents),
            "seed": seed, "byzantine": sorted(byzantine)}


def read_log(path) -> EventLog:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as e:
        raise ReplayMismatch(f"cannot read {path}: {e}") from e
    return parse_log(raw)


def parse_log(raw: str) -> EventLog:
    lines = [ln for ln in raw.splitlines() if ln.strip()]
    if not lines:
        raise ReplayMismatch("empty log")
    try:
        objs = [json.loads(ln) for ln in lines]
    except json.JSONDecodeError as e:
        raise ReplayMismatch(f"malformed line: {e}") from e
    head = objs[0]
    if head.get("kind") != "header" or head.get("schema") != SCHEMA:
        raise ReplayMismatch("missing or unsupported header")
    if objs[-1].get("kind") != "footer":
        raise ReplayMismatch("log is truncated: no footer")
    events = objs[1:-1]
    if any(e.get("kind") != "event" for e in events):
        raise ReplayMismatch("unexpected record inside the log")
    return EventLog(head, events, objs[-1])


@dataclass
class Replay:
    log: EventLog
    run: Run
    rounds: list
    blocks: list

    @property
    def agents(self) -> list[str]:
        return self.log.header["agents"]

    def config_at_round(self, r: int) -> GcdConfig:
        """Configuration after every step of rounds <= r."""
        k = sum(1 for x in self.rounds if x <= r)
        return self.run.configs[k]


def replay(elog: EventLog) -> Replay:
    """Rebuild the run; raise ReplayMismatch if the footer digest is not reproduced."""
    rules = GcdRules()
    agents = elog.header["agents"]
    c = rules.initial(agents)
    run = Run(rules, c)
    nfts: dict[str, Nft] = {}
    rounds, blocks = [], []
    if elog.footer is None:
        raise ReplayMismatch("log is truncated: no footer")
    if elog.footer.get("events") != len(elog.events):
        raise ReplayMismatch("event count differs from footer")
    for ev in elog.events:
        if "nft" in ev:
            rec = ev["nft"]
            try:
                x = nft_from_json(rec, lambda d: nfts[d])
            except (KeyError, ValueError) as e:
                raise ReplayMismatch(f"event {ev['seq']}: cannot rebuild coin: {e}") from e
            nfts[x.digest] = x
        blk = ev["block"]
        coin = None
        if blk["coin"] is not None:
            coin = nfts.get(blk["coin"])
            if coin is None:
                raise ReplayMismatch(f"event {ev['seq']}: unknown coin {blk['coin']}")
        b = CoinBlock(blk["author"], blk["index"], coin)
        actor = ev["actor"]
        if actor not in c:
            raise ReplayMismatch(f"event {ev['seq']}: unknown agent {actor}")
        c = rules.extend_config(c, actor, b)
        run.append(actor, b, ev.get("label", ""), ev["round"], config=c)
        rounds.append(ev["round"])
        blocks.append(b)
    if config_digest(c) != elog.footer.get("final_digest"):
        raise ReplayMismatch("final configuration digest does not match the footer")
    run.end_round = elog.footer.get("rounds", (rounds[-1] + 1) if rounds else 0) - 1
    return Replay(elog, run, rounds, blocks)
