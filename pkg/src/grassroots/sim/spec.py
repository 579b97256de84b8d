"""Scenario descriptions and their TOML form (``schema = 1``).

Example::

    schema = 1
    name = "two-friends"
    seed = 7
    horizon = 20

    [[agents]]
    name = "alice"

    [[agents]]
    name = "bob"

    [[trust]]
    a = "alice"
    b = "bob"
    credit_a = 3
    credit_b = 3

    [[script]]
    op = "pay"
    actor = "alice"
    to = "bob"
    count = 1

A ``[generate]`` table builds the scenario from a library factory instead,
e.g. ``kind = "community"`` with ``n`` and ``m``; top-level ``seed`` and
``horizon`` still override.
"""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA = 1
ROLES = ("sovereign", "banker", "bank", "byzantine")
BYZANTINE_OPS = ("doublespend", "dodge-claims", "fork-chain")
OPS = ("issue", "pay", "claim", "chain-pay", "follow", "exchange", "recover", "wait") + BYZANTINE_OPS


class SpecError(ValueError):
    pass


@dataclass
class AgentSpec:
    name: str
    role: str = "sovereign"
    prefer: list = field(default_factory=list)


@dataclass
class TrustEdge:
    """Mutual credit line: ``a`` gives ``credit_a`` own coins to ``b`` and vice versa."""
    a: str
    b: str
    credit_a: int = 0
    credit_b: int = 0


@dataclass
class Directive:
    op: str
    actor: str
    args: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.args.get(key, default)

    def describe(self) -> str:
        extra = " ".join(f"{k}={v}" for k, v in sorted(self.args.items()))
        return f"{self.op}({self.actor}{' ' + extra if extra else ''})"


# Byzantine behaviours as named by scenario scripts
@dataclass(frozen=True)
class Doublespend:
    victims: tuple
    issuer: str | None = None


@dataclass(frozen=True)
class DodgeClaims:
    pass


@dataclass(frozen=True)
class ForkChain:
    index: int | None = None


def behaviour_of(d: Directive):
    if d.op == "doublespend":
        return Doublespend(tuple(d.get("victims", ())), d.get("issuer"))
    if d.op == "dodge-claims":
        return DodgeClaims()
    if d.op == "fork-chain":
        return ForkChain(d.get("index"))
    return None


@dataclass
class ScenarioSpec:
    name: str
    agents: list
    trust_edges: list = field(default_factory=list)
    script: list = field(default_factory=list)
    seed: int = 0
    horizon: int = 64
    friends: list = field(default_factory=list)
    quick_depth: int = 1
    follows: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.agents]

    @property
    def byzantine(self) -> set[str]:
        return {a.name for a in self.agents if a.role == "byzantine"}

    def agent(self, name: str) -> AgentSpec:
        for a in self.agents:
            if a.name == name:
                return a
        raise KeyError(name)

    def validate(self) -> "ScenarioSpec":
        names = self.names
        if len(set(names)) != len(names):
            raise SpecError("agent names must be unique")
        if not names:
            raise SpecError("scenario needs at least one agent")
        known = set(names)
        for a in self.agents:
            if a.role not in ROLES:
                raise SpecError(f"unknown role {a.role!r} for {a.name}")
        for e in self.trust_edges:
            if e.a not in known or e.b not in known or e.a == e.b:
                raise SpecError(f"bad trust edge {e.a}-{e.b}")
            if e.credit_a < 0 or e.credit_b < 0:
                raise SpecError("credit counts must be nonnegative")
        for pair in self.friends:
            if len(pair) != 2 or not set(pair) <= known or pair[0] == pair[1]:
                raise SpecError(f"bad friendship {pair}")
        for pair in self.follows:
            if len(pair) != 2 or not set(pair) <= known or pair[0] == pair[1]:
                raise SpecError(f"bad follow {pair}")
        for d in self.script:
            if d.op not in OPS:
                raise SpecError(f"unknown directive {d.op!r}")
            if d.actor not in known:
                raise SpecError(f"directive {d.describe()} names unknown actor")
            for key in ("to", "obligor", "target", "payer", "issuer"):
                v = d.get(key)
                if v is not None and v not in known:
                    raise SpecError(f"directive {d.describe()} names unknown agent {v!r}")
            for v in d.get("victims", ()) or ():
                if v not in known:
                    raise SpecError(f"directive {d.describe()} names unknown agent {v!r}")
            if d.op in BYZANTINE_OPS and d.actor not in self.byzantine:
                raise SpecError(f"{d.op} is only assignable to byzantine agents")
        if self.horizon < 0:
            raise SpecError("horizon must be nonnegative")
        return self

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA, "name": self.name, "seed": self.seed, "horizon": self.horizon,
            "quick_depth": self.quick_depth,
            "agents": [asdict(a) for a in self.agents],
            "trust": [asdict(e) for e in self.trust_edges],
            "friends": [list(p) for p in self.friends],
            "follows": [list(p) for p in self.follows],
            "script": [dict(op=d.op, actor=d.actor, **d.args) for d in self.script],
        }


def spec_from_dict(data: dict[str, Any]) -> ScenarioSpec:
    if data.get("schema") != SCHEMA:
        raise SpecError(f"unsupported schema {data.get('schema')!r}; expected {SCHEMA}")
    if "generate" in data:
        from . import scenarios
        gen = dict(data["generate"])
        kind = gen.pop("kind", None)
        factory = scenarios.FACTORIES.get(kind)
        if factory is None:
            raise SpecError(f"unknown generator {kind!r}")
        spec = factory(**gen)
    else:
        spec = ScenarioSpec(
            name=data.get("name", "scenario"),
            agents=[AgentSpec(a["name"], a.get("role", "sovereign"), list(a.get("prefer", [])))
                    for a in data.get("agents", [])],
            trust_edges=[TrustEdge(e["a"], e["b"], int(e.get("credit_a", 0)), int(e.get("credit_b", 0)))
                         for e in data.get("trust", [])],
            friends=[tuple(p) for p in data.get("friends", [])],
            follows=[tuple(p) for p in data.get("follows", [])],
            script=[Directive(d["op"], d["actor"], {k: v for k, v in d.items() if k not in ("op", "actor")})
                    for d in data.get("script", [])],
        )
    if "name" in data:
        spec.name = data["name"]
    if "seed" in data:
        spec.seed = int(data["seed"])
    if "horizon" in data:
        spec.horizon = int(data["horizon"])
    if "quick_depth" in data:
        spec.quick_depth = int(data["quick_depth"])
    return spec.validate()


def load_spec(path) -> ScenarioSpec:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as e:
            raise SpecError(f"cannot parse {path}: {e}") from e
    return spec_from_dict(data)
