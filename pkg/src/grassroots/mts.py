"""Multiagent transition-system kernel.

Configurations are immutable per-agent snapshots; protocol behaviour is
supplied by a :class:`Rules` object that knows how to extend a local state,
which extensions are correct, and which liveness classes are enabled.
Runs are recorded as ``(actor, label, delta, round)`` steps and their
configurations are materialized on demand.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Generic, Hashable, Iterable, Iterator, Sequence, TypeVar

log = logging.getLogger(__name__)

S = TypeVar("S")
AgentId = str


class KernelError(Exception):
    """Base class for kernel errors."""


class GuardRejected(KernelError):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail


class ActorMismatch(KernelError):
    pass


class NotSubset(KernelError):
    pass


class BudgetExceeded(KernelError):
    pass


class PreconditionFailed(KernelError):
    pass


@dataclass(frozen=True)
class Verdict:
    admitted: bool
    reason: str | None = None
    label: str | None = None
    detail: str = ""

    @classmethod
    def admit(cls, label: str) -> "Verdict":
        return cls(True, None, label)

    @classmethod
    def reject(cls, reason: str, detail: str = "") -> "Verdict":
        return cls(False, reason, None, detail)

    def __bool__(self) -> bool:
        return self.admitted

    def render(self) -> str:
        return "admitted" if self.admitted else f"rejected:{self.reason}"


@dataclass(frozen=True)
class Config(Generic[S]):
    """One local state per agent; agents are kept sorted."""

    entries: tuple[tuple[AgentId, S], ...]
    _index: dict = field(default=None, compare=False, repr=False, hash=False)  # type: ignore[assignment]

    def __post_init__(self):
        names = [a for a, _ in self.entries]
        if names != sorted(set(names)):
            raise ValueError("config entries must be sorted with unique agents")
        object.__setattr__(self, "_index", {a: i for i, a in enumerate(names)})

    @classmethod
    def initial(cls, agents: Iterable[AgentId], s0: S, **extra) -> "Config[S]":
        return cls(tuple((a, s0) for a in sorted(set(agents))), **extra)

    @classmethod
    def from_map(cls, states: dict, **extra) -> "Config[S]":
        return cls(tuple(sorted(states.items())), **extra)

    @property
    def agents(self) -> tuple[AgentId, ...]:
        return tuple(a for a, _ in self.entries)

    def __getitem__(self, agent: AgentId) -> S:
        return self.entries[self._index[agent]][1]

    def __contains__(self, agent: AgentId) -> bool:
        return agent in self._index

    def items(self) -> Iterator[tuple[AgentId, S]]:
        return iter(self.entries)

    def as_dict(self) -> dict:
        return dict(self.entries)

    def replace(self, agent: AgentId, state: S) -> "Config[S]":
        i = self._index[agent]
        entries = self.entries[:i] + ((agent, state),) + self.entries[i + 1:]
        return Config(entries)

    def changed_agents(self, other: "Config[S]") -> list[AgentId]:
        if self.agents != other.agents:
            raise ActorMismatch("configs are over different agent sets")
        return [a for (a, s), (_, t) in zip(self.entries, other.entries) if s != t]


@dataclass(frozen=True)
class Transition(Generic[S]):
    actor: AgentId
    before: Config[S]
    after: Config[S]
    label: str = ""


@dataclass(frozen=True)
class Step:
    actor: AgentId
    label: str
    delta: Any
    round: int | None = None


class LivenessPartition:
    """Liveness classes given by two callables.

    ``classify(config, actor, delta)`` returns the class keys a transition
    belongs to; ``enabled(config)`` returns the keys of classes having some
    enabled transition in ``config``.
    """

    def __init__(self, classify: Callable[[Config, AgentId, Any], Iterable[Hashable]],
                 enabled: Callable[[Config], Iterable[Hashable]]):
        self.classify = classify
        self.enabled = enabled


class Rules(ABC, Generic[S]):
    """Protocol rule set consumed by the kernel."""

    initial_state: Any = ()

    def initial(self, agents: Iterable[AgentId]) -> Config:
        return Config.initial(agents, self.initial_state)

    @abstractmethod
    def extend(self, state: S, delta: Any) -> S:
        """Local state after the actor performs ``delta``."""

    def extend_config(self, config: Config, actor: AgentId, delta: Any) -> Config:
        return config.replace(actor, self.extend(config[actor], delta))

    @abstractmethod
    def delta(self, before: S, after: S) -> Any:
        """Recover the delta between two local states, or None if not a single step."""

    @abstractmethod
    def guard(self, config: Config, actor: AgentId, delta: Any) -> Verdict:
        """Is performing ``delta`` by ``actor`` in ``config`` a correct transition."""

    def moves(self, config: Config, actor: AgentId) -> Iterable[Any]:
        """Candidate deltas for exhaustive enumeration (bounded alphabets)."""
        raise NotImplementedError

    def liveness(self) -> LivenessPartition:
        return LivenessPartition(lambda c, a, d: (), lambda c: ())

    def order(self, a: Config, b: Config) -> bool:
        raise NotImplementedError

    def candidates(self, lower: Config, upper: Config) -> Iterable[tuple[AgentId, Any]]:
        """Transitions from ``lower`` that might lead toward ``upper``."""
        raise NotImplementedError


def apply(config: Config, transition: Transition, rules: Rules) -> Config:
    if transition.before != config:
        raise PreconditionFailed("transition does not start at the given config")
    changed = config.changed_agents(transition.after)
    if not changed:
        raise GuardRejected("Identity", "no-op is not a transition")
    if changed != [transition.actor]:
        raise ActorMismatch(f"transition by {transition.actor} changes {changed}")
    delta = rules.delta(config[transition.actor], transition.after[transition.actor])
    if delta is None:
        raise GuardRejected("NotSingleStep", "local state change is not one protocol step")
    verdict = rules.guard(config, transition.actor, delta)
    if not verdict:
        raise GuardRejected(verdict.reason or "Rejected", verdict.detail)
    result = rules.extend_config(config, transition.actor, delta)
    if result != transition.after:
        raise GuardRejected("Mismatch", "after-state differs from the protocol extension")
    return result


class Run(Generic[S]):
    """A recorded run: initial config plus steps; configs built lazily."""

    def __init__(self, rules: Rules, initial: Config, steps: Sequence[Step] = (),
                 end_round: int | None = None):
        self.rules = rules
        self.initial = initial
        self.steps: list[Step] = list(steps)
        self._configs: list[Config] = [initial]
        self.end_round = end_round

    def append(self, actor: AgentId, delta: Any, label: str = "", round: int | None = None,
               config: Config | None = None) -> None:
        """Record a step. ``config`` may supply the already computed successor."""
        self.steps.append(Step(actor, label, delta, round))
        if len(self._configs) == len(self.steps):
            nxt = config if config is not None else self.rules.extend_config(self._configs[-1], actor, delta)
            self._configs.append(nxt)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def configs(self) -> list[Config]:
        while len(self._configs) <= len(self.steps):
            i = len(self._configs) - 1
            st = self.steps[i]
            self._configs.append(self.rules.extend_config(self._configs[i], st.actor, st.delta))
        return self._configs

    @property
    def final(self) -> Config:
        return self.configs[-1]

    def transitions(self) -> Iterator[Transition]:
        cs = self.configs
        for i, st in enumerate(self.steps):
            yield Transition(st.actor, cs[i], cs[i + 1], st.label)

    def rounds(self) -> list[int]:
        """Round number of every step; steps without one count as their own round."""
        out = []
        for i, st in enumerate(self.steps):
            out.append(st.round if st.round is not None else i)
        return out


@dataclass
class SafetyViolation:
    index: int
    actor: AgentId
    reason: str
    detail: str = ""


def check_safe(run: Run, rules: Rules | None = None) -> list[SafetyViolation]:
    rules = rules or run.rules
    out = []
    cs = run.configs
    for i, st in enumerate(run.steps):
        v = rules.guard(cs[i], st.actor, st.delta)
        if not v:
            out.append(SafetyViolation(i, st.actor, v.reason or "Rejected", v.detail))
    return out


@dataclass
class LivenessFlag:
    cls: Hashable
    enabled_since_round: int
    flagged_at_round: int

    def describe(self) -> str:
        return (f"class {self.cls!r} enabled since round {self.enabled_since_round} "
                f"and not taken by round {self.flagged_at_round}")


def check_live_bounded(run: Run, partition: LivenessPartition, horizon: int) -> list[LivenessFlag]:
    """Flag classes continuously enabled for ``horizon`` rounds without being taken.

    Time is measured in the run's rounds.  A class is flagged at most once
    per enabled episode; a class that is never enabled is never flagged.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    cs = run.configs
    rounds = run.rounds()
    end = run.end_round if run.end_round is not None else (rounds[-1] if rounds else 0)
    since: dict[Hashable, int] = {}
    flagged: set[Hashable] = set()
    flags: list[LivenessFlag] = []

    def expire(now: int) -> None:
        for cls, start in since.items():
            if cls not in flagged and now - start >= horizon:
                flagged.add(cls)
                flags.append(LivenessFlag(cls, start, now))

    for i, conf in enumerate(cs):
        # config i comes into being at the round of the step that produced it
        born = rounds[i - 1] if i > 0 else (rounds[0] if rounds else end)
        until = rounds[i] if i < len(rounds) else end
        enabled = set(partition.enabled(conf))
        for cls in list(since):
            if cls not in enabled:
                del since[cls]
                flagged.discard(cls)
        for cls in enabled:
            since.setdefault(cls, born)
        expire(until)
        if i < len(run.steps):
            st = run.steps[i]
            for cls in partition.classify(conf, st.actor, st.delta):
                since.pop(cls, None)
                flagged.discard(cls)
    return flags


def project(config: Config, agents: Iterable[AgentId]) -> Config:
    agents = set(agents)
    missing = agents - set(config.agents)
    if missing:
        raise NotSubset(f"agents not in configuration: {sorted(missing)}")
    return Config(tuple((a, s) for a, s in config.entries if a in agents))


# -- bounded grassroots check ------------------------------------------------

CONSISTENT = "CONSISTENT-WITH-GRASSROOTS"
COUNTEREXAMPLE = "COUNTEREXAMPLE"
MAX_DEPTH = 6
DEFAULT_STATE_CAP = 10 ** 6


@dataclass
class GrassrootsVerdict:
    verdict: str
    run: tuple | None = None
    note: str = ""
    behaviours_small: int = 0
    behaviours_projected: int = 0
    new_behaviour: tuple | None = None

    @property
    def consistent(self) -> bool:
        return self.verdict == CONSISTENT


def _behaviours(rules: Rules, agents: Sequence[AgentId], depth: int, keep: Sequence[AgentId],
                cap: int) -> set[tuple]:
    """All safe runs of length <= depth, projected on ``keep`` with stutters removed.

    A behaviour is the tuple of projected configurations.
    """
    out: set[tuple] = set()
    count = 0
    c0 = rules.initial(agents)
    seen_prefix: set[tuple] = set()

    def proj(c: Config) -> Config:
        return project(c, keep)

    stack = [(c0, (proj(c0),), 0)]
    while stack:
        c, beh, d = stack.pop()
        key = (c, beh)
        if key in seen_prefix:
            continue
        seen_prefix.add(key)
        count += 1
        if count > cap:
            raise BudgetExceeded(f"more than {cap} states explored")
        out.add(beh)
        if d == depth:
            continue
        for a in c.agents:
            for delta in rules.moves(c, a):
                if not rules.guard(c, a, delta):
                    continue
                nc = rules.extend_config(c, a, delta)
                pc = proj(nc)
                nb = beh if pc == beh[-1] else beh + (pc,)
                stack.append((nc, nb, d + 1))
    return out


def check_grassroots_bounded(factory: Callable[[Sequence[AgentId]], Rules], small: Iterable[AgentId],
                             large: Iterable[AgentId], depth: int,
                             state_cap: int = DEFAULT_STATE_CAP) -> GrassrootsVerdict:
    """Bounded check that TS(P) is strictly contained in TS(P')/P.

    ``factory(agents)`` builds the protocol instance over ``agents``.  The
    projected behaviours of TS(P') are compared against TS(P) runs of the
    same depth; a TS(P) behaviour with no projected counterpart, or no new
    projected behaviour at all, is a counterexample.
    """
    P = sorted(set(small))
    Pp = sorted(set(large))
    if not P or not set(P) < set(Pp):
        raise PreconditionFailed("need a nonempty P strictly contained in P'")
    if depth < 0 or depth > MAX_DEPTH:
        raise BudgetExceeded(f"depth {depth} outside 0..{MAX_DEPTH}")
    small_beh = _behaviours(factory(P), P, depth, P, state_cap)
    large_beh = _behaviours(factory(Pp), Pp, depth, P, state_cap)
    missing = sorted(small_beh - large_beh, key=lambda b: (len(b), repr(b)))
    extra = sorted(large_beh - small_beh, key=lambda b: (len(b), repr(b)))
    log.info("grassroots check: |TS(P)|=%d |TS(P')/P|=%d", len(small_beh), len(large_beh))
    if missing:
        return GrassrootsVerdict(COUNTEREXAMPLE, missing[0],
                                 "a behaviour of P alone is lost when P is embedded in P'",
                                 len(small_beh), len(large_beh))
    if not extra:
        return GrassrootsVerdict(COUNTEREXAMPLE, None,
                                 "embedding P in P' adds no behaviour within the depth bound",
                                 len(small_beh), len(large_beh))
    return GrassrootsVerdict(CONSISTENT, None, "", len(small_beh), len(large_beh), extra[0])


@dataclass
class MonotonicReport:
    checked: int = 0
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def check_monotonic_complete_sample(rules: Rules, pairs: Iterable[tuple[Config, Config]]) -> MonotonicReport:
    """For each pair c < c'' find a correct step c -> c' with c < c' <= c''."""
    rep = MonotonicReport()
    for lower, upper in pairs:
        if lower == upper:
            continue
        rep.checked += 1
        found = False
        for actor, delta in rules.candidates(lower, upper):
            if not rules.guard(lower, actor, delta):
                continue
            mid = rules.extend_config(lower, actor, delta)
            if mid != lower and rules.order(lower, mid) and rules.order(mid, upper):
                found = True
                break
        if not found:
            rep.failures.append((lower, upper))
    return rep
