"""Library of scenario factories.

Each factory returns a validated :class:`ScenarioSpec`.  ``FACTORIES`` maps
the ``kind`` of a TOML ``[generate]`` table to its factory.
"""

from __future__ import annotations

from itertools import combinations

from .spec import AgentSpec, Directive, ScenarioSpec, SpecError, TrustEdge


def _names(prefix: str, n: int) -> list[str]:
    width = len(str(max(n - 1, 0)))
    return [f"{prefix}{i:0{width}d}" for i in range(n)]


def community(n: int = 11, m: int = 10, seed: int = 0, horizon: int = 16) -> ScenarioSpec:
    """Every pair of members opens a mutual credit line of ``m`` coins each way."""
    if n < 2 or m < 0:
        raise SpecError("community needs n >= 2 and m >= 0")
    names = _names("a", n)
    return ScenarioSpec(
        name=f"community-{n}x{m}", agents=[AgentSpec(a) for a in names],
        trust_edges=[TrustEdge(a, b, m, m) for a, b in combinations(names, 2)],
        seed=seed, horizon=horizon, params={"kind": "community", "n": n, "m": m}).validate()


def private_banker(n: int = 3, credit: int = 2, pay_count: int = 1, banker_lacks_payee: bool = False,
                   direct: bool = False, seed: int = 0, horizon: int = 24) -> ScenarioSpec:
    """Members each hold a credit line with one banker; member 1 pays member 2 through the banker.

    ``banker_lacks_payee`` leaves the banker without payee coins, so no
    1-liquidity path exists.  ``direct`` also opens a line between payer and
    payee, so the payment needs no redemption.
    """
    if n < 3:
        raise SpecError("private banker scenario needs n >= 3")
    banker = "banker"
    members = _names("m", n - 1)
    payer, payee = members[0], members[1]
    edges = []
    for q in members:
        back = 0 if (banker_lacks_payee and q == payee) else credit
        edges.append(TrustEdge(banker, q, credit, back))
    if direct:
        edges.append(TrustEdge(payer, payee, 0, credit))
    agents = [AgentSpec(banker, "banker")] + [AgentSpec(q) for q in members]
    return ScenarioSpec(
        name=f"private-banker-{n}", agents=agents, trust_edges=edges,
        friends=[(a, b) for a, b in combinations(members, 2)],
        script=[Directive("chain-pay", payer, {"to": payee, "count": pay_count})],
        seed=seed, horizon=horizon,
        params={"kind": "private-banker", "payer": payer, "payee": payee, "banker": banker}).validate()


def hawala(k: int = 4, count: int = 1, credit: int = 2, dodger: int | None = None, seed: int = 0,
           horizon: int = 48) -> ScenarioSpec:
    """Value relayed along a line of ``k`` agents.

    Hop i: agent i pays agent i+1 with its own fresh coins, and agent i+1
    redeems them from agent i for agent-(i+1) coins agent i holds on credit.
    With ``dodger`` set, that agent never answers claims and the relay stalls.
    """
    if k < 2:
        raise SpecError("hawala needs k >= 2")
    names = _names("h", k)
    roles = ["sovereign"] * k
    script = []
    if dodger is not None:
        if not 0 <= dodger < k:
            raise SpecError("dodger index out of range")
        roles[dodger] = "byzantine"
        script.append(Directive("dodge-claims", names[dodger]))
    for i in range(k - 1):
        a, b = names[i], names[i + 1]
        script.append(Directive("pay", a, {"to": b, "count": count, "issuer": a}))
        script.append(Directive("claim", b, {"obligor": a, "count": count, "request": b}))
    return ScenarioSpec(
        name=f"hawala-{k}", agents=[AgentSpec(a, r) for a, r in zip(names, roles)],
        trust_edges=[TrustEdge(names[i], names[i + 1], 0, credit) for i in range(k - 1)],
        script=script, seed=seed, horizon=horizon,
        params={"kind": "hawala", "k": k, "count": count, "dodger": dodger}).validate()


def line_graph(k: int = 5, coins: int = 2, seed: int = 0, horizon: int = 32) -> ScenarioSpec:
    """Friends along a line; everyone follows the source, which issues ``coins`` fresh coins."""
    if k < 2:
        raise SpecError("line graph needs k >= 2")
    names = _names("l", k)
    return ScenarioSpec(
        name=f"line-{k}", agents=[AgentSpec(a) for a in names],
        friends=[(names[i], names[i + 1]) for i in range(k - 1)],
        follows=[(a, names[0]) for a in names[2:]],
        script=[Directive("issue", names[0], {"count": coins})],
        seed=seed, horizon=horizon, params={"kind": "line", "k": k, "coins": coins}).validate()


def doublespend_recovery(seed: int = 0, horizon: int = 48, recover: bool = True) -> ScenarioSpec:
    """A Byzantine agent pays the same coin to two victims; the losing victim recovers upstream.

    ``u`` holds one ``p``-coin and forks it to ``r`` and ``s``.  ``r`` passes
    its branch to ``q``.  ``s`` redeems first and is accepted; ``q`` is then
    rejected and demands compensation from ``r``, who paid it.
    """
    agents = [AgentSpec("p"), AgentSpec("u", "byzantine"), AgentSpec("r"), AgentSpec("s"), AgentSpec("q")]
    edges = [TrustEdge("p", "u", 1, 0), TrustEdge("r", "q", 0, 0)]
    friends = [("u", "r"), ("u", "s"), ("p", "s"), ("p", "q")]
    script = [
        Directive("doublespend", "u", {"victims": ["r", "s"], "issuer": "p"}),
        Directive("pay", "r", {"to": "q", "count": 1, "issuer": "p"}),
        Directive("claim", "s", {"obligor": "p", "count": 1, "request": "fresh"}),
        Directive("claim", "q", {"obligor": "p", "count": 1, "request": "fresh"}),
    ]
    if recover:
        script.append(Directive("recover", "q", {"payer": "r"}))
    return ScenarioSpec(name="doublespend-recovery", agents=agents, trust_edges=edges, friends=friends,
                        script=script, seed=seed, horizon=horizon,
                        params={"kind": "doublespend-recovery"}).validate()


def bank_risk(n: int = 6, missing_peer: bool = False, seed: int = 0, horizon: int = 32) -> ScenarioSpec:
    """A community bank redeems half of its ``p``-coins for coins of ``p``'s peers.

    The bank and ``p`` open lines of ``2(n-1)`` coins each way; ``p`` holds
    one coin of each of its ``n-1`` peers, and the bank one coin of each
    peer.  The bank then redeems ``n-1`` ``p``-coins, each requesting a
    different peer's coin.  With ``missing_peer`` the last peer never gives
    ``p`` a coin, so that claim is rejected.
    """
    if n < 6:
        raise SpecError("bank risk scenario needs n >= 6")
    peers = _names("q", n - 1)
    agents = [AgentSpec("bank", "bank"), AgentSpec("p")] + [AgentSpec(q) for q in peers]
    edges = [TrustEdge("bank", "p", 2 * (n - 1), 2 * (n - 1))]
    for k, q in enumerate(peers):
        give_p = 0 if (missing_peer and k == len(peers) - 1) else 1
        edges.append(TrustEdge(q, "p", give_p, 0))
        edges.append(TrustEdge(q, "bank", 1, 0))
    script = [Directive("claim", "bank", {"obligor": "p", "request": list(peers)})]
    return ScenarioSpec(name=f"bank-risk-{n}", agents=agents, trust_edges=edges, script=script,
                        seed=seed, horizon=horizon,
                        params={"kind": "bank-risk", "n": n, "missing_peer": missing_peer}).validate()


FACTORIES = {
    "community": community,
    "private-banker": private_banker,
    "hawala": hawala,
    "line": line_graph,
    "doublespend-recovery": doublespend_recovery,
    "bank-risk": bank_risk,
}
