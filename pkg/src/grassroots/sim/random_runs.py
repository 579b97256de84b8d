"""Seeded generators of random correct runs for the NFT, coin and dissemination protocols.

Every step a generator records has been admitted by the protocol guard;
a rejected candidate is simply not taken.  Obligations (answering claims
addressed to the actor) are served before discretionary moves.
"""

from __future__ import annotations

import random

from ..gcd import CoinBlock, GcdRules, friends_of, pending_obligations, pullable, respond_blocks
from ..mts import Run
from ..nft import NtRules, Plain, Redeem, make_object, make_transfer
from ..sc import (ScRules, claim_transfer, fresh_coin, held_coins, issuer, open_recoveries, plain_transfer,
                  respond, unanswered_claims)


def agent_names(n: int) -> list[str]:
    return [f"a{i}" for i in range(n)]


def random_nt_run(seed: int, n_agents: int = 3, steps: int = 30) -> Run:
    rng = random.Random(seed)
    rules = NtRules()
    agents = agent_names(n_agents)
    run = Run(rules, rules.initial(agents))
    c = run.initial
    made = 0
    for _ in range(steps):
        p = rng.choice(agents)
        union = {x.digest: x for _, seq in c.items() for x in seq}
        children = {x.payload.digest for x in union.values() if not x.is_object}
        mine = sorted((x for x in union.values() if x.recipient == p and x.digest not in children),
                      key=lambda x: x.digest)
        if mine and rng.random() < 0.7:
            x = rng.choice(mine)
            y = make_transfer(x, Plain(f"m{rng.randrange(3)}"), p, rng.choice(agents))
        else:
            made += 1
            y = make_object(p, f"obj-{p}-{made}")
        v = rules.guard(c, p, y)
        if not v:
            continue
        c = rules.extend_config(c, p, y)
        run.append(p, y, v.label, config=c)
    return run


def random_sc_run(seed: int, n_agents: int = 4, steps: int = 30) -> Run:
    """Random correct coin run: creations, payments, claims and their answers."""
    rng = random.Random(seed)
    rules = ScRules()
    agents = agent_names(n_agents)
    run = Run(rules, rules.initial(agents))
    c = run.initial
    while len(run) < steps:
        p = rng.choice(agents)
        led = c.ledger
        owed = sorted([cl for cl in unanswered_claims(led) if cl.recipient == p] +
                      [r for r in open_recoveries(led) if r.recipient == p], key=lambda x: x.digest)
        chosen = None
        if owed:
            for cl in owed:
                ys = respond(cl, led)
                v = rules.guard(c, p, ys[0])
                if v:
                    chosen = (ys, v)
                    break
            if chosen is None:
                raise AssertionError(f"no admissible answer among {len(owed)} obligations of {p}")
        else:
            held = sorted(held_coins(led, p), key=lambda x: x.digest)
            r = rng.random()
            y = None
            if held and r < 0.45:
                x = rng.choice(held)
                y = plain_transfer(x, p, rng.choice(agents), f"pay{rng.randrange(2)}")
            elif held and r < 0.75:
                x = rng.choice(held)
                q = issuer(x)
                theirs = sorted(held_coins(led, q), key=lambda z: z.digest)
                anyone = sorted((z for z in led if not led.has_children(z)), key=lambda z: z.digest)
                r2 = rng.random()
                want = None
                if theirs and r2 < 0.4:
                    want = rng.choice(theirs)
                elif anyone and r2 < 0.6:
                    want = rng.choice(anyone)
                y = claim_transfer(x, p, want)
            if y is not None:
                v = rules.guard(c, p, y)
                if v:
                    chosen = ([y], v)
            if chosen is None:
                y = fresh_coin(p, led)
                chosen = ([y], rules.guard(c, p, y))
        ys, v = chosen
        for k, y in enumerate(ys):
            if k:
                v = rules.guard(c, p, y)
            if not v:
                raise AssertionError(f"correct step rejected: {v}")
            c = rules.extend_config(c, p, y)
            run.append(p, y, v.label, config=c)
    return run


def random_gcd_run(seed: int, n_agents: int = 4, steps: int = 40, follow_prob: float = 0.5) -> Run:
    """Random correct dissemination run under a fixed round-robin.

    In each turn an agent adds its initial block if missing, pulls every
    block it can, answers claims it knows of, sometimes follows someone,
    and then adds one coin block (fresh coin, payment or claim).
    """
    rng = random.Random(seed)
    rules = GcdRules()
    agents = agent_names(n_agents)
    c = rules.initial(agents)
    run = Run(rules, c)
    rnd = 0

    def do(p, b):
        nonlocal c
        v = rules.guard(c, p, b)
        if not v:
            raise AssertionError(f"correct step rejected: {p} {b} {v}")
        c = rules.extend_config(c, p, b)
        run.append(p, b, v.label, rnd, config=c)
        return len(run) >= steps

    offset = seed % n_agents
    order = agents[offset:] + agents[:offset]
    while len(run) < steps:
        for p in order:
            view = c[p]
            if view.max_index(p) == 0:
                if do(p, CoinBlock(p, 1, None)):
                    break
            stop = False
            while not stop:
                cand = pullable(c, p)
                if not cand:
                    break
                for b, _ in cand:
                    if rules.guard(c, p, b):
                        if do(p, b):
                            stop = True
                            break
            if stop:
                break
            for cl in pending_obligations(c, p):
                for b in respond_blocks(c, p, cl):
                    if do(p, b):
                        stop = True
                        break
                if stop:
                    break
            if stop:
                break
            others = [a for a in agents if a != p and not c[p].follows(a)]
            if others and rng.random() < follow_prob:
                if do(p, CoinBlock(rng.choice(others), 1, None)):
                    break
            if coin_move(c, p, rng, do):
                break
        rnd += 1
    run.end_round = rnd - 1
    return run


def coin_move(c, p, rng, do) -> bool:
    """One discretionary coin block by ``p``; falls back to a fresh coin."""
    view = c[p]
    i = view.max_index(p) + 1
    pals = friends_of(c, p)
    held = sorted(held_coins(view.ledger, p), key=lambda x: x.digest)
    options = []
    if held and pals:
        x = rng.choice(held)
        r = rng.random()
        if r < 0.5:
            options.append(make_transfer(x, Plain("pay"), p, rng.choice(pals)))
        elif issuer(x) != p and issuer(x) in pals:
            q = issuer(x)
            theirs = sorted(held_coins(c[q].ledger, q), key=lambda z: z.digest)
            want = rng.choice(theirs) if theirs and rng.random() < 0.5 else None
            options.append(make_transfer(x, Redeem(want.digest if want else None), p, q))
    options.append(make_object(p, f"coin_{i}"))
    for y in options:
        b = CoinBlock(p, i, y)
        if GcdRules().guard(c, p, b):
            return do(p, b)
    raise AssertionError("fresh coin must always be admissible")
