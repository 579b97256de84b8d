import pytest
from hypothesis import given, settings, strategies as st

from grassroots.nft import DoublespendEvidence, Plain, evidence_for, make_object, make_transfer
from grassroots.sc import (ClaimStatus, CulpritNotUpstream, EvidenceInvalid, Outcome, ScRules, claim_reports,
                           claim_status, claim_transfer, claim_valid, coin_index, coin_name, fresh_coin,
                           is_coin, issuer, outstanding_claims, plain_transfer, recovery_claim, respond,
                           sc_guard, sc_order, settle_transfer, settles)
from grassroots.sc import _acceptable_now
from grassroots.sim.random_runs import random_sc_run

RULES = ScRules()


def start(*agents):
    return RULES.initial(agents or ("p", "q", "r", "s"))


def step(c, p, y):
    v = sc_guard(c, p, y)
    assert v, f"{p} {y!r}: {v.render()} {v.detail}"
    return RULES.extend_config(c, p, y)


def coin(c, p):
    x = fresh_coin(p, c.ledger)
    return step(c, p, x), x


def test_coin_names():
    assert coin_name(3) == "coin_3"
    assert coin_index("coin_12") == 12 and coin_index("coin7") == 7
    assert coin_index("coin_0") is None and coin_index("poem") is None
    x = make_object("p", "coin_1")
    assert is_coin(x) and issuer(make_transfer(x, "t", "p", "q")) == "p"


def test_fresh_coin_index_rules():
    c = start()
    c, x = coin(c, "p")
    assert x.payload == "coin_1"
    assert sc_guard(c, "p", make_object("p", "coin_1")).reason in ("BadFreshCoin", "Duplicate")
    assert sc_guard(c, "p", make_object("p", "poem")).reason == "NotCoin"
    assert sc_guard(c, "p", make_object("p", "coin_2"))


def _q_coin_held_by_p(c):
    c, x = coin(c, "q")
    y = plain_transfer(x, "q", "p")
    return step(c, "q", y), y


def test_claim_valid_and_invalid():
    c, held = _q_coin_held_by_p(start())
    cl = claim_transfer(held, "p", None)
    c = step(c, "p", cl)
    assert claim_valid(cl, c)
    assert claim_status(cl, c) is ClaimStatus.VALID_OUTSTANDING
    assert [o.nft for o in outstanding_claims(c)] == [cl]
    # a claim on a coin p already spent elsewhere is not valid
    c2, held2 = _q_coin_held_by_p(start())
    c2 = step(c2, "p", plain_transfer(held2, "p", "r"))
    stale = claim_transfer(held2, "p", None)
    assert not claim_valid(stale, RULES.extend_config(c2, "p", stale))


def test_degenerate_self_claim_flagged():
    c, x = coin(start(), "p")
    cl = claim_transfer(x, "p", None)
    c = step(c, "p", cl)
    assert claim_valid(cl, c)
    reps = claim_reports(c)
    assert len(reps) == 1 and reps[0].degenerate


def test_settle_case_i_requested_coin():
    c, held = _q_coin_held_by_p(start())
    c, r_coin = coin(c, "r")
    to_q = plain_transfer(r_coin, "r", "q")
    c = step(c, "r", to_q)
    cl = claim_transfer(held, "p", to_q)
    c = step(c, "p", cl)
    ans = settle_transfer(to_q, cl)
    assert settles(ans, cl, c) is Outcome.ACCEPTED
    assert respond(cl, c.ledger) == [ans]
    c = step(c, "q", ans)
    assert claim_status(cl, c) is ClaimStatus.SETTLED_ACCEPTED
    assert outstanding_claims(c) == []


def test_settle_case_ii_fresh():
    c, held = _q_coin_held_by_p(start())
    cl = claim_transfer(held, "p", None)
    c = step(c, "p", cl)
    new, ans = respond(cl, c.ledger)
    assert new.is_object and issuer(new) == "q"
    c = step(c, "q", new)
    assert settles(ans, cl, c) is Outcome.ACCEPTED
    c = step(c, "q", ans)
    assert claim_status(cl, c) is ClaimStatus.SETTLED_ACCEPTED


def test_settle_case_iii_rejected():
    c, held = _q_coin_held_by_p(start())
    c, r_coin = coin(c, "r")
    to_q = step(c, "r", plain_transfer(r_coin, "r", "q"))
    to_q_nft = plain_transfer(r_coin, "r", "q")
    c = to_q
    c = step(c, "q", plain_transfer(to_q_nft, "q", "s"))  # q no longer holds the requested coin
    cl = claim_transfer(held, "p", to_q_nft)
    c = step(c, "p", cl)
    back = settle_transfer(cl, cl)
    assert settles(back, cl, c) is Outcome.REJECTED
    assert respond(cl, c.ledger) == [back]
    c = step(c, "q", back)
    assert claim_status(cl, c) is ClaimStatus.SETTLED_REJECTED


def test_not_settling_plain_transfer():
    c, held = _q_coin_held_by_p(start())
    cl = claim_transfer(held, "p", None)
    c = step(c, "p", cl)
    c, x = coin(c, "q")
    assert settles(plain_transfer(x, "q", "p"), cl, c) is Outcome.NOT_SETTLING


def test_freeze_rule():
    c, held = _q_coin_held_by_p(start())
    c, r_coin = coin(c, "r")
    to_q = plain_transfer(r_coin, "r", "q")
    c = step(c, "r", to_q)
    cl = claim_transfer(held, "p", to_q)
    c = step(c, "p", cl)
    # q may not send the requested coin to a third party while the claim is open
    v = sc_guard(c, "q", plain_transfer(to_q, "q", "s"))
    assert not v and v.reason == "CoinFrozen"
    # but may settle with it
    assert sc_guard(c, "q", settle_transfer(to_q, cl))


def test_unclaimed_transfer_admitted():
    c, held = _q_coin_held_by_p(start())
    assert sc_guard(c, "p", plain_transfer(held, "p", "r"))


def test_not_holder():
    c, held = _q_coin_held_by_p(start())
    # r cannot act as the sender of a transfer p signed
    assert sc_guard(c, "r", make_transfer(held, Plain("x"), "p", "r")).reason == "BadObjectShape"
    c = step(c, "p", plain_transfer(held, "p", "r"))
    assert sc_guard(c, "p", plain_transfer(held, "p", "s")).reason == "NotHolder"


def test_rival_claims_one_accepted():
    # two claims request the same r-coin held by q; after the lower-hash one is
    # accepted the other becomes invalid and is answered by returning its coin
    c, h1 = _q_coin_held_by_p(start())
    c, x = coin(c, "q")
    h2 = plain_transfer(x, "q", "s")
    c = step(c, "q", h2)
    c, r_coin = coin(c, "r")
    want = plain_transfer(r_coin, "r", "q")
    c = step(c, "r", want)
    a = claim_transfer(h1, "p", want)
    b = claim_transfer(h2, "s", want)
    c = step(c, "p", a)
    c = step(c, "s", b)
    first, second = sorted([a, b], key=lambda z: z.digest)
    for y in respond(first, c.ledger):
        c = step(c, "q", y)
    assert claim_status(first, c) is ClaimStatus.SETTLED_ACCEPTED
    assert claim_status(second, c) is ClaimStatus.INVALID
    for y in respond(second, c.ledger):
        c = step(c, "q", y)
    assert claim_status(second, c) is ClaimStatus.SETTLED_REJECTED


def _forked_setup():
    # p pays u a coin; u pays it to both r and s; r passes its branch to q
    x = make_object("p", "coin_1")
    pu = make_transfer(x, "t", "p", "u")
    ur = make_transfer(pu, "t", "u", "r")
    us = make_transfer(pu, "t", "u", "s")
    rq = make_transfer(ur, "t", "r", "q")
    return x, pu, ur, us, rq


def test_recovery_claim_produced():
    x, pu, ur, us, rq = _forked_setup()
    ev = evidence_for(rq, us)
    assert ev.culprit == "u"
    y = recovery_claim("q", "r", rq, ev)
    assert y.recipient == "r" and y.sender == "q"


def test_recovery_culprit_is_payee():
    x, pu, ur, us, rq = _forked_setup()
    qa = make_transfer(rq, "t", "q", "a")
    qb = make_transfer(rq, "t", "q", "b")
    back = make_transfer(qa, "t", "a", "q")
    with pytest.raises(CulpritNotUpstream):
        recovery_claim("q", "a", back, DoublespendEvidence(qa, qb, "q"))


def test_recovery_culprit_downstream_of_payer():
    # the payer r itself forked after receiving: the evidence names r, not someone upstream
    x, pu, ur, us, rq = _forked_setup()
    rz = make_transfer(ur, "t", "r", "z")
    with pytest.raises(CulpritNotUpstream):
        recovery_claim("q", "r", rq, DoublespendEvidence(rq, rz, "r"))


def test_recovery_evidence_other_object():
    x, pu, ur, us, rq = _forked_setup()
    y = make_object("p", "coin_2")
    ya = make_transfer(y, "t", "p", "a")
    yb = make_transfer(y, "t", "p", "b")
    with pytest.raises(EvidenceInvalid):
        recovery_claim("q", "r", rq, DoublespendEvidence(ya, yb, "p"))


def test_sc_order():
    c0 = start("p", "q")
    c1, _ = coin(c0, "p")
    assert sc_order(c0, c1) and sc_order(c1, c1)
    assert not sc_order(c1, c0)
    x = c1["p"][0]
    bad = RULES.extend_config(RULES.extend_config(c1, "p", make_transfer(x, "a", "p", "q")), "p",
                              make_transfer(x, "b", "p", "q"))
    assert not sc_order(c1, bad)


# -- properties over random correct runs -------------------------------------------

@settings(max_examples=40)
@given(st.integers(0, 100_000))
def test_random_runs_consistent_complete_monotone(seed):
    run = random_sc_run(seed, 4, 25)
    cs = run.configs
    for a, b in zip(cs, cs[1:]):
        assert b.ledger.is_consistent() and b.ledger.is_complete()
        assert sc_order(a, b)


@settings(max_examples=40)
@given(st.integers(0, 100_000))
def test_freeze_soundness_and_single_acceptance(seed):
    run = random_sc_run(seed, 4, 30)
    cs = run.configs
    for i, st_ in enumerate(run.steps):
        y = st_.delta
        before = cs[i]
        if y.is_object:
            continue
        x = y.payload
        # a coin requested by a valid outstanding claim addressed to its holder,
        # which the holder could accept now, moves only to settle one
        for rc in outstanding_claims(before):
            if rc.requested is None or rc.requested != x or rc.nft.recipient != y.sender:
                continue
            if _acceptable_now(rc.nft, before.ledger):
                assert settles(y, rc.nft, before) is Outcome.ACCEPTED or any(
                    settles(y, o.nft, before) is Outcome.ACCEPTED for o in outstanding_claims(before))
    led = run.final.ledger
    for cl in led.claims():
        accepted = [s for s in led.settlements_of(cl) if led.outcome(s) is Outcome.ACCEPTED]
        assert len(accepted) <= 1
