import itertools

import pytest
from hypothesis import given, strategies as st

from grassroots.mts import Config, Run
from grassroots.nft import (INITIAL, DoublespendEvidence, InconsistentSet, MockSigner, Nft, NotCurrentRecipient,
                            NtRules, ObjectUnknown, Plain, Redeem, ReservedMetadata, SignerUnavailable,
                            check_evidence, consistent, evidence_for, find_doublespend, history, holder,
                            is_complete, is_consistent, make_object, make_transfer, nft_from_json,
                            nt_guard, provenance, verify_signature)
from grassroots.sim.random_runs import random_nt_run


def chain(*agents, payload="coin_1"):
    x = make_object(agents[0], payload)
    out = [x]
    for a, b in zip(agents, agents[1:]):
        x = make_transfer(x, Plain("t"), a, b)
        out.append(x)
    return out


def test_make_object_coin():
    x = make_object("p", "coin_1")
    assert x.is_object and x.sender == x.recipient == "p"
    assert provenance(x) == ("p",)
    assert x.metadata.text == INITIAL


def test_make_object_empty_and_plain_payloads():
    assert make_object("p", "").is_object
    assert make_object("p", "poem-text").payload == "poem-text"


def test_make_object_unknown_signer():
    with pytest.raises(SignerUnavailable):
        make_object("z", "coin_1", MockSigner(agents=["p"]))


def test_transfer_with_purchase_order():
    x = make_object("p", "coin_1")
    y = make_transfer(x, "PO 157", "p", "q")
    assert provenance(y) == ("p", "q")
    assert y.metadata == Plain("PO 157")


def test_transfer_errors():
    x = make_object("p", "coin_1")
    with pytest.raises(NotCurrentRecipient):
        make_transfer(x, "pay", "q", "r")
    with pytest.raises(ReservedMetadata):
        make_transfer(x, INITIAL, "p", "q")


def test_history_by_hand():
    x, y, z = chain("p", "q", "r")
    assert history(x) == (x,)
    h = history(z)
    # unfold payload nesting by hand
    assert h == (z.payload.payload, z.payload, z)
    assert h[0] is x or h[0] == x
    assert provenance(h[-1]) == provenance(z) == ("p", "q", "r")


def test_identity_by_content():
    a = chain("p", "q")[1]
    b = chain("p", "q")[1]
    assert a == b and hash(a) == hash(b) and a is not b
    assert make_transfer(a.payload, "other", "p", "q") != a


def test_signatures_verify_and_detect_tamper():
    x = make_object("p", "coin_1")
    assert verify_signature(x)
    forged = Nft(x.payload, x.metadata, "p", "p", b"\x00" * 32)
    assert not verify_signature(forged)


def test_json_round_trip():
    xs = chain("p", "q", "r")
    by = {}
    for x in xs:
        back = nft_from_json(x.to_json(), lambda d: by[d])
        assert back == x
        by[x.digest] = back


def test_consistent_cases():
    x, pq = chain("p", "q")
    pqr = make_transfer(pq, "t", "q", "r")
    pr = make_transfer(x, "t", "p", "r")
    assert consistent(pq, pqr)
    assert not consistent(pq, pr)
    assert consistent(pq, make_object("r", "coin_1"))


def test_find_doublespend_culprit():
    x = make_object("p", "coin_1")
    ev = find_doublespend([x, make_transfer(x, "a", "p", "q"), make_transfer(x, "b", "p", "r")])
    assert ev is not None and ev.culprit == "p"
    assert check_evidence(ev)
    assert find_doublespend(chain("p", "q", "r")) is None


def test_three_way_fork():
    x = make_object("p", "coin_1")
    forks = [make_transfer(x, "t", "p", a) for a in ("q", "r", "s")]
    ev = find_doublespend([x] + forks)
    assert ev.culprit == "p"
    for a, b in itertools.combinations(forks, 2):
        assert evidence_for(a, b).culprit == "p"


def test_downstream_culprit():
    x, pq = chain("p", "q")
    a = make_transfer(pq, "t", "q", "r")
    b = make_transfer(pq, "t", "q", "s")
    ev = evidence_for(make_transfer(a, "t", "r", "p"), b)
    assert ev.culprit == "q"


def test_bad_evidence_rejected():
    x, pq = chain("p", "q")
    assert not check_evidence(DoublespendEvidence(x, pq, "p"))


def test_holder():
    x, pq, pqr = chain("p", "q", "r")
    assert holder(x, [x]) == "p"
    assert holder(x, [x, pq, pqr]) == "r"
    assert holder(x, [pqr]) == "r"  # incomplete but consistent
    with pytest.raises(InconsistentSet):
        holder(x, [x, pq, make_transfer(x, "t", "p", "s")])
    with pytest.raises(ObjectUnknown):
        holder(make_object("z", "coin_9"), [x])


def test_is_complete():
    x, pq = chain("p", "q")
    assert is_complete([x, pq])
    assert not is_complete([pq])
    assert is_complete([])


def _nt_config(*seqs):
    return Config.from_map({a: tuple(s) for a, s in seqs})


def test_nt_guard_cases():
    x = make_object("p", "poem")
    c0 = _nt_config(("p", ()), ("q", ()))
    assert nt_guard(c0, "p", x).admitted
    c1 = _nt_config(("p", (x,)), ("q", ()))
    y = make_transfer(x, "gift", "p", "q")
    assert nt_guard(c1, "p", y).admitted
    # q never held it
    z = make_object("q", "other")
    c_q = _nt_config(("p", (x,)), ("q", ()))
    bad = Nft(x, Plain("steal"), "q", "r", MockSigner().sign("q", b""))
    assert nt_guard(c_q, "q", bad).reason in ("NotHolder", "BadObjectShape")
    # p sent it away, then tries again
    c2 = _nt_config(("p", (x, y)), ("q", ()))
    again = make_transfer(x, "again", "p", "r")
    assert nt_guard(c2, "p", again).reason == "NotHolder"
    assert z.is_object


@given(st.integers(0, 10_000))
def test_nt_runs_consistent_and_complete(seed):
    run = random_nt_run(seed, 3, 30)
    for c in run.configs:
        union = [x for _, seq in c.items() for x in seq]
        assert is_consistent(union)
        assert is_complete(union)


# -- brute-force oracle for doublespend detection ---------------------------------

@st.composite
def nft_forest(draw):
    agents = ["p", "q", "r", "s"]
    objs = [make_object(a, f"coin_{i}") for i, a in enumerate(draw(st.lists(st.sampled_from(agents),
                                                                            min_size=1, max_size=2)), 1)]
    items = list(objs)
    for _ in range(draw(st.integers(0, 6))):
        parent = draw(st.sampled_from(items))
        to = draw(st.sampled_from(agents))
        items.append(make_transfer(parent, Plain(str(len(items))), parent.recipient, to))
    keep = draw(st.lists(st.sampled_from(items), unique=True, max_size=8))
    return keep


@given(nft_forest())
def test_find_doublespend_matches_pairwise(xs):
    pairwise = all(consistent(a, b) for a, b in itertools.combinations(xs, 2))
    ev = find_doublespend(xs)
    assert (ev is None) == pairwise
    if ev is not None:
        assert check_evidence(ev)
        assert ev.fork_a in xs and ev.fork_b in xs


@given(nft_forest(), st.sampled_from(["p", "q", "r", "s"]))
def test_transfer_extends_history(xs, to):
    for x in xs:
        y = make_transfer(x, Redeem(None), x.recipient, to)
        assert history(y) == history(x) + (y,)
        assert provenance(y) == provenance(x) + (to,)
