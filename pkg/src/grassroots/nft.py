"""NFT value types: objects, transfers, history, provenance and consistency.

An NFT records a transfer of a payload with metadata from a sender to a
recipient, signed by the sender.  An object NFT has a string payload and
the reserved metadata ``initial``; a transfer NFT has another NFT as its
payload.  In memory transfers hold a reference to their payload NFT
(shared, never copied); serialized forms refer to the payload by digest.

Identity is a SHA-256 digest over a length-prefixed canonical encoding of
(payload or payload digest, metadata, sender, recipient).  The signature is
not part of the identity.
"""

from __future__ import annotations

import hashlib
import hmac
import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol, Union

from .mts import AgentId, Config, Rules, Verdict

log = logging.getLogger(__name__)

INITIAL = "initial"


class NftError(Exception):
    pass


class SignerUnavailable(NftError):
    pass


class NotCurrentRecipient(NftError):
    pass


class ReservedMetadata(NftError):
    pass


class InconsistentSet(NftError):
    pass


class ObjectUnknown(NftError):
    pass


# -- metadata ----------------------------------------------------------------

def _frame(*parts: bytes) -> bytes:
    return b"".join(len(p).to_bytes(4, "big") + p for p in parts)


@dataclass(frozen=True)
class Plain:
    text: str

    def canonical(self) -> bytes:
        return _frame(b"plain", self.text.encode())

    def to_json(self):
        return {"plain": self.text}


@dataclass(frozen=True)
class Redeem:
    """Redemption claim marker; ``requested`` is the digest of the coin asked for, None for a fresh coin."""
    requested: Optional[str] = None

    def canonical(self) -> bytes:
        return _frame(b"redeem", (self.requested or "").encode(), b"1" if self.requested else b"0")

    def to_json(self):
        return {"redeem": self.requested}


@dataclass(frozen=True)
class Settle:
    """Marks a transfer as the response to the claim with digest ``claim``."""
    claim: str

    def canonical(self) -> bytes:
        return _frame(b"settle", self.claim.encode())

    def to_json(self):
        return {"settle": self.claim}


@dataclass(frozen=True)
class Evidence:
    """Recovery demand backed by a doublespend proof (fork digests and culprit)."""
    fork_a: str
    fork_b: str
    culprit: AgentId

    def canonical(self) -> bytes:
        return _frame(b"evidence", self.fork_a.encode(), self.fork_b.encode(), self.culprit.encode())

    def to_json(self):
        return {"evidence": [self.fork_a, self.fork_b, self.culprit]}


Metadata = Union[Plain, Redeem, Settle, Evidence]
INITIAL_META = Plain(INITIAL)


def metadata_from_json(obj) -> Metadata:
    if "plain" in obj:
        return Plain(obj["plain"])
    if "redeem" in obj:
        return Redeem(obj["redeem"])
    if "settle" in obj:
        return Settle(obj["settle"])
    if "evidence" in obj:
        a, b, c = obj["evidence"]
        return Evidence(a, b, c)
    raise ValueError(f"unknown metadata {obj!r}")


# -- signers -----------------------------------------------------------------

class Signer(Protocol):
    def sign(self, agent: AgentId, message: bytes) -> bytes: ...

    def verify(self, agent: AgentId, message: bytes, signature: bytes) -> bool: ...


class MockSigner:
    """Deterministic HMAC attestation keyed per agent.

    Keys are derived from a shared secret, so anyone holding the secret can
    forge; it stands in for real signatures in simulation.  When ``agents``
    is given, only those agents can sign.
    """

    def __init__(self, secret: bytes = b"grassroots-sim", agents: Iterable[AgentId] | None = None):
        self._secret = secret
        self._agents = None if agents is None else frozenset(agents)

    def _key(self, agent: AgentId) -> bytes:
        return hashlib.sha256(self._secret + b"/" + agent.encode()).digest()

    def sign(self, agent: AgentId, message: bytes) -> bytes:
        if self._agents is not None and agent not in self._agents:
            raise SignerUnavailable(f"no key for agent {agent!r}")
        return hmac.new(self._key(agent), b"agent:" + agent.encode() + b"|" + message, hashlib.sha256).digest()

    def verify(self, agent: AgentId, message: bytes, signature: bytes) -> bool:
        expect = hmac.new(self._key(agent), b"agent:" + agent.encode() + b"|" + message, hashlib.sha256).digest()
        return hmac.compare_digest(expect, signature)


class Ed25519Signer:
    """Real signatures via the optional ``cryptography`` package."""

    def __init__(self, keys: dict | None = None):
        from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey
        self._new = Ed25519PrivateKey.generate
        self._keys = dict(keys or {})
        self._public = {a: k.public_key() for a, k in self._keys.items()}

    def add_agent(self, agent: AgentId) -> None:
        key = self._new()
        self._keys[agent] = key
        self._public[agent] = key.public_key()

    def sign(self, agent: AgentId, message: bytes) -> bytes:
        if agent not in self._keys:
            raise SignerUnavailable(f"no key for agent {agent!r}")
        return self._keys[agent].sign(message)

    def verify(self, agent: AgentId, message: bytes, signature: bytes) -> bool:
        from cryptography.exceptions import InvalidSignature
        pub = self._public.get(agent)
        if pub is None:
            return False
        try:
            pub.verify(signature, message)
            return True
        except InvalidSignature:
            return False


DEFAULT_SIGNER = MockSigner()


# -- the NFT value type ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Nft:
    payload: Union[str, "Nft"]
    metadata: Metadata
    sender: AgentId
    recipient: AgentId
    signature: bytes = b""
    digest: str = field(default="", repr=False)
    provenance: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if isinstance(self.payload, Nft):
            inner = b"N" + bytes.fromhex(self.payload.digest)
            prov = self.payload.provenance + (self.recipient,)
        else:
            inner = b"S" + self.payload.encode()
            prov = (self.recipient,)
        body = _frame(b"nft", inner, self.metadata.canonical(), self.sender.encode(), self.recipient.encode())
        object.__setattr__(self, "digest", hashlib.sha256(body).hexdigest())
        object.__setattr__(self, "provenance", prov)

    def __eq__(self, other):
        return isinstance(other, Nft) and other.digest == self.digest

    def __hash__(self):
        return hash(self.digest)

    def __repr__(self):
        kind = "obj" if self.is_object else "xfer"
        return f"Nft<{kind} {self.short} {self.sender}->{self.recipient} {self.metadata}>"

    @property
    def short(self) -> str:
        return self.digest[:10]

    @property
    def is_object(self) -> bool:
        return not isinstance(self.payload, Nft)

    @property
    def depth(self) -> int:
        return len(self.provenance)

    @property
    def object(self) -> "Nft":
        x = self
        while isinstance(x.payload, Nft):
            x = x.payload
        return x

    @property
    def creator(self) -> AgentId:
        return self.provenance[0]

    def signing_bytes(self) -> bytes:
        return bytes.fromhex(self.digest)

    def well_formed(self) -> bool:
        if self.is_object:
            return self.metadata == INITIAL_META and self.sender == self.recipient
        return self.metadata != INITIAL_META and self.payload.recipient == self.sender

    def to_json(self) -> dict:
        return {
            "digest": self.digest,
            "payload": self.payload.digest if isinstance(self.payload, Nft) else None,
            "object": self.payload if isinstance(self.payload, str) else None,
            "metadata": self.metadata.to_json(),
            "sender": self.sender,
            "recipient": self.recipient,
            "signature": self.signature.hex(),
        }


def nft_from_json(obj: dict, resolve) -> Nft:
    """Rebuild an NFT; ``resolve(digest)`` must return the payload NFT."""
    payload = obj["object"] if obj["payload"] is None else resolve(obj["payload"])
    x = Nft(payload, metadata_from_json(obj["metadata"]), obj["sender"], obj["recipient"],
            bytes.fromhex(obj["signature"]))
    if x.digest != obj["digest"]:
        raise ValueError(f"digest mismatch for {obj['digest']}")
    return x


def _signed(payload, metadata, sender, recipient, signer: Signer | None) -> Nft:
    unsigned = Nft(payload, metadata, sender, recipient)
    sig = (signer or DEFAULT_SIGNER).sign(sender, unsigned.signing_bytes())
    return Nft(payload, metadata, sender, recipient, sig)


def make_object(creator: AgentId, payload: str, signer: Signer | None = None) -> Nft:
    return _signed(payload, INITIAL_META, creator, creator, signer)


def make_transfer(x: Nft, s: Metadata | str, sender: AgentId, recipient: AgentId,
                  signer: Signer | None = None) -> Nft:
    meta = Plain(s) if isinstance(s, str) else s
    if meta == INITIAL_META:
        raise ReservedMetadata("metadata 'initial' is reserved for objects")
    if x.recipient != sender:
        raise NotCurrentRecipient(f"{sender} is not the recipient of {x!r}")
    return _signed(x, meta, sender, recipient, signer)


def verify_signature(x: Nft, signer: Signer | None = None) -> bool:
    return (signer or DEFAULT_SIGNER).verify(x.sender, x.signing_bytes(), x.signature)


def history(x: Nft) -> tuple[Nft, ...]:
    out = []
    while True:
        out.append(x)
        if x.is_object:
            break
        x = x.payload
    return tuple(reversed(out))


def provenance(x: Nft) -> tuple[AgentId, ...]:
    return x.provenance


def _is_prefix(a: tuple, b: tuple) -> bool:
    return len(a) <= len(b) and b[:len(a)] == a


def consistent(a: Nft, b: Nft) -> bool:
    if a.object != b.object:
        return True
    return _is_prefix(a.provenance, b.provenance) or _is_prefix(b.provenance, a.provenance)


@dataclass(frozen=True)
class DoublespendEvidence:
    fork_a: Nft
    fork_b: Nft
    culprit: AgentId

    def to_json(self) -> dict:
        return {"fork_a": self.fork_a.digest, "fork_b": self.fork_b.digest, "culprit": self.culprit}


def first_divergence(a: Nft, b: Nft) -> int:
    """Index of the first differing provenance entry of two inconsistent same-object NFTs."""
    pa, pb = a.provenance, b.provenance
    for k, (u, v) in enumerate(zip(pa, pb)):
        if u != v:
            return k
    raise ValueError("provenances are prefix-related")


def evidence_for(a: Nft, b: Nft) -> DoublespendEvidence | None:
    if consistent(a, b):
        return None
    k = first_divergence(a, b)
    # both transfers at position k are signed by the common recipient at k-1
    culprit = history(a)[k].sender
    return DoublespendEvidence(a, b, culprit)


def check_evidence(ev: DoublespendEvidence) -> bool:
    if ev.fork_a.object != ev.fork_b.object or consistent(ev.fork_a, ev.fork_b):
        return False
    k = first_divergence(ev.fork_a, ev.fork_b)
    ha, hb = history(ev.fork_a), history(ev.fork_b)
    return ha[k].sender == hb[k].sender == ev.culprit


def group_by_object(xs: Iterable[Nft]) -> dict[Nft, list[Nft]]:
    groups: dict[Nft, list[Nft]] = {}
    for x in xs:
        groups.setdefault(x.object, []).append(x)
    return groups


def all_doublespends(xs: Iterable[Nft]) -> list[DoublespendEvidence]:
    out = []
    for obj, items in sorted(group_by_object(xs).items(), key=lambda kv: kv[0].digest):
        items = sorted(items, key=lambda x: x.digest)
        for a, b in itertools.combinations(items, 2):
            ev = evidence_for(a, b)
            if ev is not None:
                out.append(ev)
    return out


def find_doublespend(xs: Iterable[Nft]) -> DoublespendEvidence | None:
    for obj, items in sorted(group_by_object(xs).items(), key=lambda kv: kv[0].digest):
        if len(items) < 2:
            continue
        items = sorted(items, key=lambda x: x.digest)
        for a, b in itertools.combinations(items, 2):
            ev = evidence_for(a, b)
            if ev is not None:
                return ev
    return None


def is_consistent(xs: Iterable[Nft]) -> bool:
    return find_doublespend(xs) is None


def holder(obj: Nft, xs: Iterable[Nft]) -> AgentId:
    items = [x for x in xs if x.object == obj.object]
    if not items:
        raise ObjectUnknown(f"no item of {obj!r}")
    longest = max(items, key=lambda x: x.depth)
    for x in items:
        if not _is_prefix(x.provenance, longest.provenance):
            raise InconsistentSet(f"fork in object {obj.short}")
    return longest.recipient


def is_complete(xs: Iterable[Nft]) -> bool:
    xs = list(xs)
    have = {x.digest for x in xs}
    for x in xs:
        y = x
        while not y.is_object:
            y = y.payload
            if y.digest not in have:
                return False
    return True


# -- the NT protocol ---------------------------------------------------------

def _union(config: Config) -> list[Nft]:
    seen: dict[str, Nft] = {}
    for _, seq in config.items():
        for x in seq:
            seen.setdefault(x.digest, x)
    return list(seen.values())


def nt_guard(config: Config, actor: AgentId, y: Nft, signer: Signer | None = None) -> Verdict:
    """Correctness of the actor appending ``y`` to its sequence of NFTs."""
    if not isinstance(y, Nft):
        return Verdict.reject("BadObjectShape", "not an NFT")
    if y.sender != actor or not y.well_formed():
        return Verdict.reject("BadObjectShape", "sender or shape mismatch")
    if signer is not None and not verify_signature(y, signer):
        return Verdict.reject("BadSignature")
    union = _union(config)
    digests = {x.digest for x in union}
    if y.digest in digests:
        return Verdict.reject("Duplicate")
    if y.is_object:
        if any(x.object == y for x in union):
            return Verdict.reject("BadObjectShape", "object already exists")
        return Verdict.admit("create")
    x = y.payload
    if x.digest not in digests:
        return Verdict.reject("NotHolder", "payload unknown")
    try:
        h = holder(x.object, union)
    except InconsistentSet:
        return Verdict.reject("NotHolder", "object is forked")
    if h != actor:
        return Verdict.reject("NotHolder", f"holder is {h}")
    if any(z.object == x.object and z.depth > x.depth for z in union):
        return Verdict.reject("NotHolder", "payload is not the latest item")
    return Verdict.admit("transfer")


class NtRules(Rules):
    """Generic NFT trade: local states are append-only NFT sequences."""

    initial_state = ()

    def __init__(self, signer: Signer | None = None):
        self.signer = signer

    def extend(self, state, delta):
        return state + (delta,)

    def delta(self, before, after):
        if len(after) == len(before) + 1 and after[:-1] == before:
            return after[-1]
        return None

    def guard(self, config, actor, delta):
        return nt_guard(config, actor, delta, self.signer)

    def liveness(self):
        from .mts import LivenessPartition
        return LivenessPartition(lambda c, a, d: [("agent", a)], lambda c: [])
