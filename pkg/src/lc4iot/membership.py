"""Overlay membership and quorum-gated genesis transactions.

A registry of ``n >= 3f + 1`` approved member keys decides by signed votes;
``2f + 1`` approvals accept a candidate, and a session is rejected as soon as
the remaining members could no longer supply that many approvals.

A sender with no key on chain gets a genesis transaction: the members vote on
the request, and on acceptance the system allocates a fresh key pair for the
requester. The rewritten transaction is sent from the allocated key and its
metadata gains a ``genesis`` envelope holding the requester key and the
approving votes (the quorum certificate).
"""
from __future__ import annotations

import base64
import enum
import struct
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping

from .crypto import KeyPair, Signature, keypair_generate, sha256, verify
from .errors import (
    AlreadyMember,
    BadSignature,
    ConfigError,
    DoubleVote,
    InsufficientNetwork,
    NotMember,
    QuorumFailed,
    SessionClosed,
)
from .ledger import Transaction, TxKind, encode_metadata, request_digest

_VOTE_DOMAIN = b"lc4iot/vote"
_ALLOC_DOMAIN = b"lc4iot/alloc"


class Behavior(enum.Enum):
    HONEST = "honest"
    FAULTY_REJECT = "faulty-reject"
    FAULTY_SILENT = "faulty-silent"


class SessionStatus(enum.Enum):
    OPEN = "open"
    ACCEPTED = "accepted"
    REJECTED = "rejected"


@dataclass(frozen=True)
class Voter:
    keypair: KeyPair
    behavior: Behavior = Behavior.HONEST


@dataclass(frozen=True)
class MemberRegistry:
    members: frozenset[bytes]
    f: int
    seed: int = 0
    voters: Mapping[bytes, Voter] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(self.members))
        if self.f < 0:
            raise ConfigError("f must be non-negative")
        stray = set(self.voters) - self.members
        if stray:
            raise ConfigError("voters must be registered members")

    @property
    def quorum(self) -> int:
        return 2 * self.f + 1

    @property
    def min_size(self) -> int:
        return 3 * self.f + 1

    def __contains__(self, pk: bytes) -> bool:
        return pk in self.members

    def __len__(self) -> int:
        return len(self.members)

    def admit(self, pk: bytes, voter: Voter | None = None) -> MemberRegistry:
        voters = dict(self.voters)
        if voter is not None:
            voters[pk] = voter
        return replace(self, members=self.members | {pk}, voters=voters)


def vote_message(context: bytes, candidate_pk: bytes, approve: bool) -> bytes:
    return _VOTE_DOMAIN + sha256(context) + candidate_pk + bytes([int(approve)])


@dataclass(frozen=True)
class Vote:
    member_pk: bytes
    approve: bool
    signature: bytes


@dataclass(frozen=True)
class VoteSession:
    candidate_pk: bytes
    electorate: frozenset[bytes]
    f: int
    context: bytes = b""
    votes: tuple[Vote, ...] = ()
    status: SessionStatus = SessionStatus.OPEN

    @property
    def approvals(self) -> int:
        return sum(v.approve for v in self.votes)

    @property
    def rejections(self) -> int:
        return sum(not v.approve for v in self.votes)

    def voted(self, pk: bytes) -> bool:
        return any(v.member_pk == pk for v in self.votes)


def _open_session(reg: MemberRegistry, candidate_pk: bytes, context: bytes) -> VoteSession:
    if len(reg) < reg.min_size:
        raise InsufficientNetwork(f"{len(reg)} members < 3f+1 = {reg.min_size}")
    return VoteSession(candidate_pk, reg.members, reg.f, context)


def propose_member(reg: MemberRegistry, candidate_pk: bytes, context: bytes = b"") -> VoteSession:
    if candidate_pk in reg:
        raise AlreadyMember(candidate_pk.hex())
    return _open_session(reg, candidate_pk, context)


def cast_vote(session: VoteSession, member_pk: bytes, approve: bool,
              signature: bytes | Signature) -> VoteSession:
    if session.status is not SessionStatus.OPEN:
        raise SessionClosed(session.status.value)
    if member_pk not in session.electorate:
        raise NotMember(member_pk.hex())
    if session.voted(member_pk):
        raise DoubleVote(member_pk.hex())
    sig = bytes(signature)
    if not verify(member_pk, vote_message(session.context, session.candidate_pk, approve), sig):
        raise BadSignature("vote signature")
    votes = session.votes + (Vote(member_pk, bool(approve), sig),)
    s = replace(session, votes=votes)
    quorum = 2 * s.f + 1
    if s.approvals >= quorum:
        return replace(s, status=SessionStatus.ACCEPTED)
    if s.rejections > len(s.electorate) - quorum:
        return replace(s, status=SessionStatus.REJECTED)
    return s


def sign_vote(voter: KeyPair, session: VoteSession, approve: bool) -> Signature:
    return voter.sign(vote_message(session.context, session.candidate_pk, approve))


def run_vote(reg: MemberRegistry, session: VoteSession, approve_honest: bool) -> VoteSession:
    """Let every simulated voter vote on ``session`` in key order.

    Honest voters cast ``approve_honest``; faulty-reject voters always reject;
    silent voters and members without a simulated voter abstain.
    """
    for pk in sorted(reg.voters):
        if session.status is not SessionStatus.OPEN:
            break
        voter = reg.voters[pk]
        if voter.behavior is Behavior.FAULTY_SILENT:
            continue
        approve = approve_honest if voter.behavior is Behavior.HONEST else False
        session = cast_vote(session, pk, approve, sign_vote(voter.keypair, session, approve))
    return session


# -- genesis transactions ----------------------------------------------------

def allocate_keypair(reg: MemberRegistry, request: bytes) -> KeyPair:
    """Fresh key for a genesis request, derived from the registry seed."""
    h = sha256(_ALLOC_DOMAIN + struct.pack(">Q", reg.seed) + request)
    return keypair_generate(int.from_bytes(h[:8], "big"))


def genesis_context(request: bytes, allocated_pk: bytes) -> bytes:
    return request + allocated_pk


def _b64(b: bytes) -> str:
    return base64.b64encode(b).decode()


@dataclass(frozen=True)
class GenesisResult:
    tx: Transaction
    session: VoteSession
    allocated: KeyPair = field(repr=False)


def admit_genesis(tx: Transaction, reg: MemberRegistry) -> GenesisResult:
    """Run the quorum vote for a genesis candidate; see :func:`genesis_transaction`."""
    if tx.kind is TxKind.GENESIS:
        raise ValueError("transaction is already a genesis transaction")
    if tx.meta is None:
        raise ValueError("genesis candidates need canonical JSON metadata")
    if len(reg) < reg.min_size:
        raise InsufficientNetwork(f"{len(reg)} members < 3f+1 = {reg.min_size}")
    request = request_digest(tx.sender_pk, tx.cloud_pk, tx.metadata)
    allocated = allocate_keypair(reg, request)
    session = _open_session(reg, tx.sender_pk, genesis_context(request, allocated.public_key))
    session = run_vote(reg, session, approve_honest=tx.sender_sig_valid())
    if session.status is not SessionStatus.ACCEPTED:
        raise QuorumFailed(
            f"{session.approvals} approvals < quorum {reg.quorum} ({session.status.value})"
        )
    cert = [[v.member_pk.hex(), _b64(v.signature)]
            for v in sorted(session.votes, key=lambda v: v.member_pk) if v.approve]
    meta = dict(tx.meta)
    meta["genesis"] = {"requester": tx.sender_pk.hex(), "cert": cert}
    rewritten = Transaction(allocated.public_key, tx.cloud_pk, tx.oracle_sig,
                            encode_metadata(meta)).signed(allocated)
    return GenesisResult(rewritten, session, allocated)


def genesis_transaction(tx: Transaction, reg: MemberRegistry) -> Transaction:
    """Rewrite an accepted genesis candidate as a genesis transaction.

    Raises :class:`InsufficientNetwork` below ``3f + 1`` members and
    :class:`QuorumFailed` when the vote does not reach ``2f + 1`` approvals.
    """
    return admit_genesis(tx, reg).tx


def verify_genesis_certificate(tx: Transaction, reg: MemberRegistry) -> bool:
    meta = tx.meta
    if meta is None or not isinstance(meta.get("genesis"), dict):
        return False
    try:
        env = meta["genesis"]
        requester = bytes.fromhex(env["requester"])
        cert = [(bytes.fromhex(pk), base64.b64decode(sig)) for pk, sig in env["cert"]]
    except (KeyError, TypeError, ValueError):
        return False
    original = {k: v for k, v in meta.items() if k != "genesis"}
    request = request_digest(requester, tx.cloud_pk, encode_metadata(original))
    msg = vote_message(genesis_context(request, tx.sender_pk), requester, True)
    signers = set()
    for pk, sig in cert:
        if pk not in reg or pk in signers or not verify(pk, msg, sig):
            return False
        signers.add(pk)
    return len(signers) >= reg.quorum


# -- fixtures ----------------------------------------------------------------

def registry_from_config(cfg: Mapping[str, Any]) -> MemberRegistry:
    """``{"f": 1, "seed": 0, "members": [{"seed": 1, "behavior": "honest"}, ...]}``."""
    try:
        voters = {}
        for entry in cfg["members"]:
            kp = keypair_generate(int(entry["seed"]))
            voters[kp.public_key] = Voter(kp, Behavior(entry.get("behavior", "honest")))
        return MemberRegistry(frozenset(voters), int(cfg["f"]), int(cfg.get("seed", 0)), voters)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad member config: {exc}") from exc


def honest_registry(seeds: Iterable[int], f: int, faulty: Mapping[int, Behavior] = {},
                    seed: int = 0) -> MemberRegistry:
    voters = {}
    for s in seeds:
        kp = keypair_generate(s)
        voters[kp.public_key] = Voter(kp, faulty.get(s, Behavior.HONEST))
    return MemberRegistry(frozenset(voters), f, seed, voters)
