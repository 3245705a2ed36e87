import itertools
from dataclasses import replace

import pytest

from lc4iot.crypto import keypair_generate
from lc4iot.errors import (
    AlreadyMember,
    BadSignature,
    DoubleVote,
    InsufficientNetwork,
    NotMember,
    QuorumFailed,
    SessionClosed,
)
from lc4iot.ledger import TxKind, encode_metadata, make_transaction
from lc4iot.membership import (
    Behavior,
    MemberRegistry,
    SessionStatus,
    admit_genesis,
    cast_vote,
    genesis_transaction,
    honest_registry,
    propose_member,
    registry_from_config,
    sign_vote,
    verify_genesis_certificate,
)

CANDIDATE = keypair_generate(4242)


def registry(n, f, faulty=None, seed=0):
    return honest_registry(range(1, n + 1), f, faulty or {}, seed=seed)


def keys(reg):
    return sorted(reg.voters)


def vote(session, reg, pk, approve):
    return cast_vote(session, pk, approve, sign_vote(reg.voters[pk].keypair, session, approve))


def test_quorum_arithmetic():
    reg = registry(7, 2)
    assert reg.quorum == 5 and reg.min_size == 7


def test_propose_open():
    s = propose_member(registry(4, 1), CANDIDATE.public_key)
    assert s.status is SessionStatus.OPEN and s.votes == ()


def test_propose_insufficient():
    with pytest.raises(InsufficientNetwork):
        propose_member(registry(3, 1), CANDIDATE.public_key)


def test_propose_existing():
    reg = registry(4, 1)
    with pytest.raises(AlreadyMember):
        propose_member(reg, keys(reg)[0])


def expected_status(n, f, votes):
    """Independent rule: accept at 2f+1 approvals, reject once they become unreachable."""
    approvals = sum(votes)
    remaining = n - len(votes)
    if approvals >= 2 * f + 1:
        return SessionStatus.ACCEPTED
    if approvals + remaining < 2 * f + 1:
        return SessionStatus.REJECTED
    return SessionStatus.OPEN


def test_vote_enumeration_f1():
    reg = registry(4, 1)
    members = keys(reg)
    for order in itertools.permutations(members):
        for verdicts in itertools.product((True, False), repeat=4):
            s = propose_member(reg, CANDIDATE.public_key)
            cast = []
            for pk, v in zip(order, verdicts):
                if s.status is not SessionStatus.OPEN:
                    break
                s = vote(s, reg, pk, v)
                cast.append(v)
                assert s.status is expected_status(4, 1, cast)


def test_three_approvals_accept():
    reg = registry(4, 1)
    s = propose_member(reg, CANDIDATE.public_key)
    for pk in keys(reg)[:3]:
        s = vote(s, reg, pk, True)
    assert s.status is SessionStatus.ACCEPTED


def test_two_rejections_reject():
    reg = registry(4, 1)
    s = propose_member(reg, CANDIDATE.public_key)
    for pk in keys(reg)[:2]:
        s = vote(s, reg, pk, False)
    assert s.status is SessionStatus.REJECTED


def test_vote_errors():
    reg = registry(4, 1)
    s = propose_member(reg, CANDIDATE.public_key)
    pk = keys(reg)[0]
    s1 = vote(s, reg, pk, True)
    with pytest.raises(DoubleVote):
        vote(s1, reg, pk, False)
    outsider = keypair_generate(999)
    with pytest.raises(NotMember):
        cast_vote(s, outsider.public_key, True, sign_vote(outsider, s, True))
    with pytest.raises(BadSignature):
        cast_vote(s, pk, True, sign_vote(reg.voters[pk].keypair, s, False))
    closed = replace(s, status=SessionStatus.ACCEPTED)
    with pytest.raises(SessionClosed):
        vote(closed, reg, pk, True)


def test_session_is_immutable():
    reg = registry(4, 1)
    s = propose_member(reg, CANDIDATE.public_key)
    vote(s, reg, keys(reg)[0], True)
    assert s.votes == ()


def test_admit_is_monotone():
    reg = registry(4, 1)
    bigger = reg.admit(CANDIDATE.public_key)
    assert reg.members < bigger.members and CANDIDATE.public_key not in reg


# -- genesis -----------------------------------------------------------------

def candidate_tx(valid=True):
    tx = make_transaction(CANDIDATE, b"\x05" * 32, {"register": "lot-9"}, b"blob")
    if not valid:
        tx = replace(tx, sender_sig=bytes(64))
    return tx


def test_genesis_happy_path():
    reg = registry(4, 1)
    tx = candidate_tx()
    g = admit_genesis(tx, reg)
    assert g.tx.kind is TxKind.GENESIS
    assert g.tx.sender_pk == g.allocated.public_key != CANDIDATE.public_key
    assert g.tx.meta["genesis"]["requester"] == CANDIDATE.public_key.hex()
    assert g.tx.meta["register"] == "lot-9"
    assert g.tx.oracle_sig == tx.oracle_sig
    assert g.tx.sender_sig_valid()
    assert verify_genesis_certificate(g.tx, reg)
    assert genesis_transaction(tx, reg) == g.tx


def test_genesis_deterministic_allocation():
    assert genesis_transaction(candidate_tx(), registry(4, 1)) == \
        genesis_transaction(candidate_tx(), registry(4, 1))
    assert genesis_transaction(candidate_tx(), registry(4, 1, seed=1)).sender_pk != \
        genesis_transaction(candidate_tx(), registry(4, 1, seed=0)).sender_pk


def test_genesis_two_faulty_fails():
    reg = registry(4, 1, {1: Behavior.FAULTY_REJECT, 2: Behavior.FAULTY_REJECT})
    with pytest.raises(QuorumFailed):
        genesis_transaction(candidate_tx(), reg)


def test_genesis_one_faulty_accepts():
    reg = registry(4, 1, {3: Behavior.FAULTY_REJECT})
    g = admit_genesis(candidate_tx(), reg)
    assert g.session.approvals == 3 and g.session.rejections == 1


def test_genesis_silent_members():
    reg = registry(4, 1, {1: Behavior.FAULTY_SILENT})
    assert admit_genesis(candidate_tx(), reg).session.approvals == 3
    reg2 = registry(4, 1, {1: Behavior.FAULTY_SILENT, 2: Behavior.FAULTY_SILENT})
    with pytest.raises(QuorumFailed):
        genesis_transaction(candidate_tx(), reg2)


def test_genesis_bad_signature_rejected_by_honest():
    with pytest.raises(QuorumFailed):
        genesis_transaction(candidate_tx(valid=False), registry(4, 1))


def test_genesis_insufficient_network():
    with pytest.raises(InsufficientNetwork):
        genesis_transaction(candidate_tx(), registry(3, 1))


def test_certificate_tampering():
    reg = registry(4, 1)
    g = admit_genesis(candidate_tx(), reg)
    meta = dict(g.tx.meta)
    meta["register"] = "lot-other"
    assert not verify_genesis_certificate(replace(g.tx, metadata=encode_metadata(meta)), reg)
    env = dict(meta["genesis"])
    env["cert"] = g.tx.meta["genesis"]["cert"][:2]
    meta = dict(g.tx.meta, genesis=env)
    assert not verify_genesis_certificate(replace(g.tx, metadata=encode_metadata(meta)), reg)
    assert not verify_genesis_certificate(replace(g.tx, sender_pk=keypair_generate(1).public_key), reg)
    assert not verify_genesis_certificate(candidate_tx(), reg)
    assert not verify_genesis_certificate(g.tx, MemberRegistry(frozenset(), 1))


# -- safety, exhaustive over small networks -----------------------------------

@pytest.mark.parametrize("f", [1, 2])
def test_admission_safety_exhaustive(f):
    n = 3 * f + 1
    behaviours = (Behavior.FAULTY_REJECT, Behavior.FAULTY_SILENT)
    for size in range(f + 1):
        for faulty in itertools.combinations(range(1, n + 1), size):
            for kinds in itertools.product(behaviours, repeat=size):
                reg = registry(n, f, dict(zip(faulty, kinds)))
                # honest-unanimous approval survives any <= f faulty members
                g = admit_genesis(candidate_tx(), reg)
                assert g.session.status is SessionStatus.ACCEPTED
                assert g.session.approvals >= 2 * f + 1
                # honest-unanimous rejection is never overturned
                with pytest.raises(QuorumFailed):
                    admit_genesis(candidate_tx(valid=False), reg)
            # byzantine members approving alone never reach quorum
            reg = registry(n, f)
            s = propose_member(reg, CANDIDATE.public_key)
            members = keys(reg)
            for i, pk in enumerate(members):
                if s.status is not SessionStatus.OPEN:
                    break
                s = vote(s, reg, pk, i < size)
                assert s.status is not SessionStatus.ACCEPTED or s.approvals >= 2 * f + 1
            assert s.status is not SessionStatus.ACCEPTED


def test_registry_from_config():
    reg = registry_from_config({"f": 1, "seed": 3, "members": [
        {"seed": 1}, {"seed": 2}, {"seed": 3, "behavior": "faulty-reject"},
        {"seed": 4, "behavior": "faulty-silent"}]})
    assert len(reg) == 4 and reg.quorum == 3
    with pytest.raises(QuorumFailed):
        genesis_transaction(candidate_tx(), reg)
