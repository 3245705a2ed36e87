import random
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from lc4iot.crypto import ZERO_DIGEST, cal_block_hash, keypair_generate
from lc4iot.errors import BlockIndexError, HashError, LinkageError, UnknownProduce
from lc4iot.ledger import (
    Block,
    Chain,
    Transaction,
    TxKind,
    Visibility,
    append_block,
    decode_metadata,
    encode_metadata,
    export_chain,
    find_sender,
    import_chain,
    make_transaction,
    new_chain,
    trace_produce,
    validate_chain,
)


def next_block(chain, tx, dt=1):
    tip = chain.tip
    ts = tip.ts + dt
    return Block(tip.index + 1, tip.hash, ts, tx, cal_block_hash(tip.index + 1, tip.hash, ts, tx))


def extend(chain, tx):
    return append_block(chain, next_block(chain, tx))


def store_tx(sender_seed, meta):
    return make_transaction(keypair_generate(sender_seed), b"\x01" * 32, meta)


def build(n, sender_for=lambda i: 100 + i % 3):
    chain = new_chain(Visibility.PUBLIC, 0)
    for i in range(n):
        chain = extend(chain, store_tx(sender_for(i), {"i": i}))
    return chain


def test_new_chain():
    c = new_chain(Visibility.PUBLIC, 123)
    assert len(c) == 1 and c[0].index == 0
    assert c[0].prev_hash == ZERO_DIGEST == bytes(32)
    assert c[0].tx.metadata == b"" and c[0].tx.kind is TxKind.GENESIS
    assert validate_chain(c)
    assert new_chain(Visibility.PRIVATE).visibility is Visibility.PRIVATE


def test_append_is_persistent():
    c0 = build(3)
    c1 = extend(c0, store_tx(1, {"x": 1}))
    assert len(c1) == len(c0) + 1 == 5
    assert validate_chain(c0) and len(c0) == 4


def test_append_linkage_error():
    c = build(2)
    b = next_block(c, store_tx(1, {}))
    with pytest.raises(LinkageError):
        append_block(c, replace(b, prev_hash=b"\x07" * 32))


def test_append_index_error():
    c = build(2)
    tx = store_tx(1, {})
    tip = c.tip
    b = Block(tip.index + 2, tip.hash, tip.ts, tx, cal_block_hash(tip.index + 2, tip.hash, tip.ts, tx))
    with pytest.raises(BlockIndexError):
        append_block(c, b)
    with pytest.raises(IndexError):
        append_block(c, b)


def test_append_hash_error_on_tampered_tx():
    c = build(2)
    b = next_block(c, store_tx(1, {"a": 1}))
    tampered = replace(b, tx=replace(b.tx, metadata=b'{"a":2}'))
    with pytest.raises(HashError):
        append_block(c, tampered)


def test_validate_detects_metadata_flip():
    c = build(10)
    assert validate_chain(c)
    blocks = list(c.blocks)
    meta = bytearray(blocks[5].tx.metadata)
    meta[0] ^= 0x01
    blocks[5] = replace(blocks[5], tx=replace(blocks[5].tx, metadata=bytes(meta)))
    assert not validate_chain(Chain(tuple(blocks)))


def test_validate_detects_reorder():
    c = build(10)
    blocks = list(c.blocks)
    blocks[3], blocks[4] = blocks[4], blocks[3]
    assert not validate_chain(Chain(tuple(blocks)))


def test_validate_detects_decreasing_timestamp():
    c = build(1)
    tx = store_tx(1, {})
    tip = c.tip
    b = Block(2, tip.hash, tip.ts - 1, tx, cal_block_hash(2, tip.hash, tip.ts - 1, tx))
    assert not validate_chain(Chain(c.blocks + (b,)))


def linear_scan(chain, pk):
    # forward scan keeping the last match: independent of the backward search
    found = None
    for i, b in enumerate(chain.blocks):
        if b.tx.sender_pk == pk:
            found = i
    return found


def test_find_sender_not_found():
    assert find_sender(build(5), keypair_generate(9999).public_key) is None


def test_find_sender_latest_occurrence():
    target = 555
    chain = build(8, sender_for=lambda i: target if i + 1 in (3, 7) else 100 + i)
    pk = keypair_generate(target).public_key
    assert linear_scan(chain, pk) == 7
    assert find_sender(chain, pk) == 7


def test_find_sender_genesis_allocated(world):
    idx = find_sender(world.chain, world.sender.public_key)
    assert idx == linear_scan(world.chain, world.sender.public_key) == 1
    assert world.chain[idx].tx.kind is TxKind.GENESIS


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 5), max_size=25), st.integers(0, 6))
def test_find_sender_matches_linear_scan(senders, query):
    chain = new_chain()
    for i, s in enumerate(senders):
        chain = extend(chain, Transaction(bytes([s]) * 32, b"", b"", b"%d" % i, b""))
    pk = bytes([query]) * 32
    assert find_sender(chain, pk) == linear_scan(chain, pk)


def test_metadata_canonical():
    raw = encode_metadata({"b": 1, "a": [1, 2]})
    assert raw == b'{"a":[1,2],"b":1}'
    assert decode_metadata(raw) == {"a": [1, 2], "b": 1}
    assert decode_metadata(b'{"b":1, "a":2}') is None
    assert decode_metadata(b"\xff") is None


# -- traceability ------------------------------------------------------------

def lineage_chain(script, seed=0):
    """``script`` is a list of produce ids; each mention rotates that produce's key."""
    rng = random.Random(seed)
    keys: dict[int, list[str]] = {}
    chain = new_chain()
    for p in script:
        new = rng.randbytes(32).hex()
        prev = keys[p][-1] if p in keys else ""
        keys.setdefault(p, []).append(new)
        chain = extend(chain, store_tx(10 + p, {"produce": new, "link_prev": prev, "holder": f"h{p}"}))
        if rng.random() < 0.3:
            chain = extend(chain, store_tx(99, {"noise": rng.random()}))
    return chain, keys


def brute_force_trace(chain, key):
    group = {key}
    changed = True
    while changed:
        changed = False
        for b in chain.blocks:
            m = b.tx.meta or {}
            if "produce" not in m:
                continue
            pair = {m["produce"], m["link_prev"]} - {""}
            if pair & group and not pair <= group:
                group |= pair
                changed = True
    return [b.tx for b in chain.blocks if (b.tx.meta or {}).get("produce") in group]


def test_trace_single_registration():
    chain, keys = lineage_chain([0])
    assert len(trace_produce(chain, keys[0][0])) == 1


def test_trace_four_handoffs():
    chain, keys = lineage_chain([0, 1, 0, 0, 1, 0, 0])
    trace = trace_produce(chain, keys[0][-1])
    assert len(trace) == 5
    assert [t.meta["produce"] for t in trace] == keys[0]


def test_trace_from_any_key():
    chain, keys = lineage_chain([0, 0, 0])
    assert trace_produce(chain, keys[0][1]) == trace_produce(chain, bytes.fromhex(keys[0][0]))


def test_trace_unknown_produce():
    chain, _ = lineage_chain([0, 0])
    with pytest.raises(UnknownProduce):
        trace_produce(chain, b"\x00" * 32)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=30), st.integers(0, 100), st.data())
def test_trace_equals_brute_force_filter(script, seed, data):
    chain, keys = lineage_chain(script, seed)
    p = data.draw(st.sampled_from(sorted(keys)))
    key = data.draw(st.sampled_from(keys[p]))
    assert trace_produce(chain, key) == brute_force_trace(chain, key)


# -- export / import ---------------------------------------------------------

def test_export_import_roundtrip(world):
    chain = world.chain
    for i in range(3):
        chain = extend(chain, world.tx(world.sender, {"i": i}))
    text = export_chain(chain)
    assert text.count("\n") == len(chain)
    back = import_chain(text)
    assert validate_chain(back)
    assert [b.hash for b in back] == [b.hash for b in chain]
    assert back.blocks == chain.blocks
    assert export_chain(back) == text
