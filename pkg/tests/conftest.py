import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lc4iot.clock import StepClock
from lc4iot.consensus import Outcome, append_block_lc4iot
from lc4iot.crypto import keypair_generate
from lc4iot.ledger import append_block, encode_metadata, make_transaction, new_chain, request_digest
from lc4iot.membership import honest_registry
from lc4iot.oracles import Oracle, OracleRegistry, aggregate_sign, table_source


class World:
    """3 oracles (threshold 2), 4 honest members (f=1), and one admitted sender."""

    def __init__(self, n_oracles=3, threshold=2, f=1, seed=0):
        self.oracles = OracleRegistry(
            tuple(Oracle(i, keypair_generate(500 + i), table_source({"*": 4.0}))
                  for i in range(1, n_oracles + 1)),
            active_count=n_oracles, threshold=threshold, tolerance=0.5,
        )
        self.members = honest_registry(range(900, 900 + 3 * f + 1), f, seed=seed)
        self.cloud = keypair_generate(777)
        self.clock = StepClock(start=1_000_000, step=10)
        self.chain = new_chain(genesis_ts=self.clock.now_ms())
        self.newcomer = keypair_generate(42)
        reg = self.tx(self.newcomer, {"register": "alice"})
        out = append_block_lc4iot(self.chain, reg, self.oracles, self.members, self.clock)
        assert out.result is Outcome.ROUTED_TO_GENESIS
        self.sender = out.genesis.allocated
        out2 = append_block_lc4iot(self.chain, out.tx, self.oracles, self.members, self.clock)
        self.chain = append_block(self.chain, out2.block)

    def blob(self, sender_pk, raw, ids=None):
        ids = list(self.oracles.default_active_ids()) if ids is None else ids
        return aggregate_sign(self.oracles, ids, request_digest(sender_pk, self.cloud.public_key, raw))

    def tx(self, sender, meta, ids=None, oracle_sig=None):
        raw = encode_metadata(meta)
        blob = self.blob(sender.public_key, raw, ids) if oracle_sig is None else oracle_sig
        return make_transaction(sender, self.cloud.public_key, raw, blob)


@pytest.fixture
def world():
    return World()


ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
