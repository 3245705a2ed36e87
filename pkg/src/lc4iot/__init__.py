"""Oracle-gated lightweight blockchain for supply-chain IoT, with a PoW baseline."""
from .crypto import KeyPair, cal_block_hash, keypair_generate, sha256
from .ledger import (
    Block,
    Chain,
    Transaction,
    TxKind,
    Visibility,
    append_block,
    find_sender,
    new_chain,
    trace_produce,
    validate_chain,
)
from .consensus import Outcome, append_block_lc4iot, run_lc4iot
from .pow import PowParams, mine_block, run_pow

__version__ = "0.1.0"

__all__ = [
    "Block", "Chain", "KeyPair", "Outcome", "PowParams", "Transaction", "TxKind", "Visibility",
    "append_block", "append_block_lc4iot", "cal_block_hash", "find_sender", "keypair_generate",
    "mine_block", "new_chain", "run_lc4iot", "run_pow", "sha256", "trace_produce",
    "validate_chain",
]
