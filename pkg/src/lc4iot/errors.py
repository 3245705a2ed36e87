"""Exception hierarchy shared across the ledger, consensus and simulation layers."""


class LedgerError(Exception):
    """Base class for every error raised by this package."""


# -- chain structure ---------------------------------------------------------

class LinkageError(LedgerError):
    """Block does not point at the current tip."""


class BlockIndexError(LedgerError, IndexError):
    """Block index is not tip index + 1."""


class HashError(LedgerError):
    """Stored block hash differs from the recomputed one."""


class UnknownProduce(LedgerError, KeyError):
    pass


# -- oracles -----------------------------------------------------------------

class FetchError(LedgerError):
    """An oracle's reference source has no value for the query."""


class UnknownOracle(LedgerError, KeyError):
    pass


class BadSignature(LedgerError):
    pass


class ThresholdNotMet(LedgerError):
    pass


# -- transaction pool --------------------------------------------------------

class VerificationError(LedgerError):
    """A transaction failed one of the three verification steps."""


class BadSenderSig(VerificationError):
    pass


class BadOracleSig(VerificationError):
    pass


class BadCertificate(VerificationError):
    """A genesis transaction carries an invalid quorum certificate."""


class Duplicate(LedgerError):
    pass


class EmptyPool(LedgerError):
    """Raised when a miner draws from an empty pool.

    ``chain`` and ``metrics`` carry the partial result when the error
    interrupts a multi-block run.
    """

    def __init__(self, msg="verified pool is empty", chain=None, metrics=None):
        super().__init__(msg)
        self.chain = chain
        self.metrics = metrics


# -- membership --------------------------------------------------------------

class AlreadyMember(LedgerError):
    pass


class InsufficientNetwork(LedgerError):
    pass


class NotMember(LedgerError):
    pass


class DoubleVote(LedgerError):
    pass


class SessionClosed(LedgerError):
    pass


class QuorumFailed(LedgerError):
    pass


# -- proof of work -----------------------------------------------------------

class Exhausted(LedgerError):
    """Nonce search passed ``max_nonce`` without meeting the difficulty."""


# -- off-chain storage -------------------------------------------------------

class AccessDenied(LedgerError):
    pass


class NoAnchor(LedgerError, KeyError):
    pass


class ConfigError(LedgerError, ValueError):
    pass
