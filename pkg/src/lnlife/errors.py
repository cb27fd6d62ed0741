"""Exception hierarchy shared by every lnlife module."""


class LnLifeError(Exception):
    """Base class for all lnlife errors."""


# script engine
class TruncatedPush(LnLifeError):
    pass


class HashMismatch(LnLifeError):
    pass


class MalformedWitness(LnLifeError):
    pass


# lifecycle classification
class NotAClose(LnLifeError):
    pass


class Unclassifiable(LnLifeError):
    """A commitment whose settled outputs could not be typed."""


class ZeroTotal(LnLifeError):
    pass


class NegativeLifetime(LnLifeError):
    pass


class NegativeDelay(LnLifeError):
    pass


class LockViolated(LnLifeError):
    pass


# gossip
class ZeroLifetime(LnLifeError):
    pass


class InsufficientUpdates(LnLifeError):
    pass


# chain source
class NotFound(LnLifeError):
    pass


class SourceUnavailable(LnLifeError):
    """Remote source failed; callers may retry."""


# reporting
class EmptyInput(LnLifeError):
    pass


class ConfigError(LnLifeError):
    pass
