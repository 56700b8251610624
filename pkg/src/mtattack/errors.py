"""Exception hierarchy shared across the package."""


class AttackError(Exception):
    """Base class for every error raised by this package."""


class EmptyText(AttackError, ValueError):
    pass


class InvalidEdit(AttackError, ValueError):
    pass


class UndefinedSimilarity(AttackError, ValueError):
    pass


class ConfigError(AttackError, ValueError):
    pass


class VictimUnavailable(AttackError, RuntimeError):
    pass


class BudgetExceeded(AttackError, RuntimeError):
    pass


class ProtocolError(AttackError, RuntimeError):
    pass


class InvalidVictimConfig(ConfigError):
    pass


class EmbedderUnavailable(AttackError, RuntimeError):
    pass


class DegenerateData(AttackError, ValueError):
    pass


class InvalidAssignment(AttackError, ValueError):
    pass


class InvalidDataset(AttackError, ValueError):
    pass


class MetricMismatch(AttackError, ValueError):
    pass


class InvalidInput(AttackError, ValueError):
    pass
