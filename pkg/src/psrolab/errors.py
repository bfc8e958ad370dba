"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: unknown game id, bad override key, bad sizes."""


class ContractError(RuntimeError):
    """A caller broke an operation's precondition (illegal action, terminal state...)."""


class NumericError(ArithmeticError):
    """Non-finite values reached a numeric routine."""


class CapacityError(RuntimeError):
    """Exact tree traversal would exceed the node cap; use the approximate path."""


class CheckpointError(RuntimeError):
    """Checkpoint missing, incomplete or written by an incompatible version."""
