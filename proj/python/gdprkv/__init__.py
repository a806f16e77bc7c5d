"""GDPR-aware key-value store with an audited append-only log."""

from ._core import (
    Client,
    Clock,
    Config,
    Error,
    ManualClock,
    Store,
    SystemClock,
    read_log,
    simulate_eager,
    simulate_lazy,
    verify_log,
)

Error.code = property(lambda self: self.args[0])

__all__ = [
    "Client",
    "Clock",
    "Config",
    "Error",
    "ManualClock",
    "Store",
    "SystemClock",
    "read_log",
    "simulate_eager",
    "simulate_lazy",
    "verify_log",
]
