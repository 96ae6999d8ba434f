"""Discrete-time hedging ledgers for vanilla calls and rolling-intrinsic storage."""

__version__ = "0.1.0"
