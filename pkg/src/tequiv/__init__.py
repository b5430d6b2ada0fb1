"""Symbolic verifier for timed observational equivalence of security protocols.

Decides whether two protocol configurations look the same to a network
attacker who can read, compose, and replay messages and measure when they
appear on the wire.
"""

__version__ = "0.1.0"
