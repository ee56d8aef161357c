"""Periodic event-triggered consensus of linear multi-agent systems.

Synthesis of gains and trigger constants, a deterministic sampled-time
simulator with a bounded-delay channel, and a CLI around both.
"""

__version__ = "0.1.0"
