"""Evolutionary engine for graph-generating symbolic programs.

The library couples a typed graph-construction DSL with distributional
program search, library learning by anti-unification, and a deterministic
feature-injection embedding that prepares generated graphs for downstream
message-passing models.
"""

__version__ = "0.1.0"
