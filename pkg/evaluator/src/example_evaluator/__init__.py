"""Reference external evaluator for the sss3d wire protocol.

Stands in for a real training/evaluation backend: it answers evaluate
requests with the same pinned surrogate stream the engine ships built in,
computed here independently so cross-process parity is a real check.
"""

__version__ = "0.1.0"
