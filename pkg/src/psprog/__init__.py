"""Polynomial progressions in sequences floor(f(n)).

Modules: exactmath (certified arithmetic), functions (the f catalog and
exact floors), progressions (membership and the polytope criterion),
polytope (exact volumes), experiments, discrepancy, and the cli.
"""

__version__ = "0.1.0"
