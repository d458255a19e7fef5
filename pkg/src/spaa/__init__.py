"""Stealthy projector-based adversarial attacks, desk scale.

Synthetic project-and-capture simulator, learned differentiable surrogate
of it, pluggable toy classifiers, the alternating attack optimizer plus two
baselines, and a benchmark harness.
"""

__version__ = "0.1.0"
