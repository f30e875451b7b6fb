"""Confidence-gated GUI-agent orchestration framework.

Probes an agent with a stronger critic to produce confidence-annotated
trajectories, runs adaptive episodes that route low-confidence steps to a
human or oracle, evaluates trajectories, and models how step-level errors
collapse task success.
"""

__version__ = "0.1.0"
