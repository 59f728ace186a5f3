"""sresim — deterministic simulated-cluster incident bench for SRE agents.

A discrete-event simulation of a small Kubernetes-like cluster with a fluid
request-flow model, a curated fault/noise injection plane, scripted incident
scenarios, a tool gateway for diagnostic agents, and diagnosis/mitigation
oracles with a benchmark runner on top.
"""

__version__ = "0.1.0"

from .kernel import EventLoop, RngStreams, SimClock, derive_seed

__all__ = ["EventLoop", "RngStreams", "SimClock", "derive_seed", "__version__"]
