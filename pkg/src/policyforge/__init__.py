"""policyforge: evolve small heuristic programs for one cache or congestion-control context."""

__version__ = "0.1.0"
