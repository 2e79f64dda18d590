"""Network-slice placement with a power-of-two-choices heuristic and a
heuristically assisted actor-critic agent."""

__version__ = "0.1.0"
