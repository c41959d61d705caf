"""Combined payoff-and-strategy reinforcement learning for zero-sum stochastic games."""

__version__ = "0.1.0"
