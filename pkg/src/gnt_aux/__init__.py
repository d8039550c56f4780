"""Generate-and-test auxiliary task discovery for DQN agents."""

__version__ = "0.1.0"
