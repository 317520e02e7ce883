"""Time-constant heterogeneity in reservoir networks: stimuli, networks, tasks, readouts, costs."""

__version__ = "0.1.0"
