"""driftrank: continual-RL bug localization over drifting changesets."""

__version__ = "0.1.0"
