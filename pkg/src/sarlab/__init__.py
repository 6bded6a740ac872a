"""Time-scale robust policy gradients through safe action repetition."""

__version__ = "0.1.0"
