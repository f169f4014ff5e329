"""Online domain-incremental continual segmentation bench with simulated-data regularization."""

__version__ = "0.1.0"
