"""Differentiable interactive imitation learning with expert cost-to-go oracles."""
__version__ = "0.1.0"
