"""Decentralized federated distillation simulator with a growing sample schedule
and function-space trajectory visualization."""

__version__ = "0.1.0"
