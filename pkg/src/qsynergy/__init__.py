"""Hybrid quantum-classical prediction of Trotterized Ising circuit magnetizations."""

__version__ = "0.1.0"
