"""Primal-dual first-order optimization with duality certificates."""

__version__ = "0.1.0"
