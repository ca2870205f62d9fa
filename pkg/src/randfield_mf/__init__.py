"""Exact finite-N thermodynamics of quantum mean-field spin models in
i.i.d. random external fields, and the variational objects of their
large-N limit."""

__version__ = "0.1.0"
