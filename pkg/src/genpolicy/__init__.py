"""Learned per-sample generation policies for iterative samplers on exact toy worlds."""
__version__ = "0.1.0"
