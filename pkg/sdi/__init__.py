# sdi/__init__.py
"""Polynomial stochastic dynamical indicators: expansions, propagation, indicators and cartography."""

from core.config import TOOL_VERSION

__version__ = TOOL_VERSION
