"""
Influence Abstraction Toolkit - Tests Package
Test suite for the engine, the domains and the command line
"""

__all__ = []
