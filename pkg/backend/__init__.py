"""
Influence Abstraction Toolkit - Backend Package
Main backend package initialization
"""

__version__ = "1.0.0"
__author__ = "Influence Abstraction Toolkit Team"
