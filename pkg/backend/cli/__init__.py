"""
Influence Abstraction Toolkit - CLI Package
Command-line surface
"""

from .commands import COMMANDS, generate, parse_node, resolve_instance
from .main import build_parser, main, run

__all__ = ['COMMANDS', 'generate', 'parse_node', 'resolve_instance', 'build_parser', 'main', 'run']
