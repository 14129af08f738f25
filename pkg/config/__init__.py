"""
Influence Abstraction Toolkit - Configuration Package
Centralized configuration management
"""

from .config import Config, TestingConfig, get_config

__all__ = ['Config', 'TestingConfig', 'get_config']
