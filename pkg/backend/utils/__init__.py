"""
Influence Abstraction Toolkit - Utils Package
Model documents, report export and logging setup
"""

from .export_manager import ExportManager, Report
from .logger import setup_logging
from .model_io import dumps_document, load_document, loads_document, save_document

__all__ = ['ExportManager', 'Report', 'setup_logging', 'dumps_document', 'load_document',
           'loads_document', 'save_document']
