#!/usr/bin/env python3
"""
Influence Abstraction Toolkit - Application Entry Point
Command-line launcher; see `python run.py --help`
"""

import sys
from pathlib import Path

# Add the project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from backend.cli.main import main  # noqa: E402

if __name__ == '__main__':
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\ninterrupted", file=sys.stderr)
        sys.exit(130)
