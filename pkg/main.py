"""
Main entry point for rbvrisk

Runs the command-line interface; see ``python main.py --help``.
"""

import sys

from rbvrisk.cli import main


if __name__ == "__main__":
    sys.exit(main())
