#!/usr/bin/env python3
"""Run the calmreg command line: ``python -m calmreg <subcommand> ...``."""

import sys

from calmreg.cli import main

if __name__ == "__main__":
    sys.exit(main())
