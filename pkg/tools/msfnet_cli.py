#!/usr/bin/env python3
"""
MSFNet CLI - script entry point.

Usage:
    python tools/msfnet_cli.py gradcheck
    python tools/msfnet_cli.py train --samples 8 --metrics runs/metrics.csv

See src/trainer/cli.py for every subcommand.
"""

import sys
from pathlib import Path

# Add parent to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.trainer.cli import main

if __name__ == "__main__":
    sys.exit(main())
