#!/usr/bin/env python3
"""
Startup script for the MLMC experiment harness
Runs the command line from a source checkout, e.g.

    python start.py run --config configs/gbm_cmlmc.yaml --threads 4
"""

import os
import sys

# Add src directory to Python path
sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), 'src'))

from harness.app import main  # noqa: E402

if __name__ == '__main__':
    main()
