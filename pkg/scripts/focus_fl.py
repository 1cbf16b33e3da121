"""
FOCUS-FL command line launcher
Usage: python scripts/focus_fl.py {synth,run,theorem-check,sweep} [--config cfg.json] ...
"""
import os
import sys

# Force unbuffered output for real-time progress updates
sys.stdout.reconfigure(line_buffering=True) if hasattr(sys.stdout, 'reconfigure') else None
sys.stderr.reconfigure(line_buffering=True) if hasattr(sys.stderr, 'reconfigure') else None

# repo root holds the fairfl and utils packages
repo_root = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if repo_root not in sys.path:
    sys.path.insert(0, repo_root)

from fairfl.cli_harness import main

if __name__ == "__main__":
    sys.exit(main())
