"""Run the CLI as ``python -m playroom``."""

from __future__ import annotations

import sys

from playroom.cli import main

if __name__ == "__main__":
    sys.exit(main())
