"""Run the fxtsp command line from a source checkout."""

import sys

from fxtsp.cli import main

if __name__ == "__main__":
    sys.exit(main())
