"""Entry point for python -m nse_power_expansion."""
import sys

from .cli import main

if __name__ == '__main__':
    sys.exit(main())
