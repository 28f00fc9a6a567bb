"""Allow running as `python -m fensemble`."""

from fensemble.cli import main

main()
