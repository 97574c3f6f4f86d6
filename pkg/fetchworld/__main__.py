"""Run the command line interface with `python -m fetchworld`."""
from .cli import main

main()
