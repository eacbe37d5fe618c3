"""Entry point de la CLI (`python -m src.main <subcomando>`)."""

import sys

from src.cli.main import main

if __name__ == "__main__":
	sys.exit(main())
