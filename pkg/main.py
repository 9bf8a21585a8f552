import sys

from src.pipeline.commands import main

if __name__ == "__main__":
    sys.exit(main())
