import sys

from frameguard.cli import main

if __name__ == "__main__":
    sys.exit(main())
