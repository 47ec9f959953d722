import sys

from enctrain.cli import main

if __name__ == "__main__":
    sys.exit(main())
