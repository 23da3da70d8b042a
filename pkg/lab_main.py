import sys

from src.app.main import run

if __name__ == "__main__":
    sys.exit(run())
