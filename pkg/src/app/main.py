import logging
import sys

from src.controllers.cli_controller import main
from src.utils.config import settings

logger = logging.getLogger(__name__)


def run() -> int:
    logger.debug(f"{settings.PROJECT_NAME} starting")
    return main(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(run())
