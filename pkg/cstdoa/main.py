"""Entry point for the cstdoa command line."""

import logging
import sys
from typing import List, Optional

from cstdoa.config import settings
from cstdoa.cli import commands

# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.LOG_LEVEL),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    stream=sys.stdout,
)

logger = logging.getLogger(__name__)


def main(argv: Optional[List[str]] = None) -> int:
    return commands.main(argv)


if __name__ == "__main__":
    sys.exit(main())
