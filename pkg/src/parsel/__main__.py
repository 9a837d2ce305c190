"""Allow ``python3 -m parsel``."""

import sys

from .cli import main

sys.exit(main())
