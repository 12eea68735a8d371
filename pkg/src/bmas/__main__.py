import sys

from bmas.cli import main

sys.exit(main())
