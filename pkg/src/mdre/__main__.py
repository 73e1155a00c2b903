import sys

from mdre.harness.cli import main

sys.exit(main())
