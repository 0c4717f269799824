import sys

from grrm.harness.cli import main

sys.exit(main())
