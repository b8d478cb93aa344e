import sys

from rnpe.harness.cli import main

sys.exit(main())
