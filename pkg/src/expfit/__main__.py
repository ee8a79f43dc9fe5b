import sys

from expfit.cli import main

sys.exit(main())
