import sys

from packsolver.cli import main

sys.exit(main())
