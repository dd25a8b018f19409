import sys

from roconvex.cli import main

sys.exit(main())
