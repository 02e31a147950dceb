import sys

from oie.cli import main

sys.exit(main())
