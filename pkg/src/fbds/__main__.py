import sys

from fbds.cli import main

sys.exit(main())
