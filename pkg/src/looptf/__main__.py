import sys

from looptf.cli import main

sys.exit(main())
