import sys

from covct.cli import main

sys.exit(main())
