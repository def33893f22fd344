import sys

from gedlab.cli import main

sys.exit(main())
