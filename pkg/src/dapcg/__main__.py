import sys

from dapcg.cli import main

sys.exit(main())
