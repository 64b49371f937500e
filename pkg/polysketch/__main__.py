import sys

from polysketch.cli import main

sys.exit(main())
