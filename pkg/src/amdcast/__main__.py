from amdcast.cli import main
import sys

sys.exit(main())
