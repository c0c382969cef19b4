import sys

from imtk.cli import main

sys.exit(main())
