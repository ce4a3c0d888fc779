import sys

from expert_calibration.cli import main

sys.exit(main())
