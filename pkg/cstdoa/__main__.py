import sys

from cstdoa.main import main

sys.exit(main())
