# -*- coding: utf-8 -*-
"""

"""

import sys

from .scripts import main

sys.exit(main())
