# -*- coding: utf-8 -*-
"""

"""

from ..storage.commitment import *
from ..storage.prep import *
