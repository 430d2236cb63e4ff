# -*- coding: utf-8 -*-
"""

"""

from ..analysis.economics import *
from ..analysis.reliability import *
