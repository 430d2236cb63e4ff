# -*- coding: utf-8 -*-
"""

"""

from ..coding.gf256 import *
from ..coding.codec import *
