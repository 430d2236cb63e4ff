# -*- coding: utf-8 -*-
"""

"""

from ..simulation.strategies import *
from ..simulation.actors import *
from ..simulation.epoch import *
from ..simulation.experiments import *
from ..simulation.scenario import *
