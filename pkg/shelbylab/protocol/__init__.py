# -*- coding: utf-8 -*-
"""

"""

from ..protocol.ledger import *
from ..protocol.audit import *
from ..protocol.payments import *
