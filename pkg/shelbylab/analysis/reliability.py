# -*- coding: utf-8 -*-
"""
The :mod:`shelbylab.analysis.reliability` module estimates annual data loss
and unavailability of erasure-coded storage.

Data is lost when a chunk-destroying event strikes one of ``n_nodes`` holders
and ``m`` more of the remaining ``n_nodes - 1`` holders are struck before the
first loss is detected and rebuilt, a window of
``T_critical = mttd + mttr`` hours:

    ``P(loss) = (n_nodes * p * r) * C(n_nodes - 1, m) * (p * T_critical / 8760) ** m``

where ``p`` is the probability that a trigger destroys a chunk and ``r`` the
annual trigger rate per node. With ``r = 1`` this is the formula applied to
the reference configuration of 16 nodes, ``p = 0.5`` and a 36 hour window,
giving about 3.01e-12 per year.

Unavailability adds a systemic outage budget and the chance that fewer than
``min_dcs_required`` of ``dc_count`` independent data centers are up.

.. autoclass:: FailureModel
   :members:

.. autoclass:: AvailabilityModel
   :members:

.. autofunction:: durability

.. autofunction:: durability_exact

.. autofunction:: availability

.. autofunction:: failure_rate_table

.. autofunction:: reliability_grid
"""

import math
from fractions import Fraction
from dataclasses import dataclass
import pandas as pd
from scipy import stats

from ..exceptions import ParameterError

import logging
logger = logging.getLogger(__name__)


HOURS_PER_YEAR = 8760
MINUTES_PER_YEAR = 525600


@dataclass(frozen=True)
class FailureModel:
    """
    Failure parameters of one chunkset's holders.
    """
    n_nodes: int = 16
    p_chunk_loss_on_trigger: float = 0.5
    mttd_hours: float = 24
    mttr_rebuild_hours: float = 12
    m: int = 6
    trigger_rate: float = 1.0

    @property
    def k(self):
        return self.n_nodes - self.m

    @property
    def t_critical(self):
        return self.mttd_hours + self.mttr_rebuild_hours

    def _validate(self):
        if self.m >= self.n_nodes:
            raise ParameterError(f'm = {self.m} tolerable losses needs more than {self.n_nodes} nodes')
        if self.m < 0 or self.n_nodes < 1:
            raise ParameterError(f'invalid node counts n={self.n_nodes} m={self.m}')
        if not 0 <= self.p_chunk_loss_on_trigger <= 1:
            raise ParameterError(f'p_chunk_loss_on_trigger must lie in [0, 1], got {self.p_chunk_loss_on_trigger}')
        if self.mttd_hours < 0 or self.mttr_rebuild_hours < 0 or self.trigger_rate < 0:
            raise ParameterError('times and rates must not be negative')


@dataclass(frozen=True)
class AvailabilityModel:
    """
    Infrastructure parameters for unavailability.
    """
    dc_count: int = 5
    dc_uptime: float = 0.98
    min_dcs_required: int = 3
    systemic_outage_minutes_per_year: float = 30
    p_data_loss: float = 3.01e-12


def durability(model):
    """
    Annual probability of data loss for ``model``.
    """
    model._validate()
    p = model.p_chunk_loss_on_trigger
    window = p * model.t_critical / HOURS_PER_YEAR
    return (model.n_nodes * p * model.trigger_rate) * math.comb(model.n_nodes - 1, model.m) * window ** model.m

def durability_exact(model):
    """
    :func:`durability` evaluated in exact rational arithmetic, returned as a
    :class:`fractions.Fraction`.
    """
    model._validate()
    p = Fraction(str(model.p_chunk_loss_on_trigger))
    window = p * (Fraction(str(model.mttd_hours)) + Fraction(str(model.mttr_rebuild_hours))) / HOURS_PER_YEAR
    return (model.n_nodes * p * Fraction(str(model.trigger_rate))) * math.comb(model.n_nodes - 1, model.m) * window ** model.m

def availability(model):
    """
    Annual probability of being unable to serve a read.
    """
    if not 0 <= model.min_dcs_required <= model.dc_count:
        raise ParameterError(f'min_dcs_required = {model.min_dcs_required} must lie in [0, {model.dc_count}]')
    for name in ('dc_uptime', 'p_data_loss'):
        if not 0 <= getattr(model, name) <= 1:
            raise ParameterError(f'{name} must lie in [0, 1], got {getattr(model, name)}')
    # P(fewer than min_dcs_required up)
    too_few_up = stats.binom.cdf(model.min_dcs_required - 1, model.dc_count, model.dc_uptime)
    return (model.p_data_loss
            + model.systemic_outage_minutes_per_year / MINUTES_PER_YEAR
            + float(too_few_up))

def failure_rate_table():
    """
    Reference annual failure rates of storage hardware. Host failure is
    quoted as a range.
    """
    return {
        'drive': 0.02,
        'latent_sector_error': 0.0345,   # over the drive's lifetime
        'host': (0.01, 0.05),
        'rack': 0.05,
        'datacenter': 0.02,
        'systemic': 0.000057,
    }

def reliability_grid(m_values=range(2, 9), t_critical_hours=(12, 24, 36, 72),
                     n_nodes=16, p_chunk_loss_on_trigger=0.5, availability_model=None):
    """
    Durability and unavailability over a grid of tolerable losses and
    critical windows, as a :class:`pandas.DataFrame`. The critical window is
    split evenly between detection and rebuild.
    """
    if availability_model is None:
        availability_model = AvailabilityModel()
    rows = []
    for m in m_values:
        for hours in t_critical_hours:
            model = FailureModel(n_nodes=n_nodes, p_chunk_loss_on_trigger=p_chunk_loss_on_trigger,
                                 mttd_hours=hours / 2, mttr_rebuild_hours=hours / 2, m=m)
            p_loss = durability(model)
            p_unavail = availability(AvailabilityModel(
                dc_count=availability_model.dc_count,
                dc_uptime=availability_model.dc_uptime,
                min_dcs_required=availability_model.min_dcs_required,
                systemic_outage_minutes_per_year=availability_model.systemic_outage_minutes_per_year,
                p_data_loss=p_loss))
            rows.append({
                'n_nodes': n_nodes, 'm': m, 't_critical_hours': hours,
                'p_data_loss': p_loss, 'durability': 1 - p_loss,
                'durability_nines': -math.log10(p_loss) if p_loss > 0 else math.inf,
                'p_unavailable': p_unavail,
                'availability_nines': -math.log10(p_unavail) if p_unavail > 0 else math.inf,
            })
    return pd.DataFrame(rows)
