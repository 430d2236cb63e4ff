# -*- coding: utf-8 -*-
"""
The :mod:`shelbylab.analysis.economics` module holds every economic parameter
of the protocol and the checks that keep honest behavior the rational choice
for a storage provider.

All amounts are in abstract tokens; ``usd_per_token`` converts them. Storage
rewards and costs are counted per chunk per epoch, with an epoch of one day by
default. The storage fee ``W`` is split between storage rewards and auditor
rewards so that, per GB and month,

    ``rwd_st * chunks_per_gb * epochs_per_month + n_a * rwd_au = W``

where ``n_a = p_a * chunks_per_gb * auditors_per_audit * epochs_per_month`` is
the expected number of audits of one GB in one month.

.. autoclass:: EconomicParams
   :members:

.. autoclass:: IncentiveCheck
   :members:

.. autoclass:: IncentiveReport
   :members:

.. autofunction:: normalize_rewards

.. autofunction:: aws_reference_costs

.. autofunction:: detection_probability

.. autofunction:: check_participation

.. autofunction:: check_store_vs_retrieve

.. autofunction:: check_fake_storage

.. autofunction:: check_ata_calibration

.. autofunction:: check_all
"""

import dataclasses
from dataclasses import dataclass, field
import pandas as pd

from ..exceptions import ParameterError

import logging
logger = logging.getLogger(__name__)


def aws_reference_costs(retrieval_factor=5, storage_usd_per_gb_month=0.023,
                        egress_usd_per_gb=0.02, mb_per_gb=1000,
                        days_per_month=30, usd_per_token=1.0):
    """
    Storage cost per MB per day and retrieval cost per MB, in tokens, derived
    from cloud object-storage list prices. Retrieval is priced at
    ``retrieval_factor`` times the egress price.

    Returns ``(c_s, c_r)``.
    """
    c_s = storage_usd_per_gb_month / mb_per_gb / days_per_month / usd_per_token
    c_r = retrieval_factor * egress_usd_per_gb / mb_per_gb / usd_per_token
    return c_s, c_r

_AWS_C_S, _AWS_C_R = aws_reference_costs()


def normalize_rewards(W, p_a, chunks_per_gb, auditors_per_audit, epochs_per_month, split):
    """
    Split the storage fee ``W`` into a storage reward per chunk per epoch and
    a reward per successful audit, with a fraction ``split`` of ``W`` going
    to storage rewards.

    Returns ``(rwd_st, rwd_au, n_a)``.
    """
    if not 0 < split <= 1:
        raise ParameterError(f'split must lie in (0, 1], got {split}')
    n_a = p_a * chunks_per_gb * auditors_per_audit * epochs_per_month
    if split < 1 and n_a == 0:
        raise ParameterError('no audits per GB-month, so the auditor share of W cannot be paid out')
    rwd_au = (1 - split) * W / n_a if split < 1 else 0.0
    rwd_st = (W - n_a * rwd_au) / (chunks_per_gb * epochs_per_month)
    return rwd_st, rwd_au, n_a


@dataclass(frozen=True)
class EconomicParams:
    """
    Rewards, penalties and costs. Leaving ``rwd_st``, ``rwd_au`` or ``n_a``
    unset derives them from ``W`` with :func:`normalize_rewards`.

    Costs default to the cloud reference prices of :func:`aws_reference_costs`
    with one chunk counted as one MB.
    """
    W: float = 0.1                  # tokens per GB per month
    p_a: float = 0.02               # per-chunk audit probability per epoch
    C: int = 50                     # on-chain challenges for a zero score
    p_ata: float = 0.01             # audit-the-auditor selection probability
    S_a: float = 1.0                # slash for a failed on-chain audit or proven invalid proof
    S_ata: float = 0.5              # slash for failing audit-the-auditor
    r_slash: float = 0.5            # fraction of a slash paid to the reporter
    c_s: float = _AWS_C_S           # storage cost per chunk per epoch
    c_r: float = _AWS_C_R           # cost of retrieving one chunk externally
    epsilon: float = 0.01
    epochs_per_month: int = 30
    auditors_per_audit: int = 7
    chunks_per_gb: int = 1024
    split: float = 0.8
    c_proof: float = 1e-9           # generating and broadcasting one proof
    c_verify: float = 1e-9          # verifying one received proof
    c_retain: float = 1e-10         # retaining one proof for two epochs
    fee: float = 0.0                # flat cost of any on-chain action
    usd_per_token: float = 1.0
    stake: float = 100.0
    rwd_st: float = None
    rwd_au: float = None
    n_a: float = None

    def __post_init__(self):
        for name in ('p_a', 'p_ata', 'r_slash'):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ParameterError(f'{name} must lie in [0, 1], got {value}')
        if not 0 < self.epsilon <= 1:
            raise ParameterError(f'epsilon must lie in (0, 1], got {self.epsilon}')
        for name in ('W', 'S_a', 'S_ata', 'c_s', 'c_r', 'c_proof', 'c_verify',
                     'c_retain', 'fee', 'stake', 'C'):
            if getattr(self, name) < 0:
                raise ParameterError(f'{name} must not be negative, got {getattr(self, name)}')
        if self.usd_per_token <= 0:
            raise ParameterError(f'usd_per_token must be positive, got {self.usd_per_token}')

        if self.rwd_st is None or self.rwd_au is None or self.n_a is None:
            rwd_st, rwd_au, n_a = normalize_rewards(
                self.W, self.p_a, self.chunks_per_gb, self.auditors_per_audit,
                self.epochs_per_month, self.split)
            for name, value in (('rwd_st', rwd_st), ('rwd_au', rwd_au), ('n_a', n_a)):
                if getattr(self, name) is None:
                    object.__setattr__(self, name, value)
        for name in ('rwd_st', 'rwd_au', 'n_a'):
            if getattr(self, name) < 0:
                raise ParameterError(f'{name} must not be negative, got {getattr(self, name)}')

    @property
    def rwd_st_per_gb_month(self):
        return self.rwd_st * self.chunks_per_gb * self.epochs_per_month

    @property
    def ata_bound(self):
        """The smallest ``S_ata`` that makes rubber-stamping unprofitable."""
        return self.rwd_au / (self.p_ata * self.epsilon)

    def replace(self, **changes):
        """
        A copy with ``changes`` applied. Derived rewards are recomputed unless
        they are among the changes.
        """
        changes.setdefault('rwd_st', None)
        changes.setdefault('rwd_au', None)
        changes.setdefault('n_a', None)
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        """
        Build parameters from a mapping, rejecting unknown names.
        """
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ParameterError(f'unknown economic parameters: {sorted(unknown)}')
        return cls(**d)


@dataclass(frozen=True)
class IncentiveCheck:
    """
    One inequality ``lhs <relation> rhs``. ``margin`` is ``lhs - rhs``.
    """
    name: str
    lhs: float
    rhs: float
    relation: str
    satisfied: bool
    margin: float
    details: dict = field(default_factory=dict)

    @property
    def ratio(self):
        """How many times over the inequality holds."""
        if self.rhs == 0:
            return float('inf') if self.lhs > 0 else (1.0 if self.lhs == 0 else 0.0)
        return self.lhs / self.rhs

def _check(name, lhs, rhs, relation, **details):
    satisfied = lhs > rhs if relation == '>' else lhs >= rhs
    return IncentiveCheck(name, lhs, rhs, relation, bool(satisfied), lhs - rhs, details)


@dataclass(frozen=True)
class IncentiveReport:
    """
    The results of all incentive checks for one parameter set.
    """
    checks: list

    @property
    def satisfied(self):
        return all(check.satisfied for check in self.checks)

    def passes_with_margin(self, factor=2.0):
        """
        Whether every inequality holds ``factor`` times over.
        """
        return all(check.ratio >= factor for check in self.checks)

    def __getitem__(self, name):
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def to_dataframe(self):
        return pd.DataFrame([
            {'name': c.name, 'lhs': c.lhs, 'relation': c.relation, 'rhs': c.rhs,
             'satisfied': c.satisfied, 'margin': c.margin, 'ratio': c.ratio}
            for c in self.checks])

    def to_table(self):
        return self.to_dataframe().to_string(index=False)

    def to_dict(self):
        return {
            'satisfied': self.satisfied,
            'checks': [dataclasses.asdict(c) for c in self.checks],
        }


def check_participation(params):
    """
    Storing a chunk must pay: ``rwd_st >= c_s``.
    """
    return _check('participation', params.rwd_st, params.c_s, '>=')

def check_store_vs_retrieve(params):
    """
    Keeping a chunk must be cheaper than fetching it from elsewhere whenever
    it is audited: ``p_a * c_r >= c_s``. The details carry the smallest
    audit probability that satisfies this, ``c_s / c_r``.
    """
    if params.c_r <= 0:
        raise ParameterError(f'c_r must be positive, got {params.c_r}')
    return _check('store_vs_retrieve', params.p_a * params.c_r, params.c_s, '>=',
                  min_p_a=params.c_s / params.c_r)

def detection_probability(prct_fake, C):
    """
    Lower bound on the probability that on-chain audits catch a provider
    that does not store a fraction ``prct_fake`` of its chunks, when its
    score is ``1 - prct_fake`` and it receives ``(1 - score**2) * C``
    challenges.
    """
    if not 0 < prct_fake <= 1:
        raise ParameterError(f'prct_fake must lie in (0, 1], got {prct_fake}')
    samples = (1 - (1 - prct_fake) ** 2) * C
    return 1 - (1 - prct_fake) ** samples

def check_fake_storage(params, prct_fake, total_committed):
    """
    The expected slash for faking a fraction ``prct_fake`` of
    ``total_committed`` chunks must exceed the storage rewards gained from it
    when unaudited: ``P_Sa * S_a > (1 - p_a) * rwd_st * prct_fake *
    total_committed``.
    """
    p_sa = detection_probability(prct_fake, params.C)
    return _check('fake_storage', p_sa * params.S_a,
                  (1 - params.p_a) * params.rwd_st * prct_fake * total_committed, '>',
                  P_Sa=p_sa, prct_fake=prct_fake, total_committed=total_committed)

def check_ata_calibration(params):
    """
    Rubber-stamping must cost more than it earns:
    ``S_ata >= rwd_au / (p_ata * epsilon)``.
    """
    if params.p_ata <= 0:
        raise ParameterError('p_ata must be positive to calibrate S_ata')
    return _check('ata_calibration', params.S_ata, params.ata_bound, '>=')

def check_all(params, prct_fake=0.1, total_committed=1000):
    """
    Run all four checks.
    """
    report = IncentiveReport([
        check_participation(params),
        check_store_vs_retrieve(params),
        check_fake_storage(params, prct_fake, total_committed),
        check_ata_calibration(params),
    ])
    for check in report.checks:
        if not check.satisfied:
            logger.warning(f'Incentive check "{check.name}" fails: {check.lhs:.6g} {check.relation} {check.rhs:.6g} does not hold')
    return report
