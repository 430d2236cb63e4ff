# -*- coding: utf-8 -*-
"""
The :mod:`shelbylab.simulation.strategies` module describes how a simulated
storage provider behaves at each decision point of an epoch.

A :class:`Strategy` combines a storage policy (the fraction of assigned
chunks actually kept), a way of answering challenges on chunks it does not
keep, an auditor policy, an evidence policy and a scoreboard policy. The
honest strategy keeps everything, answers every challenge, verifies and
retains every proof it audits, submits invalid proofs as evidence and
publishes its scoreboard truthfully.

Named presets are available in :data:`PRESETS` and through
:func:`get_strategy`.

.. autoclass:: Strategy
   :members:

.. autofunction:: get_strategy

.. autofunction:: coalition_strategy
"""

import enum
import dataclasses
from dataclasses import dataclass, field

from ..exceptions import ParameterError

import logging
logger = logging.getLogger(__name__)


class ChallengeResponse(enum.Enum):
    HONEST = 'Honest'                             # answer from storage, nothing if not kept
    IGNORE = 'Ignore'                             # never answer
    RETRIEVE_EXTERNALLY = 'RetrieveExternally'    # fetch missing chunks at cost c_r
    FORGE = 'Forge'                               # random proofs for missing chunks


class AuditorPolicy(enum.Enum):
    VERIFY_AND_RETAIN = 'VerifyAndRetain'
    RUBBER_STAMP = 'RubberStamp'      # record 1, keep nothing
    REPORT_ALL_ZERO = 'ReportAllZero'
    DROP_PROOFS = 'DropProofs'        # verify but do not retain
    BLIND_ACCEPT = 'BlindAccept'      # record 1 without verifying, retain what arrives


class EvidencePolicy(enum.Enum):
    SUBMIT = 'Submit'
    WITHHOLD = 'Withhold'


class ScoreboardPolicy(enum.Enum):
    TRUTHFUL = 'Truthful'
    ALL_ONES = 'AllOnes'
    WITHHOLD = 'Withhold'


@dataclass(frozen=True)
class Strategy:
    """
    A storage provider's behavioral policy. ``peer_policies`` overrides
    ``auditor_policy`` for particular auditees.
    """
    name: str = 'honest'
    storage_policy: float = 1.0
    challenge_response: ChallengeResponse = ChallengeResponse.HONEST
    auditor_policy: AuditorPolicy = AuditorPolicy.VERIFY_AND_RETAIN
    evidence_policy: EvidencePolicy = EvidencePolicy.SUBMIT
    scoreboard_policy: ScoreboardPolicy = ScoreboardPolicy.TRUTHFUL
    peer_policies: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if not 0 <= self.storage_policy <= 1:
            raise ParameterError(f'storage_policy must lie in [0, 1], got {self.storage_policy}')

    def policy_for(self, auditee):
        return self.peer_policies.get(auditee, self.auditor_policy)

    @property
    def is_honest(self):
        return (self.storage_policy == 1
                and self.challenge_response is ChallengeResponse.HONEST
                and self.auditor_policy is AuditorPolicy.VERIFY_AND_RETAIN
                and self.evidence_policy is EvidencePolicy.SUBMIT
                and self.scoreboard_policy is ScoreboardPolicy.TRUTHFUL
                and all(p is AuditorPolicy.VERIFY_AND_RETAIN for p in self.peer_policies.values()))

    def to_dict(self):
        return {
            'name': self.name,
            'storage_policy': self.storage_policy,
            'challenge_response': self.challenge_response.value,
            'auditor_policy': self.auditor_policy.value,
            'evidence_policy': self.evidence_policy.value,
            'scoreboard_policy': self.scoreboard_policy.value,
            'peer_policies': {k: v.value for k, v in sorted(self.peer_policies.items())},
        }


HONEST = Strategy()

PRESETS = {
    'honest': HONEST,
    'ignore': Strategy('ignore', challenge_response=ChallengeResponse.IGNORE),
    'retrieve': Strategy('retrieve', storage_policy=0.0,
                         challenge_response=ChallengeResponse.RETRIEVE_EXTERNALLY),
    'forge': Strategy('forge', storage_policy=0.0, challenge_response=ChallengeResponse.FORGE),
    'rubber_stamp': Strategy('rubber_stamp', auditor_policy=AuditorPolicy.RUBBER_STAMP),
    'drop_proofs': Strategy('drop_proofs', auditor_policy=AuditorPolicy.DROP_PROOFS),
    'partial_0.5': Strategy('partial_0.5', storage_policy=0.5),
    'partial_0.9': Strategy('partial_0.9', storage_policy=0.9),
    'store_nothing': Strategy('store_nothing', storage_policy=0.0),
    'withhold_scoreboard': Strategy('withhold_scoreboard', scoreboard_policy=ScoreboardPolicy.WITHHOLD),
    'mutual_dishonesty': Strategy('mutual_dishonesty', storage_policy=0.0,
                                  challenge_response=ChallengeResponse.IGNORE,
                                  auditor_policy=AuditorPolicy.RUBBER_STAMP,
                                  scoreboard_policy=ScoreboardPolicy.ALL_ONES),
    'defector': Strategy('defector', storage_policy=0.0,
                         challenge_response=ChallengeResponse.IGNORE),
}

DEVIATIONS = ['ignore', 'retrieve', 'forge', 'rubber_stamp', 'drop_proofs',
              'partial_0.5', 'partial_0.9', 'store_nothing']


def get_strategy(name):
    """
    The preset named ``name``. ``partial_<fraction>`` names an otherwise
    honest provider keeping that fraction of its chunks, for any fraction in
    [0, 1]:

    >>> get_strategy('partial_0.75').storage_policy
    0.75
    """
    if name in PRESETS:
        return PRESETS[name]
    prefix, _, fraction = name.partition('_')
    if prefix == 'partial' and fraction:
        try:
            storage_policy = float(fraction)
        except ValueError:
            raise ParameterError(f'cannot parse the stored fraction of "{name}"')
        return Strategy(name, storage_policy=storage_policy)
    raise ParameterError(f'unknown strategy "{name}", choose from {sorted(PRESETS)} or partial_<fraction>')

def coalition_strategy(members, internal_policy=AuditorPolicy.BLIND_ACCEPT, outsider_policy=None,
                       base=HONEST, name='coalition'):
    """
    A strategy for coalition ``members``: ``internal_policy`` when auditing a
    fellow member and ``outsider_policy`` (by default that of ``base``) when
    auditing anyone else.
    """
    outsider_policy = base.auditor_policy if outsider_policy is None else outsider_policy
    return dataclasses.replace(
        base,
        name=name,
        auditor_policy=outsider_policy,
        peer_policies={member: internal_policy for member in members})
