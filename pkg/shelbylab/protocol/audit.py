# -*- coding: utf-8 -*-
"""
The :mod:`shelbylab.protocol.audit` module implements the hybrid audit
protocol: the internal challenge, proof and scoreboard cycle among storage
providers, trimmed aggregation of peer evaluations into audit scores, the
on-chain challenges of low-scoring providers and of auditors, and slashing
on evidence of invalid proofs.

Scoreboards are published in a compact run-length encoding built from LEB128
unsigned varints:

====================  ==================================================
varint                number of auditees
per auditee, sorted   varint id length, UTF-8 id, encoded bit vector
====================  ==================================================

A bit vector is encoded as its length, its number of runs, the value of its
first bit and the length of every run, all as varints. An all-ones vector of
length ``L`` therefore takes ``O(log L)`` bytes, and an empty scoreboard is
the single byte ``0x00``.

.. autoclass:: AuditChallenge
   :members:

.. autoclass:: AuditProof
   :members:

.. autoclass:: Scoreboard
   :members:

.. autoclass:: AuditScore
   :members:

.. autoclass:: AuditorState
   :members:

.. autofunction:: derive_challenges

.. autofunction:: respond

.. autofunction:: forge_proof

.. autofunction:: record

.. autofunction:: peer_evaluations

.. autofunction:: compute_score

.. autofunction:: onchain_auditee_count

.. autofunction:: derive_onchain_challenges

.. autofunction:: verify_onchain_response

.. autofunction:: audit_the_auditor

.. autofunction:: verify_auditor_response

.. autofunction:: submit_evidence

.. autofunction:: compress_scoreboard

.. autofunction:: decompress_scoreboard

.. autofunction:: simulate_detection
"""

import hashlib
from decimal import Decimal, ROUND_HALF_UP
from dataclasses import dataclass, field
import numpy as np

from ..storage.commitment import InclusionProof, verify
from ..analysis.economics import detection_probability
from ..exceptions import ParameterError, FormatError, InsufficientEvaluationsError

import logging
logger = logging.getLogger(__name__)


INTERNAL_AUDIT_TAG = 'internal-audit'
ONCHAIN_AUDIT_TAG = 'onchain-audit'
ATA_TAG = 'audit-the-auditor'


@dataclass(frozen=True)
class AuditChallenge:
    """
    A request that ``auditee`` prove possession of sample ``sample_index`` of
    the chunk ``chunk_ref = (blob_id, chunkset_index, chunk_index)``.
    Internal challenges name the ``auditors`` who verify the proof; on-chain
    challenges have none.
    """
    epoch: int
    chunk_ref: tuple
    sample_index: int
    auditee: str
    auditors: tuple = ()

    @property
    def key(self):
        return (self.epoch, self.chunk_ref, self.sample_index, self.auditee, self.auditors)


@dataclass(frozen=True)
class AuditProof:
    """
    A sample with its inclusion proof against the chunk root.
    """
    challenge: AuditChallenge
    sample_bytes: bytes = field(repr=False)
    inclusion: InclusionProof = field(repr=False)


@dataclass(frozen=True)
class Scoreboard:
    """
    One auditor's published outcomes for an epoch: for every auditee, one bit
    per challenge of that auditee this auditor verified, 1 for success.
    """
    auditor: str
    epoch: int
    entries: dict

    def ones(self):
        return sum(sum(bits) for bits in self.entries.values())

    def to_bytes(self):
        return compress_scoreboard(self.entries)


@dataclass(frozen=True)
class AuditScore:
    sp_id: str
    epoch: int
    score: float


class AuditorState():
    """
    What one auditor keeps between challenges: the bits it recorded, the
    proofs it retained, in challenge order per auditee, and the invalid
    proofs waiting to be submitted as evidence.

    Proofs recorded in an epoch are retained until the close of the
    following epoch.
    """

    def __init__(self, auditor):
        self.auditor = auditor
        self.bits = {}        # epoch -> auditee -> list of bits
        self.entries = {}     # epoch -> auditee -> list of challenges
        self.retained = {}    # challenge key -> proof
        self.evidence = []    # invalid proofs

    def note(self, challenge, bit, proof=None):
        """
        Append ``bit`` for ``challenge``, retaining ``proof`` if given.
        """
        self.bits.setdefault(challenge.epoch, {}).setdefault(challenge.auditee, []).append(int(bit))
        self.entries.setdefault(challenge.epoch, {}).setdefault(challenge.auditee, []).append(challenge)
        if proof is not None:
            self.retained[challenge.key] = proof

    def scoreboard(self, epoch):
        return Scoreboard(self.auditor, epoch,
                          {auditee: tuple(bits) for auditee, bits in sorted(self.bits.get(epoch, {}).items())})

    def entry(self, epoch, auditee, position):
        """
        The challenge behind a scoreboard entry and the retained proof for
        it, or ``None`` if the proof was not kept.
        """
        challenge = self.entries[epoch][auditee][position]
        return challenge, self.retained.get(challenge.key)

    def take_evidence(self):
        evidence, self.evidence = self.evidence, []
        return evidence

    def close_epoch(self, epoch):
        """
        Forget everything recorded before ``epoch``.
        """
        for stale in [e for e in self.entries if e < epoch]:
            for challenges in self.entries[stale].values():
                for challenge in challenges:
                    self.retained.pop(challenge.key, None)
            del self.entries[stale]
            self.bits.pop(stale, None)


def derive_challenges(epoch, ledger, p_a, auditors_per_audit):
    """
    Select every stored chunk independently with probability ``p_a`` and
    challenge its holder on a uniformly drawn sample, naming
    ``auditors_per_audit`` distinct other active providers as auditors. All
    draws come from the ledger beacon, so every replica derives the same
    list.
    """
    if not 0 < p_a <= 1:
        raise ParameterError(f'p_a must lie in (0, 1], got {p_a}')
    holdings = ledger.all_holdings(epoch)
    rng = ledger.rng(epoch, INTERNAL_AUDIT_TAG)
    selected = np.flatnonzero(rng.random(len(holdings)) < p_a)
    active = ledger.active_sps()

    challenges = []
    for i in selected:
        blob_id, cs, ci, auditee = holdings[i]
        chunk_ref = (blob_id, cs, ci)
        sample_index = int(rng.integers(ledger.chunk_root(chunk_ref).leaf_count))
        candidates = [sp_id for sp_id in active if sp_id != auditee]
        count = min(auditors_per_audit, len(candidates))
        if count < auditors_per_audit:
            logger.debug(f'Only {count} auditors available for {chunk_ref}')
        picks = rng.choice(len(candidates), size=count, replace=False)
        auditors = tuple(sorted(candidates[j] for j in picks))
        challenges.append(AuditChallenge(epoch, chunk_ref, sample_index, auditee, auditors))
    return challenges

def respond(challenge, sp_storage):
    """
    Answer a challenge from ``sp_storage``, a mapping from chunk reference to
    the chunk's :class:`MerkleTree <shelbylab.storage.commitment.MerkleTree>`.
    Returns ``None`` if the chunk is not stored.
    """
    tree = sp_storage.get(challenge.chunk_ref)
    if tree is None:
        return None
    inclusion = tree.open(challenge.sample_index)
    return AuditProof(challenge, inclusion.leaf_bytes, inclusion)

def forge_proof(challenge, commitment, rng):
    """
    A proof of the right shape made of random bytes. It fails verification
    unless the hash function is broken.
    """
    depth = (commitment.leaf_count - 1).bit_length()
    leaf = rng.bytes(commitment.leaf_width)
    path = tuple((rng.bytes(32), (challenge.sample_index >> level) & 1) for level in range(depth))
    return AuditProof(challenge, leaf, InclusionProof(challenge.sample_index, leaf, path))

def _proof_matches(challenge, proof):
    return (proof.challenge.key == challenge.key
            and proof.inclusion.leaf_index == challenge.sample_index
            and bytes(proof.sample_bytes) == bytes(proof.inclusion.leaf_bytes))

def record(auditor_state, challenge, proof, root, epsilon=0.0):
    """
    Record the outcome of ``challenge`` for an auditor that verifies fully:
    1 if ``proof`` is present and verifies against ``root``, else 0. Valid
    proofs are retained; proofs that are present but invalid are queued as
    evidence. Full verification leaves no doubt, so any ``epsilon`` accepts
    exactly the valid proofs.
    """
    if proof is None:
        auditor_state.note(challenge, 0)
        return 0
    if _proof_matches(challenge, proof) and verify(root, proof.inclusion):
        auditor_state.note(challenge, 1, proof)
        return 1
    auditor_state.note(challenge, 0)
    auditor_state.evidence.append(proof)
    return 0

def peer_evaluations(auditee, challenges, scoreboards):
    """
    Count ``(successes, total)`` per auditor of ``auditee`` from the
    challenges and the published scoreboards. An auditor that published
    nothing for ``auditee`` counts as reporting all zeros.
    """
    evaluations = {}
    for challenge in challenges:
        if challenge.auditee != auditee:
            continue
        for auditor in challenge.auditors:
            successes, total = evaluations.get(auditor, (0, 0))
            evaluations[auditor] = (successes, total + 1)
    for auditor, (_, total) in evaluations.items():
        bits = scoreboards.get(auditor, {}).get(auditee, ())
        evaluations[auditor] = (min(int(sum(bits[:total])), total), total)
    return evaluations

def compute_score(auditee, peer_evaluations, f, epoch=None):
    """
    Aggregate peer evaluations: drop auditors with no challenges, take each
    remaining auditor's success fraction, trim the ``f`` highest and ``f``
    lowest and average the rest.
    """
    if f < 0:
        raise ParameterError(f'f must not be negative, got {f}')
    fractions = np.sort([successes / total for successes, total in peer_evaluations.values() if total > 0])
    if len(fractions) <= 2 * f:
        raise InsufficientEvaluationsError(f'{auditee} has {len(fractions)} evaluations, more than {2 * f} needed')
    trimmed = fractions[f:len(fractions) - f]
    return AuditScore(auditee, epoch, float(np.mean(trimmed)))

def onchain_auditee_count(score, C):
    """
    The number of on-chain challenges for a provider with ``score``:
    ``(1 - score**2) * C`` rounded half up.
    """
    if not 0 <= score <= 1:
        raise ParameterError(f'score must lie in [0, 1], got {score}')
    if C < 0:
        raise ParameterError(f'C must not be negative, got {C}')
    s = Decimal(repr(float(score)))
    return int(((1 - s * s) * C).quantize(Decimal(1), rounding=ROUND_HALF_UP))

def derive_onchain_challenges(ledger, sp_id, count, epoch=None):
    """
    Draw ``count`` distinct samples from the holdings of ``sp_id``, all
    samples of all its chunks equally likely. Fewer are drawn if it holds
    fewer samples.
    """
    epoch = ledger.epoch if epoch is None else epoch
    holdings = ledger.holdings(sp_id, epoch)
    if count <= 0 or not holdings:
        return []
    sizes = np.array([ledger.chunk_root(ref).leaf_count for ref in holdings])
    offsets = np.cumsum(sizes)
    count = min(count, int(offsets[-1]))
    rng = ledger.rng(epoch, f'{ONCHAIN_AUDIT_TAG}:{sp_id}')
    picks = np.sort(rng.choice(int(offsets[-1]), size=count, replace=False))
    chunks = np.searchsorted(offsets, picks, side='right')
    challenges = []
    for pick, chunk in zip(picks, chunks):
        start = offsets[chunk] - sizes[chunk]
        challenges.append(AuditChallenge(epoch, holdings[chunk], int(pick - start), sp_id))
    return challenges

def verify_onchain_response(ledger, challenge, proof):
    """
    Whether ``proof`` answers an on-chain challenge.
    """
    if proof is None:
        return False
    return _proof_matches(challenge, proof) and ledger.verify_sample(
        challenge.chunk_ref, challenge.sample_index, proof.inclusion)

def _uniform(beacon_seed, *parts):
    digest = hashlib.sha256(bytes(beacon_seed) + '|'.join(str(p) for p in parts).encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'big') / 2**64

def audit_the_auditor(scoreboard, p_ata, beacon_seed):
    """
    Select each 1-entry of ``scoreboard`` independently with probability
    ``p_ata``. Returns ``(auditee, position)`` references; the auditor must
    reproduce the retained proof of each.
    """
    if not 0 <= p_ata <= 1:
        raise ParameterError(f'p_ata must lie in [0, 1], got {p_ata}')
    selected = []
    for auditee, bits in sorted(scoreboard.entries.items()):
        for position, bit in enumerate(bits):
            if bit and _uniform(beacon_seed, scoreboard.auditor, auditee, position) < p_ata:
                selected.append((auditee, position))
    return selected

def verify_auditor_response(ledger, challenge, proof):
    """
    Whether an auditor reproduced a valid proof for an authentic challenge.
    """
    if proof is None or not ledger.is_authentic(challenge):
        return False
    return _proof_matches(challenge, proof) and ledger.verify_sample(
        challenge.chunk_ref, challenge.sample_index, proof.inclusion)

def submit_evidence(ledger, invalid_proof, reporter):
    """
    Post an invalid proof on-chain. If the challenge is authentic, names
    ``reporter`` as an auditor and the proof indeed fails, the auditee is
    slashed ``S_a`` once per challenge and the reporter is rewarded.
    Rejected evidence only costs the reporter the action fee.

    Returns the slash event, or ``None`` if the evidence was rejected.
    """
    challenge = invalid_proof.challenge
    ledger.charge_fee(reporter)
    if not ledger.is_authentic(challenge) or reporter not in challenge.auditors:
        logger.debug(f'Rejected evidence from {reporter}: challenge not authentic for this reporter')
        return None
    if challenge.key in ledger.evidenced:
        return None
    if _proof_matches(challenge, invalid_proof) and ledger.verify_sample(
            challenge.chunk_ref, challenge.sample_index, invalid_proof.inclusion):
        logger.debug(f'Rejected evidence from {reporter}: the proof verifies')
        return None
    ledger.evidenced.add(challenge.key)
    taken = ledger.slash(challenge.auditee, ledger.econ.S_a, reporter, reason='invalid_proof')
    return {'sp': challenge.auditee, 'amount': taken, 'reporter': reporter, 'reason': 'invalid_proof'}


def _write_varint(value, out):
    if value < 0:
        raise ParameterError(f'cannot encode negative value {value}')
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return

def _read_varint(data, offset):
    value = shift = 0
    while True:
        if offset >= len(data):
            raise FormatError('truncated varint')
        if shift > 63:
            raise FormatError('varint too long')
        byte = data[offset]
        offset += 1
        value |= (byte & 0x7F) << shift
        shift += 7
        if not byte & 0x80:
            return value, offset

def _encode_bits(bits, out):
    bits = np.asarray(bits, dtype=np.uint8)
    if np.any(bits > 1):
        raise ParameterError('bit vectors may hold only 0 and 1')
    _write_varint(len(bits), out)
    if len(bits) == 0:
        _write_varint(0, out)
        _write_varint(0, out)
        return
    boundaries = np.flatnonzero(np.diff(bits)) + 1
    runs = np.diff(np.concatenate(([0], boundaries, [len(bits)])))
    _write_varint(len(runs), out)
    _write_varint(int(bits[0]), out)
    for run in runs:
        _write_varint(int(run), out)

def _decode_bits(data, offset):
    length, offset = _read_varint(data, offset)
    count, offset = _read_varint(data, offset)
    first, offset = _read_varint(data, offset)
    if first > 1:
        raise FormatError(f'first bit must be 0 or 1, got {first}')
    if (length == 0) != (count == 0):
        raise FormatError(f'{count} runs cannot make {length} bits')
    bits = []
    bit = first
    for _ in range(count):
        run, offset = _read_varint(data, offset)
        if run == 0:
            raise FormatError('empty run')
        bits.extend([bit] * run)
        if len(bits) > length:
            raise FormatError(f'runs exceed the declared length {length}')
        bit ^= 1
    if len(bits) != length:
        raise FormatError(f'runs cover {len(bits)} of {length} bits')
    return tuple(bits), offset

def compress_bits(bits):
    """
    Run-length encode one bit vector.
    """
    out = bytearray()
    _encode_bits(bits, out)
    return bytes(out)

def decompress_bits(data):
    bits, offset = _decode_bits(bytes(data), 0)
    if offset != len(data):
        raise FormatError(f'{len(data) - offset} trailing bytes')
    return bits

def compress_scoreboard(entries):
    """
    Encode a scoreboard's ``auditee -> bits`` entries.
    """
    out = bytearray()
    _write_varint(len(entries), out)
    for auditee in sorted(entries):
        name = auditee.encode('utf-8')
        _write_varint(len(name), out)
        out.extend(name)
        _encode_bits(entries[auditee], out)
    return bytes(out)

def decompress_scoreboard(data):
    """
    Decode a scoreboard, raising :class:`FormatError
    <shelbylab.exceptions.FormatError>` on anything but a canonical
    encoding.
    """
    data = bytes(data)
    count, offset = _read_varint(data, 0)
    entries = {}
    previous = None
    for _ in range(count):
        size, offset = _read_varint(data, offset)
        if offset + size > len(data):
            raise FormatError('truncated auditee id')
        try:
            auditee = data[offset:offset + size].decode('utf-8')
        except UnicodeDecodeError as e:
            raise FormatError(f'auditee id is not UTF-8: {e}')
        offset += size
        if previous is not None and auditee <= previous:
            raise FormatError('auditees are not in strictly increasing order')
        previous = auditee
        entries[auditee], offset = _decode_bits(data, offset)
    if offset != len(data):
        raise FormatError(f'{len(data) - offset} trailing bytes')
    return entries


@dataclass(frozen=True)
class DetectionEstimate:
    """
    A Monte Carlo catch rate with its standard error, next to the closed-form
    lower bound.
    """
    rate: float
    stderr: float
    bound: float
    challenges: int
    trials: int


def simulate_detection(prct_fake, C, holdings=1000, trials=10**5, seed=0):
    """
    Estimate how often on-chain challenges catch a provider that stores only
    ``1 - prct_fake`` of ``holdings`` chunks and therefore scores
    ``1 - prct_fake``. Challenges are drawn without replacement, one sample
    per chunk touched.
    """
    if not 0 < prct_fake <= 1:
        raise ParameterError(f'prct_fake must lie in (0, 1], got {prct_fake}')
    count = min(onchain_auditee_count(1 - prct_fake, C), holdings)
    faked = int(round(prct_fake * holdings))
    rng = np.random.default_rng(seed)
    if count == 0 or faked == 0:
        caught = np.zeros(trials, dtype=bool)
    else:
        caught = rng.hypergeometric(faked, holdings - faked, count, size=trials) > 0
    rate = float(caught.mean())
    stderr = float(np.sqrt(rate * (1 - rate) / trials))
    return DetectionEstimate(rate, stderr, detection_probability(prct_fake, C), count, trials)
