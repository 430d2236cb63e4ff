# -*- coding: utf-8 -*-
"""
The :mod:`shelbylab.protocol.ledger` module implements an in-process stand-in
for the coordination contract: accounts and storage-provider stakes, the blob
registry with randomized chunk placement, the epoch clock and randomness
beacon, scoreboard publication, reward disbursement and slashing.

Every mutation goes through one lock, so the ledger has a single writer even
when actors run in threads. Tokens are never created or destroyed after
genesis: balances, stakes, blob escrow, the reward pool, the treasury,
channel escrow, fees and burned tokens always add up to what was minted,
which :meth:`Ledger.check_conservation` verifies.

.. autoclass:: Ledger
   :members:

.. autoclass:: Account
   :members:

.. autoclass:: SpAccount
   :members:

.. autoclass:: BlobMetadata
   :members:

.. autofunction:: derive_beacon

.. autofunction:: seeded_rng
"""

import enum
import json
import math
import hashlib
import functools
import threading
from dataclasses import dataclass, field
import numpy as np

from ..storage.commitment import verify
from ..exceptions import (ParameterError, PaymentError, ConflictError, IncompleteWriteError,
                          NotFoundError, AssignmentError)

import logging
logger = logging.getLogger(__name__)


def derive_beacon(genesis_seed, epoch, tag):
    """
    The 32-byte public random seed for ``(epoch, tag)``.
    """
    return hashlib.sha256(bytes(genesis_seed) + int(epoch).to_bytes(8, 'big') + tag.encode('utf-8')).digest()

def seeded_rng(seed):
    """
    A :class:`numpy.random.Generator` seeded from bytes.
    """
    return np.random.default_rng(int.from_bytes(seed, 'big'))

def _serialized(method):
    @functools.wraps(method)
    def wrapper(self, *args, **kwargs):
        with self._lock:
            return method(self, *args, **kwargs)
    return wrapper

def _jsonable(value):
    if isinstance(value, bytes):
        return value.hex()
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.integer, np.floating)):
        return value.item()
    return value


class BlobState(enum.Enum):
    REGISTERED = 'Registered'
    READY = 'Ready'
    EXPIRED = 'Expired'      # paid duration ran out before the blob became ready


@dataclass
class Account:
    """
    A token balance. Flat fees may drive it below zero.
    """
    account_id: str
    balance: float = 0.0


@dataclass
class SpAccount(Account):
    """
    A storage provider's balance, stake and declared capacity in bytes.
    """
    stake: float = 0.0
    declared_capacity: int = 0
    used_capacity: int = 0
    active: bool = True


@dataclass
class BlobMetadata:
    """
    The registry entry of a blob. ``chunk_assignment`` maps
    ``(chunkset_index, chunk_index)`` to the provider holding that chunk.
    """
    blob_id: str
    blob_root: bytes
    owner: str
    num_chunksets: int
    params: object
    chunk_size: int
    chunk_roots: list = field(repr=False)
    chunk_assignment: dict = field(repr=False)
    state: BlobState = BlobState.REGISTERED
    registered_epoch: int = 0
    paid_until: int = 0
    payment_escrow: float = 0.0
    release_per_epoch: float = 0.0

    def assigned_sps(self):
        return set(self.chunk_assignment.values())

    def live_at(self, epoch):
        return self.state is BlobState.READY and self.registered_epoch <= epoch < self.paid_until


class Ledger():
    """
    The coordination ledger.

    >>> ledger = Ledger(EconomicParams(), genesis_seed=b'genesis')
    >>> ledger.create_account('client', balance=10)
    >>> for i in range(20):
    ...     ledger.register_sp(f'sp{i:02d}', stake=100, capacity=2**30)
    >>> meta = ledger.register_blob('b', root, 1, RS_10_6, payment=1, duration=30, client='client')
    >>> len(meta.assigned_sps())
    16
    """

    def __init__(self, econ, genesis_seed, epoch_seconds=86400, treasury=0.0):
        self.econ = econ
        self.genesis_seed = bytes(genesis_seed)
        self.epoch_seconds = epoch_seconds
        self.epoch = 0
        self.now = 0.0

        self.accounts = {}
        self.sps = {}
        self.blobs = {}
        self.scoreboards = {}   # epoch -> auditor -> encoded scoreboard
        self.challenges = {}    # epoch -> set of authentic challenge keys
        self.evidenced = set()  # challenge keys already slashed on evidence
        self.channels = {}      # channel id -> (payer, payee, deposit)

        self.treasury = float(treasury)
        self.reward_pool = 0.0
        self.channel_escrow = 0.0
        self.burned = 0.0
        self.fees_collected = 0.0
        self.fees_paid = {}     # account id -> fees charged
        self.minted = float(treasury)

        self.events = []
        self._lock = threading.RLock()

    # --- accounts ------------------------------------------------------------

    @_serialized
    def create_account(self, account_id, balance=0.0):
        if account_id in self.accounts:
            raise ConflictError(f'account {account_id} already exists')
        self.accounts[account_id] = Account(account_id, float(balance))
        self.minted += balance
        return self.accounts[account_id]

    @_serialized
    def register_sp(self, sp_id, stake=None, capacity=2**40, balance=0.0):
        """
        Admit a storage provider with ``stake`` (default ``econ.stake``) and a
        declared capacity in bytes.
        """
        if sp_id in self.accounts:
            raise ConflictError(f'account {sp_id} already exists')
        stake = self.econ.stake if stake is None else stake
        if stake < 0:
            raise ParameterError(f'stake must not be negative, got {stake}')
        sp = SpAccount(sp_id, float(balance), float(stake), int(capacity))
        self.accounts[sp_id] = sp
        self.sps[sp_id] = sp
        self.minted += balance + stake
        self._emit('sp_registered', sp=sp_id, stake=stake, capacity=capacity)
        return sp

    def account(self, account_id):
        try:
            return self.accounts[account_id]
        except KeyError:
            raise NotFoundError(f'unknown account {account_id}')

    def sp(self, sp_id):
        try:
            return self.sps[sp_id]
        except KeyError:
            raise NotFoundError(f'unknown storage provider {sp_id}')

    def active_sps(self):
        return sorted(sp_id for sp_id, sp in self.sps.items() if sp.active)

    @_serialized
    def charge_fee(self, account_id, count=1):
        """
        Charge the flat fee of ``count`` on-chain actions.
        """
        amount = self.econ.fee * count
        if amount:
            self.account(account_id).balance -= amount
            self.fees_collected += amount
            self.fees_paid[account_id] = self.fees_paid.get(account_id, 0.0) + amount
        return amount

    # --- randomness and time -------------------------------------------------

    def beacon(self, epoch, purpose_tag):
        """
        The public random seed for ``(epoch, purpose_tag)``, the same for
        every caller.
        """
        return derive_beacon(self.genesis_seed, epoch, purpose_tag)

    def rng(self, epoch, purpose_tag):
        return seeded_rng(self.beacon(epoch, purpose_tag))

    @_serialized
    def advance_epoch(self):
        """
        Close the current epoch: expire blobs whose payment ran out and forget
        scoreboards older than two epochs. The leftover escrow of an expired
        ready blob goes to the treasury; a blob that never became ready is
        refunded to its owner in full. Either way its providers get their
        capacity back.
        """
        self.epoch += 1
        self.now += self.epoch_seconds
        for blob in self.blobs.values():
            if blob.paid_until != self.epoch:
                continue
            if blob.state is BlobState.READY:
                self.treasury += blob.payment_escrow
                self._emit('blob_expired', blob=blob.blob_id)
            else:
                self.account(blob.owner).balance += blob.payment_escrow
                blob.state = BlobState.EXPIRED
                self._emit('blob_abandoned', blob=blob.blob_id, refund=blob.payment_escrow)
            blob.payment_escrow = 0.0
            for sp_id in blob.chunk_assignment.values():
                self.sps[sp_id].used_capacity -= blob.chunk_size
        for epoch in [e for e in self.scoreboards if e < self.epoch - 2]:
            del self.scoreboards[epoch]
        for epoch in [e for e in self.challenges if e < self.epoch - 2]:
            del self.challenges[epoch]
        self._emit('epoch_started')

    # --- blobs ---------------------------------------------------------------

    def storage_price(self, size_gb, duration):
        """Payment required to store ``size_gb`` for ``duration`` epochs."""
        return self.econ.W * size_gb * duration / self.econ.epochs_per_month

    @_serialized
    def register_blob(self, blob_id, blob_root, num_chunksets, params, payment, duration,
                      client, chunk_roots=None, chunk_size=0, size_gb=None):
        """
        Register a blob and place its chunks.

        Every chunkset is placed on ``n`` distinct active providers with
        spare capacity, drawn uniformly with the beacon for this blob.
        ``size_gb`` defaults to the stored chunk count over
        ``econ.chunks_per_gb``.
        """
        if blob_id in self.blobs:
            raise ConflictError(f'blob {blob_id} is already registered')
        if duration < 1 or num_chunksets < 1:
            raise ParameterError('duration and chunkset count must be positive')
        if size_gb is None:
            size_gb = num_chunksets * params.n / self.econ.chunks_per_gb
        required = self.storage_price(size_gb, duration)
        if payment < required:
            raise PaymentError(f'payment {payment} is below the price {required} for {size_gb} GB over {duration} epochs')
        payer = self.account(client)
        if payer.balance < payment:
            raise PaymentError(f'{client} has {payer.balance}, cannot pay {payment}')

        assignment = {}
        for cs in range(num_chunksets):
            eligible = [sp_id for sp_id in self.active_sps()
                        if self.sps[sp_id].declared_capacity - self.sps[sp_id].used_capacity >= chunk_size]
            if len(eligible) < params.n:
                raise AssignmentError(f'{len(eligible)} eligible providers, {params.n} needed for chunkset {cs} of {blob_id}')
            rng = self.rng(self.epoch, f'assign:{blob_id}:{cs}')
            chosen = rng.choice(len(eligible), size=params.n, replace=False)
            for ci, j in enumerate(chosen):
                sp_id = eligible[j]
                assignment[(cs, ci)] = sp_id
                self.sps[sp_id].used_capacity += chunk_size

        payer.balance -= payment
        blob = BlobMetadata(
            blob_id=blob_id,
            blob_root=bytes(blob_root),
            owner=client,
            num_chunksets=num_chunksets,
            params=params,
            chunk_size=chunk_size,
            chunk_roots=chunk_roots,
            chunk_assignment=assignment,
            registered_epoch=self.epoch,
            paid_until=self.epoch + duration,
            payment_escrow=float(payment),
            release_per_epoch=float(payment) / duration,
        )
        self.blobs[blob_id] = blob
        self.charge_fee(client)
        self._emit('blob_registered', blob=blob_id, root=blob.blob_root, chunksets=num_chunksets,
                   payment=payment, paid_until=blob.paid_until)
        return blob

    @_serialized
    def mark_ready(self, blob_id, acks):
        """
        Mark a blob readable once every assigned provider acknowledged it.
        """
        blob = self.blob(blob_id)
        if blob.state is BlobState.EXPIRED:
            raise IncompleteWriteError(f'blob {blob_id} expired before it became ready')
        missing = blob.assigned_sps() - set(acks)
        if missing:
            raise IncompleteWriteError(f'blob {blob_id} lacks acknowledgements from {sorted(missing)}')
        if blob.state is BlobState.REGISTERED:
            blob.state = BlobState.READY
            self._emit('blob_ready', blob=blob_id)
        return blob

    def blob(self, blob_id):
        try:
            return self.blobs[blob_id]
        except KeyError:
            raise NotFoundError(f'unknown blob {blob_id}')

    def live_blobs(self, epoch=None):
        epoch = self.epoch if epoch is None else epoch
        return [self.blobs[b] for b in sorted(self.blobs) if self.blobs[b].live_at(epoch)]

    def all_holdings(self, epoch=None):
        """
        Every stored chunk of every live blob as ``(blob_id, chunkset_index,
        chunk_index, sp_id)``, in a fixed order.
        """
        holdings = []
        for blob in self.live_blobs(epoch):
            for (cs, ci), sp_id in sorted(blob.chunk_assignment.items()):
                holdings.append((blob.blob_id, cs, ci, sp_id))
        return holdings

    def holdings(self, sp_id, epoch=None):
        """
        The chunk references ``(blob_id, chunkset_index, chunk_index)`` that
        ``sp_id`` is paid to store.
        """
        return [(b, cs, ci) for b, cs, ci, holder in self.all_holdings(epoch) if holder == sp_id]

    def chunk_root(self, chunk_ref):
        blob_id, cs, ci = chunk_ref
        return self.blob(blob_id).chunk_roots[cs][ci]

    def holder(self, chunk_ref):
        blob_id, cs, ci = chunk_ref
        return self.blob(blob_id).chunk_assignment[(cs, ci)]

    def verify_sample(self, chunk_ref, sample_index, proof):
        """
        Whether ``proof`` opens sample ``sample_index`` of the committed
        chunk.
        """
        if proof is None or proof.leaf_index != sample_index:
            return False
        return verify(self.chunk_root(chunk_ref), proof)

    @_serialized
    def record_challenges(self, epoch, challenges):
        """
        Remember the internal challenges of ``epoch`` so that evidence and
        auditor responses can be checked against them.
        """
        self.challenges.setdefault(epoch, set()).update(c.key for c in challenges)
        self._emit('challenges_recorded', challenge_epoch=epoch, count=len(challenges))

    def is_authentic(self, challenge):
        return challenge.key in self.challenges.get(challenge.epoch, ())

    # --- scoreboards, rewards and slashing -----------------------------------

    @_serialized
    def publish_scoreboard(self, auditor, encoded):
        """
        Record an auditor's compressed scoreboard for the current epoch.
        """
        from .audit import decompress_scoreboard
        decompress_scoreboard(encoded)  # reject malformed boards up front
        self.scoreboards.setdefault(self.epoch, {})[auditor] = bytes(encoded)
        self.charge_fee(auditor)
        self._emit('scoreboard_published', auditor=auditor, size=len(encoded))

    def published_scoreboards(self, epoch=None):
        """
        The decoded scoreboards of ``epoch`` as ``auditor -> {auditee: bits}``.
        """
        from .audit import decompress_scoreboard
        epoch = self.epoch if epoch is None else epoch
        boards = self.scoreboards.get(epoch, {})
        return {auditor: decompress_scoreboard(boards[auditor]) for auditor in sorted(boards)}

    @_serialized
    def disburse_epoch(self, scores, scoreboards=None, onchain_results=()):
        """
        Pay the epoch's rewards and apply slashes.

        Each live blob releases its per-epoch share of escrow into the reward
        pool. A provider earns ``rwd_st * chunks * score`` for storage and
        ``rwd_au`` per 1-entry of its published scoreboard; a provider without
        a score (it was not audited) counts as 1. Shortfalls in the pool are
        covered by the treasury, and if that runs dry all rewards are scaled
        down alike. ``onchain_results`` are ``(sp_id, amount, reporter)``
        slashes. Returns the reward paid to each provider.
        """
        if scoreboards is None:
            scoreboards = self.published_scoreboards()

        for blob in self.live_blobs():
            release = min(blob.release_per_epoch, blob.payment_escrow)
            blob.payment_escrow -= release
            self.reward_pool += release

        chunks = {}
        for _, _, _, sp_id in self.all_holdings():
            chunks[sp_id] = chunks.get(sp_id, 0) + 1

        owed = {}
        for sp_id in self.active_sps():
            storage = self.econ.rwd_st * chunks.get(sp_id, 0) * scores.get(sp_id, 1.0)
            ones = sum(sum(bits) for bits in scoreboards.get(sp_id, {}).values())
            owed[sp_id] = (storage, self.econ.rwd_au * ones)

        total = sum(s + a for s, a in owed.values())
        if total > self.reward_pool:
            draw = min(total - self.reward_pool, self.treasury)
            self.treasury -= draw
            self.reward_pool += draw
        scale = 1.0
        if total > self.reward_pool:
            scale = self.reward_pool / total
            logger.warning(f'Epoch {self.epoch}: reward pool and treasury hold {self.reward_pool:.6g} of {total:.6g} owed, scaling rewards by {scale:.6g}')

        payouts = {}
        for sp_id, (storage, audit) in owed.items():
            paid = (storage + audit) * scale
            self.sps[sp_id].balance += paid
            self.reward_pool -= paid
            payouts[sp_id] = {'storage': storage * scale, 'auditor': audit * scale}
        self.reward_pool = max(self.reward_pool, 0.0)

        for sp_id, amount, reporter in onchain_results:
            self.slash(sp_id, amount, reporter)

        self._emit('epoch_disbursed', total=total * scale, scale=scale)
        return payouts

    @_serialized
    def slash(self, sp_id, amount, reporter=None, reason=None):
        """
        Take up to ``amount`` from a provider's stake. A reporter receives the
        ``r_slash`` fraction of what was taken and the rest is burned. A
        provider whose stake reaches zero is deactivated. Returns the amount
        taken.
        """
        sp = self.sp(sp_id)
        if amount <= 0:
            raise ParameterError(f'slash amount must be positive, got {amount}')
        taken = min(amount, sp.stake)
        sp.stake -= taken
        reward = 0.0
        if reporter is not None:
            reward = taken * self.econ.r_slash
            self.account(reporter).balance += reward
        self.burned += taken - reward
        self._emit('slash', sp=sp_id, amount=taken, reporter=reporter, reason=reason)
        if sp.stake <= 0 and sp.active:
            sp.active = False
            self._emit('sp_deactivated', sp=sp_id)
        return taken

    # --- payment channels ----------------------------------------------------

    @_serialized
    def lock_channel_funds(self, channel_id, payer, payee, deposit):
        if channel_id in self.channels:
            raise ConflictError(f'channel {channel_id} already exists')
        account = self.account(payer)
        self.account(payee)
        if deposit <= 0 or account.balance < deposit:
            raise PaymentError(f'{payer} has {account.balance}, cannot deposit {deposit}')
        account.balance -= deposit
        self.channel_escrow += deposit
        self.channels[channel_id] = (payer, payee, deposit)
        self.charge_fee(payer)
        self._emit('channel_open', channel=channel_id, payer=payer, payee=payee, deposit=deposit)

    @_serialized
    def release_channel_funds(self, channel_id, payee_amount, payer_amount):
        payer, payee, deposit = self.channels[channel_id]
        if not math.isclose(payee_amount + payer_amount, deposit, rel_tol=1e-12, abs_tol=1e-15):
            raise PaymentError(f'settlement of {channel_id} does not split the deposit {deposit}')
        self.channel_escrow -= deposit
        self.account(payee).balance += payee_amount
        self.account(payer).balance += deposit - payee_amount
        self.charge_fee(payee)
        self._emit('channel_settle', channel=channel_id, payee_amount=payee_amount, payer_amount=payer_amount)

    # --- accounting and logs -------------------------------------------------

    def total_supply(self):
        return (sum(a.balance for a in self.accounts.values())
                + sum(sp.stake for sp in self.sps.values())
                + sum(b.payment_escrow for b in self.blobs.values())
                + self.reward_pool + self.treasury + self.channel_escrow
                + self.burned + self.fees_collected)

    def check_conservation(self, rel_tol=1e-9):
        """
        Whether every minted token is still accounted for.
        """
        return math.isclose(self.total_supply(), self.minted, rel_tol=rel_tol, abs_tol=1e-9)

    def _emit(self, event_type, **payload):
        self.events.append({'epoch': self.epoch, 'type': event_type, 'payload': _jsonable(payload)})

    def event_lines(self):
        """The event log as newline-delimited JSON."""
        return ''.join(json.dumps(event, sort_keys=True) + '\n' for event in self.events)

    def write_event_log(self, path):
        with open(path, 'w') as f:
            f.write(self.event_lines())
        logger.debug(f'Wrote {len(self.events)} ledger events to {path}')
