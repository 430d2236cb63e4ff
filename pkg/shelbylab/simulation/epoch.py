# -*- coding: utf-8 -*-
"""
The :mod:`shelbylab.simulation.epoch` module assembles a simulated world and
runs it one audit epoch at a time.

An epoch runs these steps in order: serve the client's reads, derive the
internal challenges, collect the auditees' responses, let every auditor
record the outcome, publish scoreboards, compute audit scores, disburse
rewards, challenge low scorers on-chain, audit the auditors, slash on
submitted evidence, advance the ledger clock past the epoch boundary and
settle the read payment channels there. Every random choice comes from the
ledger beacon, whose genesis seed is derived from the scenario seed and the
trial number, so a trial replays bit for bit.

.. autoclass:: World
   :members:

.. autoclass:: UtilityLedger
   :members:

.. autoclass:: EpochReport
   :members:

.. autofunction:: build_world

.. autofunction:: run_epoch

.. autofunction:: trial_genesis

.. autofunction:: sp_ids
"""

import hashlib
from dataclasses import dataclass, field
import numpy as np
import pandas as pd

from ..protocol.ledger import Ledger, seeded_rng, derive_beacon
from ..protocol.audit import (AuditorState, ATA_TAG, derive_challenges, peer_evaluations, compute_score,
                              onchain_auditee_count, derive_onchain_challenges, verify_onchain_response,
                              audit_the_auditor, verify_auditor_response, submit_evidence)
from ..simulation.actors import Client, RpcNode, StorageProvider
from ..simulation.strategies import HONEST, EvidencePolicy

import logging
logger = logging.getLogger(__name__)


def sp_ids(count):
    """
    The provider ids of a population of ``count``, in order.
    """
    width = max(2, len(str(count - 1)))
    return [f'sp{i:0{width}d}' for i in range(count)]


def trial_genesis(seed, trial):
    """
    The genesis seed of trial ``trial`` of an experiment seeded with
    ``seed``.
    """
    return hashlib.sha256(f'shelbylab:{seed}:{trial}'.encode('utf-8')).digest()


class UtilityLedger():
    """
    Per-provider, per-epoch accounting of rewards, losses and costs.

    >>> utility.add(0, 'sp00', storage_rewards=2e-6, storage_costs=7e-7)
    >>> utility.net('sp00')
    1.3e-06
    """

    GAINS = ('storage_rewards', 'auditor_rewards', 'evidence_rewards', 'read_rewards')
    LOSSES = ('slash_losses', 'storage_costs', 'retrieval_costs', 'proof_overhead_costs')
    COMPONENTS = GAINS + LOSSES

    def __init__(self):
        self.entries = {}  # (epoch, sp_id) -> component -> amount

    def add(self, epoch, sp_id, **amounts):
        row = self.entries.setdefault((epoch, sp_id), dict.fromkeys(self.COMPONENTS, 0.0))
        for component, amount in amounts.items():
            if component not in row:
                raise KeyError(f'unknown utility component "{component}"')
            row[component] += amount

    def extend(self, other):
        for (epoch, sp_id), row in other.entries.items():
            self.add(epoch, sp_id, **row)

    def total(self, component, sp_ids=None):
        return sum(row[component] for (_, sp_id), row in self.entries.items()
                   if sp_ids is None or sp_id in sp_ids)

    def net(self, sp_id):
        """
        Total gains minus total losses of ``sp_id`` over all epochs.
        """
        rows = [row for (_, s), row in self.entries.items() if s == sp_id]
        return (sum(row[c] for row in rows for c in self.GAINS)
                - sum(row[c] for row in rows for c in self.LOSSES))

    def sp_ids(self):
        return sorted({sp_id for _, sp_id in self.entries})

    def to_dataframe(self):
        rows = [{'epoch': epoch, 'sp_id': sp_id, **row} for (epoch, sp_id), row in sorted(self.entries.items())]
        df = pd.DataFrame(rows, columns=['epoch', 'sp_id', *self.COMPONENTS])
        df['net'] = df[list(self.GAINS)].sum(axis=1) - df[list(self.LOSSES)].sum(axis=1)
        return df


@dataclass
class EpochReport:
    """
    What happened in one epoch.
    """
    epoch: int
    challenges: int = 0
    reads: int = 0
    failed_reads: int = 0
    scores: dict = field(default_factory=dict)
    published: list = field(default_factory=list)
    ones: dict = field(default_factory=dict)
    onchain_challenges: dict = field(default_factory=dict)
    ata_selected: dict = field(default_factory=dict)
    slashes: list = field(default_factory=list)
    payouts: dict = field(default_factory=dict)

    def slashed(self, reason=None, sp_ids=None):
        return sum(s['amount'] for s in self.slashes
                   if (reason is None or s['reason'] == reason) and (sp_ids is None or s['sp'] in sp_ids))

    def to_dict(self):
        return {
            'epoch': self.epoch,
            'challenges': self.challenges,
            'reads': self.reads,
            'failed_reads': self.failed_reads,
            'scores': self.scores,
            'published': self.published,
            'ones': self.ones,
            'onchain_challenges': self.onchain_challenges,
            'ata_selected': self.ata_selected,
            'slashes': self.slashes,
            'payouts': self.payouts,
        }


@dataclass
class World:
    """
    A ledger with its providers, one client and one RPC node. The client
    reads every live blob ``reads_per_epoch`` times an epoch.
    """
    ledger: Ledger
    sps: dict
    client: Client
    rpc: RpcNode
    auditors_per_audit: int
    reads_per_epoch: int = 1
    utility: UtilityLedger = field(default_factory=UtilityLedger)
    reports: list = field(default_factory=list)

    @property
    def econ(self):
        return self.ledger.econ

    @property
    def f(self):
        """The number of Byzantine evaluators trimmed from each end."""
        return (len(self.ledger.active_sps()) - 1) // 3


def build_world(econ, coding, sp_count, strategies=None, blob_count=4, blob_size=4096,
                chunkset_size=2048, sample_size=64, duration=30, genesis_seed=b'shelbylab',
                data_seed=0, auditors_per_audit=7, treasury=1000.0, capacity=2**40,
                reads_per_epoch=1):
    """
    Register ``sp_count`` providers, each following its entry in
    ``strategies`` (honest by default), and write ``blob_count`` random blobs
    through the RPC node.
    """
    strategies = strategies or {}
    ledger = Ledger(econ, genesis_seed, treasury=treasury)
    sps = {}
    for sp_id in sp_ids(sp_count):
        ledger.register_sp(sp_id, capacity=capacity)
        sps[sp_id] = StorageProvider(sp_id, econ, strategies.get(sp_id, HONEST),
                                     rng=seeded_rng(derive_beacon(genesis_seed, 0, f'sp-rng:{sp_id}')))
    unknown = set(strategies) - set(sps)
    if unknown:
        logger.warning(f'Ignoring strategies for unknown providers {sorted(unknown)}')

    size_gb = -(-blob_size // chunkset_size) * coding.n / econ.chunks_per_gb
    ledger.create_account('client', balance=blob_count * ledger.storage_price(size_gb, duration) * 2 + 1)
    ledger.create_account('rpc', balance=10.0)
    client = Client('client', ledger)
    rpc = RpcNode('rpc', ledger, sps)
    for sp in sps.values():
        sp.network = rpc.trees.__getitem__
        sp.auditor_state = AuditorState(sp.sp_id)

    rng = np.random.default_rng(data_seed)
    for b in range(blob_count):
        client.write(rpc, f'blob{b}', rng.bytes(blob_size), coding, chunkset_size, sample_size, duration)
    logger.debug(f'Built a world of {sp_count} providers holding {len(ledger.all_holdings())} chunks')
    return World(ledger, sps, client, rpc, auditors_per_audit, reads_per_epoch)


def _score(world, sp_id, challenges, boards):
    evaluations = peer_evaluations(sp_id, challenges, boards)
    f = world.f
    evaluators = sum(1 for _, total in evaluations.values() if total > 0)
    if evaluators <= 2 * f:
        f_eff = max((evaluators - 1) // 2, 0)
        logger.debug(f'{sp_id} has {evaluators} evaluators, trimming {f_eff} instead of {f}')
        f = f_eff
    return compute_score(sp_id, evaluations, f, world.ledger.epoch).score

def run_epoch(world, strategies=None, seed=None):
    """
    Run one epoch of ``world`` and advance the ledger to the next.
    ``strategies`` replaces the behavior of the named providers from this
    epoch on; storage decisions already taken stand. ``seed`` reseeds the
    providers' private randomness for this epoch.

    Returns ``(world, report)``.
    """
    ledger, econ = world.ledger, world.econ
    epoch = ledger.epoch
    report = EpochReport(epoch)
    for sp_id, strategy in (strategies or {}).items():
        world.sps[sp_id].strategy = strategy
    if seed is not None:
        for i, sp_id in enumerate(sorted(world.sps)):
            world.sps[sp_id].rng = np.random.default_rng([seed, epoch, i])
    slash_losses, evidence_rewards = {}, {}

    def slash(sp_id, amount, reporter, reason):
        taken = ledger.slash(sp_id, amount, reporter, reason=reason)
        slash_losses[sp_id] = slash_losses.get(sp_id, 0.0) + taken
        if reporter is not None:
            evidence_rewards[reporter] = evidence_rewards.get(reporter, 0.0) + taken * econ.r_slash
        report.slashes.append({'sp': sp_id, 'amount': taken, 'reporter': reporter, 'reason': reason})

    fees_before = dict(ledger.fees_paid)
    for sp in world.sps.values():
        sp.charge_storage()

    # client reads
    for blob in ledger.live_blobs(epoch):
        for _ in range(world.reads_per_epoch):
            report.reads += 1
            if world.client.read(world.rpc, blob.blob_id) is None:
                report.failed_reads += 1

    # internal audits
    challenges = derive_challenges(epoch, ledger, econ.p_a, world.auditors_per_audit)
    ledger.record_challenges(epoch, challenges)
    report.challenges = len(challenges)
    for challenge in challenges:
        proof = world.sps[challenge.auditee].respond(challenge)
        root = ledger.chunk_root(challenge.chunk_ref)
        for auditor in challenge.auditors:
            world.sps[auditor].audit(challenge, proof, root)

    # scoreboards and scores
    boards = {}
    for sp_id in ledger.active_sps():
        board = world.sps[sp_id].scoreboard(epoch)
        if board is not None:
            ledger.publish_scoreboard(sp_id, board.to_bytes())
            boards[sp_id] = board
            report.published.append(sp_id)
            report.ones[sp_id] = board.ones()
    published = ledger.published_scoreboards()
    audited = sorted({c.auditee for c in challenges})
    report.scores = {sp_id: _score(world, sp_id, challenges, published) for sp_id in audited}

    report.payouts = ledger.disburse_epoch(report.scores, published)

    # on-chain challenges of low scorers
    for sp_id, score in report.scores.items():
        count = onchain_auditee_count(score, econ.C)
        if count == 0 or not ledger.sps[sp_id].active:
            continue
        onchain = derive_onchain_challenges(ledger, sp_id, count, epoch)
        report.onchain_challenges[sp_id] = len(onchain)
        responses = [world.sps[sp_id].respond(c) for c in onchain]
        ledger.charge_fee(sp_id, len([r for r in responses if r is not None]))
        if not all(verify_onchain_response(ledger, c, r) for c, r in zip(onchain, responses)):
            slash(sp_id, econ.S_a, None, 'onchain_audit')

    # audit the auditors
    beacon_seed = ledger.beacon(epoch, ATA_TAG)
    for auditor, board in sorted(boards.items()):
        entries = audit_the_auditor(board, econ.p_ata, beacon_seed)
        report.ata_selected[auditor] = len(entries)
        sp = world.sps[auditor]
        for auditee, position in entries:
            try:
                challenge, retained = sp.auditor_state.entry(epoch, auditee, position)
            except (KeyError, IndexError):
                challenge, proof = None, None
            else:
                proof = sp.reproduce(challenge, retained)
            ledger.charge_fee(auditor)
            if challenge is None or not verify_auditor_response(ledger, challenge, proof):
                slash(auditor, econ.S_ata, None, 'audit_the_auditor')

    # evidence of invalid proofs
    for sp_id in sorted(world.sps):
        sp = world.sps[sp_id]
        evidence = sp.auditor_state.take_evidence()
        if sp.strategy.evidence_policy is not EvidencePolicy.SUBMIT:
            continue
        for proof in evidence:
            event = submit_evidence(ledger, proof, sp_id)
            if event is not None:
                slash_losses[event['sp']] = slash_losses.get(event['sp'], 0.0) + event['amount']
                evidence_rewards[sp_id] = evidence_rewards.get(sp_id, 0.0) + event['amount'] * econ.r_slash
                report.slashes.append(event)

    # close
    ledger.advance_epoch()
    read_rewards = world.rpc.settle_all()
    for sp_id, sp in world.sps.items():
        costs = sp.take_costs()
        fees = ledger.fees_paid.get(sp_id, 0.0) - fees_before.get(sp_id, 0.0)
        payout = report.payouts.get(sp_id, {'storage': 0.0, 'auditor': 0.0})
        world.utility.add(
            epoch, sp_id,
            storage_rewards=payout['storage'],
            auditor_rewards=payout['auditor'],
            evidence_rewards=evidence_rewards.get(sp_id, 0.0),
            read_rewards=read_rewards.get(sp_id, 0.0),
            slash_losses=slash_losses.get(sp_id, 0.0),
            storage_costs=costs['storage_costs'],
            retrieval_costs=costs['retrieval_costs'],
            proof_overhead_costs=costs['proof_overhead_costs'] + fees)
        sp.auditor_state.close_epoch(epoch)
    world.reports.append(report)
    logger.debug(f'Epoch {epoch}: {report.challenges} challenges, {len(report.slashes)} slashes, '
                 f'{report.failed_reads} of {report.reads} reads failed')
    return world, report
