# -*- coding: utf-8 -*-
"""
The :mod:`shelbylab.simulation.actors` module implements the simulated
participants: a :class:`Client` that stores and reads blobs, an
:class:`RpcNode` that prepares, disperses and gathers chunks and pays storage
providers over channels, and a :class:`StorageProvider` that acts according
to its :class:`Strategy <shelbylab.simulation.strategies.Strategy>` and
tallies its operational costs.

.. autoclass:: Client
   :members:

.. autoclass:: RpcNode
   :members:

.. autoclass:: StorageProvider
   :members:
"""

import math

from ..storage.prep import Blob, ChunksetRecord, PreparedBlob, prepare, reassemble
from ..protocol.audit import Scoreboard, respond, forge_proof, record
from ..protocol.payments import ReadSession, open_channel, settle
from ..simulation.strategies import HONEST, ChallengeResponse, AuditorPolicy, ScoreboardPolicy

import logging
logger = logging.getLogger(__name__)


COST_COMPONENTS = ('storage_costs', 'retrieval_costs', 'proof_overhead_costs')


class StorageProvider():
    """
    A storage provider following ``strategy``. Costs incurred since the last
    call to :meth:`take_costs` accumulate in :attr:`costs`.

    ``network`` returns the Merkle tree of any chunk in the system and stands
    for fetching the chunk from another provider, which always succeeds.
    """

    def __init__(self, sp_id, econ, strategy=HONEST, rng=None, network=None):
        self.sp_id = sp_id
        self.econ = econ
        self.strategy = strategy
        self.rng = rng
        self.network = network
        self.storage = {}       # chunk ref -> (chunk, tree) actually kept
        self.assigned = {}      # chunk ref -> commitment of every chunk acknowledged
        self.auditor_state = None
        self.costs = dict.fromkeys(COST_COMPONENTS, 0.0)
        self.retrieved = set()  # chunk refs fetched externally this epoch
        self.verifications = 0

    def charge(self, component, amount):
        self.costs[component] += amount

    def take_costs(self):
        costs, self.costs = self.costs, dict.fromkeys(COST_COMPONENTS, 0.0)
        self.retrieved = set()
        return costs

    @property
    def trees(self):
        return {ref: tree for ref, (_, tree) in self.storage.items()}

    # --- write and read path -------------------------------------------------

    def store(self, chunk_ref, chunk, tree):
        """
        Accept a chunk and acknowledge it. Only the storage policy's share of
        chunks is actually kept, spread evenly over arrivals.
        """
        count = len(self.assigned)
        self.assigned[chunk_ref] = tree.commitment
        p = self.strategy.storage_policy
        if math.floor((count + 1) * p) > math.floor(count * p):
            self.storage[chunk_ref] = (chunk, tree)
        return self.sp_id

    def serve_chunk(self, chunk_ref):
        kept = self.storage.get(chunk_ref)
        return None if kept is None else kept[0]

    def charge_storage(self):
        """Pay for one epoch of keeping the stored chunks."""
        self.charge('storage_costs', self.econ.c_s * len(self.storage))

    # --- audits --------------------------------------------------------------

    def _fetch(self, chunk_ref):
        # a retrieved chunk serves every challenge on it within the epoch
        if chunk_ref not in self.retrieved:
            self.retrieved.add(chunk_ref)
            self.charge('retrieval_costs', self.econ.c_r)
        return {chunk_ref: self.network(chunk_ref)}

    def respond(self, challenge):
        """
        Answer an internal or on-chain challenge, or return ``None``.
        """
        policy = self.strategy.challenge_response
        if policy is ChallengeResponse.IGNORE:
            return None
        if challenge.chunk_ref in self.storage:
            self.charge('proof_overhead_costs', self.econ.c_proof)
            return respond(challenge, self.trees)
        if challenge.chunk_ref not in self.assigned:
            return None
        if policy is ChallengeResponse.RETRIEVE_EXTERNALLY:
            self.charge('proof_overhead_costs', self.econ.c_proof)
            return respond(challenge, self._fetch(challenge.chunk_ref))
        if policy is ChallengeResponse.FORGE:
            self.charge('proof_overhead_costs', self.econ.c_proof)
            return forge_proof(challenge, self.assigned[challenge.chunk_ref], self.rng)
        return None

    def audit(self, challenge, proof, root):
        """
        Record the outcome of a challenge this provider audits, per its
        auditor policy toward the auditee. Returns the bit recorded.
        """
        state = self.auditor_state
        policy = self.strategy.policy_for(challenge.auditee)
        if policy is AuditorPolicy.VERIFY_AND_RETAIN:
            self.charge('proof_overhead_costs', self.econ.c_verify)
            self.verifications += 1
            bit = record(state, challenge, proof, root, self.econ.epsilon)
            if bit:
                self.charge('proof_overhead_costs', self.econ.c_retain)
            return bit
        if policy is AuditorPolicy.DROP_PROOFS:
            self.charge('proof_overhead_costs', self.econ.c_verify)
            self.verifications += 1
            bit = record(state, challenge, proof, root, self.econ.epsilon)
            if bit:
                state.retained.pop(challenge.key, None)
            return bit
        if policy is AuditorPolicy.RUBBER_STAMP:
            state.note(challenge, 1)
            return 1
        if policy is AuditorPolicy.BLIND_ACCEPT:
            if proof is not None:
                self.charge('proof_overhead_costs', self.econ.c_retain)
            state.note(challenge, 1, proof)
            return 1
        state.note(challenge, 0)
        return 0

    def reproduce(self, challenge, proof):
        """
        The proof this provider hands over when one of its scoreboard
        entries is audited. ``proof`` is what it retained, if anything; a
        provider that drops proofs fetches the whole chunk again to rebuild
        it.
        """
        if proof is not None:
            return proof
        if self.strategy.policy_for(challenge.auditee) is AuditorPolicy.DROP_PROOFS:
            if challenge.chunk_ref in self.storage:
                return respond(challenge, self.trees)
            self.charge('retrieval_costs', self.econ.c_r)
            return respond(challenge, {challenge.chunk_ref: self.network(challenge.chunk_ref)})
        return None

    def scoreboard(self, epoch):
        """
        The scoreboard to publish for ``epoch``, or ``None`` to withhold it.
        """
        policy = self.strategy.scoreboard_policy
        if policy is ScoreboardPolicy.WITHHOLD:
            return None
        board = self.auditor_state.scoreboard(epoch)
        if policy is ScoreboardPolicy.ALL_ONES:
            entries = {auditee: (1,) * len(bits) for auditee, bits in board.entries.items()}
            board = Scoreboard(board.auditor, board.epoch, entries)
        return board


class RpcNode():
    """
    A gateway that writes blobs for clients and serves reads, paying storage
    providers for every chunk it fetches.

    Each provider is paid over one channel per epoch, valid for settlement
    from the next epoch boundary on. A provider that takes payment without
    serving is not read from again until the channels are settled.
    """

    def __init__(self, rpc_id, ledger, sps, chunk_price=1e-9, channel_deposit=1e-3):
        self.rpc_id = rpc_id
        self.ledger = ledger
        self.sps = sps
        self.chunk_price = chunk_price
        self.channel_deposit = channel_deposit
        self.layouts = {}    # blob id -> (params, chunkset_size, sample_size, original_length, roots)
        self.sessions = {}   # sp id -> current ReadSession
        self.spent = []      # (sp id, ReadSession) whose deposit ran out, awaiting settlement
        self.trees = {}      # chunk ref -> Merkle tree of every chunk dispersed

    def write(self, client_id, blob, params, chunkset_size, sample_size, payment=None):
        """
        Prepare ``blob``, register it, disperse its chunks and mark it ready
        once every provider acknowledged. Returns the blob metadata.
        """
        prepared = prepare(blob, params, chunkset_size, sample_size)
        chunk_roots = [record.chunk_roots for record in prepared.chunksets]
        if payment is None:
            size_gb = prepared.num_chunksets * params.n / self.ledger.econ.chunks_per_gb
            payment = self.ledger.storage_price(size_gb, blob.paid_duration)
        meta = self.ledger.register_blob(
            blob.id, prepared.blob_root.root, prepared.num_chunksets, params, payment,
            blob.paid_duration, client_id, chunk_roots=chunk_roots, chunk_size=prepared.chunk_size)
        acks = set()
        for record in prepared.chunksets:
            for chunk, tree in zip(record.chunks, record.trees):
                sp_id = meta.chunk_assignment[(record.chunkset_index, chunk.index)]
                self.trees[(blob.id, record.chunkset_index, chunk.index)] = tree
                acks.add(self.sps[sp_id].store((blob.id, record.chunkset_index, chunk.index), chunk, tree))
        self.ledger.mark_ready(blob.id, acks)
        self.layouts[blob.id] = (params, chunkset_size, sample_size, prepared.original_length,
                                 prepared.blob_root)
        return meta

    def _session(self, sp_id):
        """
        The session paying ``sp_id``, or ``None`` if it failed to serve a paid
        read since the last settlement.
        """
        session = self.sessions.get(sp_id)
        if session is not None and session.aborted:
            return None
        if session is None or session.channel.state.refund_amount < self.chunk_price:
            if session is not None:
                self.spent.append((sp_id, session))
            channel = open_channel(self.ledger, self.rpc_id, sp_id, self.channel_deposit,
                                   self.ledger.now + self.ledger.epoch_seconds)
            session = ReadSession(channel, self.chunk_price)
            self.sessions[sp_id] = session
        return session

    def open_sessions(self):
        """
        Every ``(sp_id, session)`` whose channel is not yet settled.
        """
        return self.spent + sorted(self.sessions.items())

    def read(self, blob_id, byte_range=None):
        """
        Gather ``k`` chunks of every chunkset that intersects ``byte_range``,
        paying each provider per chunk, and decode. Returns ``None`` if some
        chunkset cannot be gathered.
        """
        meta = self.ledger.blob(blob_id)
        params, chunkset_size, sample_size, original_length, blob_root = self.layouts[blob_id]
        offset, length = (0, original_length) if byte_range is None else byte_range
        first, last = offset // chunkset_size, max(offset + length - 1, offset) // chunkset_size
        chunksets = []
        for cs in range(meta.num_chunksets):
            chunks = [None] * params.n
            if first <= cs <= last:
                gathered = 0
                for ci in range(params.n):
                    if gathered == params.k:
                        break
                    sp_id = meta.chunk_assignment[(cs, ci)]
                    session = self._session(sp_id)
                    if session is None:
                        continue
                    chunk = session.read(lambda: self.sps[sp_id].serve_chunk((blob_id, cs, ci)))
                    if chunk is not None:
                        chunks[ci] = chunk
                        gathered += 1
                if gathered < params.k:
                    logger.debug(f'Chunkset {cs} of {blob_id} has only {gathered} of {params.k} chunks available')
                    return None
            chunksets.append(ChunksetRecord(cs, chunks, meta.chunk_roots[cs]))
        prepared = PreparedBlob(blob_id, params, chunkset_size, sample_size, original_length,
                                chunksets, blob_root)
        return reassemble(prepared, (offset, length))

    def settle_all(self):
        """
        Settle, at the ledger's current time, every open channel whose latest
        state is valid by then; the others stay open. Returns the amount paid
        to each provider.
        """
        paid, pending = {}, []
        now = self.ledger.now
        for sp_id, session in self.open_sessions():
            channel = session.channel
            if now < channel.state.settle_after:
                pending.append((sp_id, session))
                continue
            payee_amount, _ = settle(channel, channel.state.seq, by=sp_id)
            paid[sp_id] = paid.get(sp_id, 0.0) + payee_amount
        if pending:
            logger.debug(f'{len(pending)} channels of {self.rpc_id} are not yet valid for settlement at {now}')
        self.spent, self.sessions = pending, {}
        return paid


class Client():
    """
    A client storing blobs through an RPC node.
    """

    def __init__(self, client_id, ledger):
        self.client_id = client_id
        self.ledger = ledger

    def write(self, rpc, blob_id, data, params, chunkset_size, sample_size, duration):
        return rpc.write(self.client_id, Blob(blob_id, data, duration), params, chunkset_size, sample_size)

    def read(self, rpc, blob_id, byte_range=None):
        return rpc.read(blob_id, byte_range)
