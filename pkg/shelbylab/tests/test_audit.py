# -*- coding: utf-8 -*-
"""
Tests for the audit protocol
"""

import math
import numpy as np
import unittest

from shelbylab.analysis.economics import EconomicParams
from shelbylab.coding.codec import CLAY_4_2, RS_10_6
from shelbylab.storage.commitment import MerkleCommitment, HASH_SIZE
from shelbylab.protocol.ledger import Ledger
from shelbylab.protocol.audit import (AuditorState, Scoreboard, derive_challenges, respond, forge_proof, record,
                                      peer_evaluations, compute_score, onchain_auditee_count,
                                      derive_onchain_challenges, verify_onchain_response, audit_the_auditor,
                                      verify_auditor_response, submit_evidence, compress_scoreboard,
                                      decompress_scoreboard, compress_bits, decompress_bits,
                                      simulate_detection)
from shelbylab.simulation.epoch import build_world
from shelbylab.exceptions import ParameterError, FormatError, InsufficientEvaluationsError

import logging
logger = logging.getLogger(__name__)


def small_world(genesis_seed=b'audit'):
    return build_world(EconomicParams(), CLAY_4_2, 10, blob_count=2, blob_size=4096,
                       chunkset_size=2048, sample_size=64, genesis_seed=genesis_seed)


class ChallengeTestCase(unittest.TestCase):

    def setUp(self):
        self.world = small_world()
        self.ledger = self.world.ledger

    def test_every_chunk_at_p_a_one(self):
        """Test that p_a = 1 challenges every stored chunk once"""
        challenges = derive_challenges(0, self.ledger, 1.0, 7)
        self.assertEqual(len(challenges), len(self.ledger.all_holdings()))
        self.assertEqual(len(challenges), 2 * 2 * 6)
        for challenge in challenges:
            self.assertEqual(len(challenge.auditors), 7)
            self.assertEqual(len(set(challenge.auditors)), 7)
            self.assertNotIn(challenge.auditee, challenge.auditors)
            self.assertEqual(self.ledger.holder(challenge.chunk_ref), challenge.auditee)
            self.assertTrue(0 <= challenge.sample_index < 8)

    def test_deterministic(self):
        """Test that every replica derives the same challenges"""
        other = small_world().ledger
        a = [c.key for c in derive_challenges(0, self.ledger, 0.5, 7)]
        b = [c.key for c in derive_challenges(0, other, 0.5, 7)]
        self.assertEqual(a, b)
        self.assertNotEqual(a, [c.key for c in derive_challenges(1, self.ledger, 0.5, 7)])

    def test_too_few_auditors(self):
        """Test that auditors are capped at the other active providers"""
        challenges = derive_challenges(0, self.ledger, 1.0, 20)
        self.assertTrue(all(len(c.auditors) == 9 for c in challenges))

    def test_invalid_p_a(self):
        """Test that p_a outside (0, 1] is rejected"""
        for p_a in (0, -0.1, 1.5):
            with self.assertRaises(ParameterError):
                derive_challenges(0, self.ledger, p_a, 7)

    def test_challenge_count(self):
        """Test that p_a = 0.0076 over 10,000 chunks averages 76 challenges over 1000 epochs"""
        ledger = Ledger(EconomicParams(), b'challenge count')
        ledger.create_account('client', balance=1e6)
        for i in range(20):
            ledger.register_sp(f'sp{i:02d}')
        chunksets = 10_000 // RS_10_6.n
        root = MerkleCommitment(b'\x00' * HASH_SIZE, 8, 64)
        meta = ledger.register_blob('big', b'r', chunksets, RS_10_6, duration=1000, client='client',
                                    payment=ledger.storage_price(10_000 / ledger.econ.chunks_per_gb, 1000),
                                    chunk_roots=[[root] * RS_10_6.n for _ in range(chunksets)])
        ledger.mark_ready('big', meta.assigned_sps())
        self.assertEqual(len(ledger.all_holdings()), 10_000)

        p_a, trials = 0.0076, 1000
        counts = [len(derive_challenges(epoch, ledger, p_a, 7)) for epoch in range(trials)]
        expected = 10_000 * p_a
        sigma = math.sqrt(10_000 * p_a * (1 - p_a) / trials)
        self.assertLessEqual(abs(np.mean(counts) - expected), 3 * sigma)


class RecordTestCase(unittest.TestCase):

    def setUp(self):
        self.world = small_world()
        self.ledger = self.world.ledger
        self.challenge = derive_challenges(0, self.ledger, 1.0, 7)[0]
        self.root = self.ledger.chunk_root(self.challenge.chunk_ref)
        self.state = AuditorState(self.challenge.auditors[0])

    def test_valid(self):
        """Test that a valid proof records 1 and is retained"""
        proof = respond(self.challenge, self.world.rpc.trees)
        self.assertEqual(record(self.state, self.challenge, proof, self.root), 1)
        self.assertEqual(self.state.entry(0, self.challenge.auditee, 0), (self.challenge, proof))
        self.assertEqual(self.state.evidence, [])

    def test_missing(self):
        """Test that a missing proof records 0 without evidence"""
        self.assertIsNone(respond(self.challenge, {}))
        self.assertEqual(record(self.state, self.challenge, None, self.root), 0)
        self.assertEqual(self.state.evidence, [])
        self.assertEqual(self.state.scoreboard(0).entries, {self.challenge.auditee: (0,)})

    def test_invalid(self):
        """Test that an invalid proof records 0 and is queued as evidence"""
        forged = forge_proof(self.challenge, self.root, np.random.default_rng(0))
        self.assertEqual(record(self.state, self.challenge, forged, self.root, epsilon=0.5), 0)
        self.assertEqual(self.state.take_evidence(), [forged])
        self.assertEqual(self.state.evidence, [])

    def test_close_epoch(self):
        """Test that closing an epoch forgets older proofs"""
        proof = respond(self.challenge, self.world.rpc.trees)
        record(self.state, self.challenge, proof, self.root)
        self.state.close_epoch(0)
        self.assertEqual(len(self.state.retained), 1)
        self.state.close_epoch(1)
        self.assertEqual(self.state.retained, {})
        self.assertEqual(self.state.scoreboard(0).entries, {})


class ScoreTestCase(unittest.TestCase):

    def test_trimmed_mean(self):
        """Test trimming the highest and lowest evaluation"""
        evaluations = {'a': (1, 1), 'b': (1, 1), 'c': (1, 1), 'd': (0, 1), 'e': (1, 2), 'idle': (0, 0)}
        self.assertAlmostEqual(compute_score('x', evaluations, 1).score, 0.8333, places=4)

    def test_byzantine_bound(self):
        """Test that the score stays between the honest extremes whatever up to f of n - 1 evaluators report"""
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n_sp = int(rng.integers(7, 32))
            f = (n_sp - 1) // 3
            byzantine = int(rng.integers(0, f + 1))
            evaluations, honest = {}, []
            for i in range(n_sp - 1):
                total = int(rng.integers(1, 21))
                if i < byzantine:
                    successes = total * int(rng.integers(0, 2))
                else:
                    successes = int(rng.integers(0, total + 1))
                    honest.append(successes / total)
                evaluations[f'sp{i:02d}'] = (successes, total)
            score = compute_score('x', evaluations, f).score
            self.assertGreaterEqual(score, min(honest) - 1e-12, f'{n_sp} providers, {byzantine} byzantine')
            self.assertLessEqual(score, max(honest) + 1e-12, f'{n_sp} providers, {byzantine} byzantine')

    def test_insufficient(self):
        """Test that 2f or fewer evaluators cannot be trimmed"""
        with self.assertRaises(InsufficientEvaluationsError):
            compute_score('x', {'a': (1, 1), 'b': (1, 1), 'c': (0, 0)}, 1)
        with self.assertRaises(ParameterError):
            compute_score('x', {'a': (1, 1)}, -1)

    def test_peer_evaluations(self):
        """Test that an auditor without a published entry counts as all zeros"""
        world = small_world()
        challenges = derive_challenges(0, world.ledger, 1.0, 7)
        auditee = challenges[0].auditee
        boards = {auditor: {auditee: (1,) * 10} for auditor in challenges[0].auditors[1:]}
        evaluations = peer_evaluations(auditee, challenges, boards)
        mine = [c for c in challenges if c.auditee == auditee]
        for auditor, (successes, total) in evaluations.items():
            self.assertEqual(total, sum(auditor in c.auditors for c in mine))
            self.assertEqual(successes, 0 if auditor not in boards else total)
        self.assertEqual(evaluations[challenges[0].auditors[0]][0], 0)

    def test_onchain_count(self):
        """Test the number of on-chain challenges for a score"""
        self.assertEqual(onchain_auditee_count(0.9, 50), 10)
        self.assertEqual(onchain_auditee_count(1, 50), 0)
        self.assertEqual(onchain_auditee_count(0, 50), 50)
        self.assertEqual(onchain_auditee_count(0.5, 2), 2)  # 1.5 rounds up
        with self.assertRaises(ParameterError):
            onchain_auditee_count(1.1, 50)
        with self.assertRaises(ParameterError):
            onchain_auditee_count(0.5, -1)


class OnchainTestCase(unittest.TestCase):

    def setUp(self):
        self.world = small_world()
        self.ledger = self.world.ledger
        self.sp_id = self.ledger.all_holdings()[0][3]

    def test_distinct_samples(self):
        """Test that on-chain challenges name distinct samples held by the provider"""
        held = self.ledger.holdings(self.sp_id)
        challenges = derive_onchain_challenges(self.ledger, self.sp_id, 5)
        self.assertEqual(len(challenges), min(5, 8 * len(held)))
        self.assertEqual(len({(c.chunk_ref, c.sample_index) for c in challenges}), len(challenges))
        for challenge in challenges:
            self.assertIn(challenge.chunk_ref, held)
            self.assertEqual(challenge.auditors, ())

    def test_capped(self):
        """Test that no more challenges are drawn than samples held"""
        held = self.ledger.holdings(self.sp_id)
        challenges = derive_onchain_challenges(self.ledger, self.sp_id, 10**6)
        self.assertEqual(len(challenges), 8 * len(held))
        self.assertEqual(derive_onchain_challenges(self.ledger, self.sp_id, 0), [])

    def test_verify_response(self):
        """Test verification of honest, missing and forged on-chain responses"""
        challenge = derive_onchain_challenges(self.ledger, self.sp_id, 1)[0]
        proof = respond(challenge, self.world.rpc.trees)
        self.assertTrue(verify_onchain_response(self.ledger, challenge, proof))
        self.assertFalse(verify_onchain_response(self.ledger, challenge, None))
        forged = forge_proof(challenge, self.ledger.chunk_root(challenge.chunk_ref), np.random.default_rng(1))
        self.assertFalse(verify_onchain_response(self.ledger, challenge, forged))


class AuditTheAuditorTestCase(unittest.TestCase):

    def setUp(self):
        self.board = Scoreboard('sp01', 0, {'sp00': (1, 0, 1, 1), 'sp02': (1,) * 20, 'sp03': (0, 0)})

    def test_extremes(self):
        """Test that p_ata = 0 selects nothing and p_ata = 1 every 1-entry"""
        self.assertEqual(audit_the_auditor(self.board, 0.0, b'seed'), [])
        selected = audit_the_auditor(self.board, 1.0, b'seed')
        self.assertEqual(len(selected), self.board.ones())
        self.assertNotIn(('sp00', 1), selected)
        self.assertFalse(any(auditee == 'sp03' for auditee, _ in selected))

    def test_deterministic(self):
        """Test that selection depends only on the beacon seed"""
        self.assertEqual(audit_the_auditor(self.board, 0.5, b'seed'), audit_the_auditor(self.board, 0.5, b'seed'))
        with self.assertRaises(ParameterError):
            audit_the_auditor(self.board, 1.5, b'seed')

    def test_verify_auditor_response(self):
        """Test that a reproduced proof must answer an authentic challenge"""
        world = small_world()
        challenge = derive_challenges(0, world.ledger, 1.0, 7)[0]
        proof = respond(challenge, world.rpc.trees)
        self.assertFalse(verify_auditor_response(world.ledger, challenge, proof))
        world.ledger.record_challenges(0, [challenge])
        self.assertTrue(verify_auditor_response(world.ledger, challenge, proof))
        self.assertFalse(verify_auditor_response(world.ledger, challenge, None))


class EvidenceTestCase(unittest.TestCase):

    def setUp(self):
        self.world = small_world()
        self.ledger = self.world.ledger
        self.challenge = derive_challenges(0, self.ledger, 1.0, 7)[0]
        self.ledger.record_challenges(0, [self.challenge])
        self.forged = forge_proof(self.challenge, self.ledger.chunk_root(self.challenge.chunk_ref),
                                  np.random.default_rng(2))
        self.reporter = self.challenge.auditors[0]

    def test_slash_once(self):
        """Test that evidence slashes S_a once per challenge and rewards the reporter"""
        stake = self.ledger.sp(self.challenge.auditee).stake
        event = submit_evidence(self.ledger, self.forged, self.reporter)
        self.assertEqual(event['amount'], self.ledger.econ.S_a)
        self.assertEqual(event['reason'], 'invalid_proof')
        self.assertEqual(self.ledger.sp(self.challenge.auditee).stake, stake - 1)
        self.assertEqual(self.ledger.sp(self.reporter).balance, 0.5)
        self.assertIsNone(submit_evidence(self.ledger, self.forged, self.challenge.auditors[1]))
        self.assertEqual(self.ledger.sp(self.challenge.auditee).stake, stake - 1)
        self.assertTrue(self.ledger.check_conservation())

    def test_rejected(self):
        """Test that valid proofs, outside reporters and unknown challenges are rejected"""
        valid = respond(self.challenge, self.world.rpc.trees)
        self.assertIsNone(submit_evidence(self.ledger, valid, self.reporter))
        outsider = next(sp for sp in self.ledger.active_sps()
                        if sp not in self.challenge.auditors and sp != self.challenge.auditee)
        self.assertIsNone(submit_evidence(self.ledger, self.forged, outsider))
        unknown = derive_challenges(1, self.ledger, 1.0, 7)[0]
        forged = forge_proof(unknown, self.ledger.chunk_root(unknown.chunk_ref), np.random.default_rng(3))
        self.assertIsNone(submit_evidence(self.ledger, forged, unknown.auditors[0]))
        self.assertEqual(self.ledger.burned, 0)


class CompressionTestCase(unittest.TestCase):

    def test_all_ones(self):
        """Test that a long all-ones scoreboard compresses to a few bytes"""
        data = compress_scoreboard({'sp00': (1,) * 10**4})
        self.assertLessEqual(len(data), 16)
        self.assertEqual(decompress_scoreboard(data), {'sp00': (1,) * 10**4})

    def test_empty(self):
        """Test the empty scoreboard and empty bit vectors"""
        self.assertEqual(compress_scoreboard({}), b'\x00')
        self.assertEqual(decompress_scoreboard(b'\x00'), {})
        self.assertEqual(decompress_bits(compress_bits(())), ())

    def test_random(self):
        """Test decoding random scoreboards"""
        rng = np.random.default_rng(0)
        for _ in range(50):
            entries = {f'sp{i:02d}': tuple(int(b) for b in rng.random(int(rng.integers(0, 200))) < rng.random())
                       for i in rng.choice(30, size=int(rng.integers(0, 8)), replace=False)}
            self.assertEqual(decompress_scoreboard(compress_scoreboard(entries)), entries)

    def test_malformed(self):
        """Test that non-canonical or damaged encodings raise FormatError"""
        data = compress_scoreboard({'a': (1, 0, 0), 'b': (1,)})
        bad = [data[:-1], data + b'\x00', b'\x80', b'\x01\x05ab',
               b'\x02\x01b\x01\x01\x01\x01\x01a\x01\x01\x01\x01',   # auditees out of order
               b'\x01\x01a\x02\x02\x01\x01\x00',                   # empty run
               b'\x01\x01a\x01\x01\x02\x01',                       # first bit 2
               b'\x01\x01a\x03\x01\x01\x02']                       # runs short of length
        for data in bad:
            with self.assertRaises(FormatError, msg=data):
                decompress_scoreboard(data)
        with self.assertRaises(ParameterError):
            compress_bits((0, 2))


class DetectionTestCase(unittest.TestCase):

    def test_monte_carlo_bound(self):
        """Test that simulated catch rates respect the closed-form lower bound"""
        for prct_fake in (0.05, 0.1, 0.3):
            estimate = simulate_detection(prct_fake, 50, trials=20000, seed=1)
            self.assertGreaterEqual(estimate.rate, estimate.bound - 3 * estimate.stderr)
        estimate = simulate_detection(0.1, 50, trials=20000)
        self.assertEqual(estimate.challenges, 10)
        self.assertGreaterEqual(estimate.bound, 0.632)

if __name__ == '__main__':
    unittest.main()
