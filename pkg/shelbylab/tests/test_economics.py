# -*- coding: utf-8 -*-
"""
Tests for the incentive analysis
"""

import unittest

from shelbylab.analysis.economics import (EconomicParams, aws_reference_costs, normalize_rewards,
                                          check_participation, check_store_vs_retrieve, detection_probability,
                                          check_fake_storage, check_ata_calibration, check_all)
from shelbylab.exceptions import ParameterError

import logging
logger = logging.getLogger(__name__)


class CostsTestCase(unittest.TestCase):

    def test_reference_costs(self):
        """Test the cloud reference storage and retrieval costs"""
        c_s, c_r = aws_reference_costs()
        self.assertAlmostEqual(c_s, 0.023 / 1000 / 30)
        self.assertAlmostEqual(c_r, 1e-4)
        params = EconomicParams()
        self.assertEqual((params.c_s, params.c_r), (c_s, c_r))

    def test_normalization(self):
        """Test that storage and auditor rewards add up to W per GB-month"""
        for p_a in (0.0076, 0.02, 0.2):
            rwd_st, rwd_au, n_a = normalize_rewards(0.1, p_a, 1024, 7, 30, 0.8)
            self.assertAlmostEqual(n_a, p_a * 1024 * 7 * 30)
            self.assertAlmostEqual(n_a * rwd_au + rwd_st * 1024 * 30, 0.1)
            self.assertAlmostEqual(n_a * rwd_au, 0.02)
        self.assertAlmostEqual(normalize_rewards(0.1, 0.0076, 1024, 7, 30, 0.8)[2], 1634.304)

    def test_split_one(self):
        """Test that split = 1 pays everything as storage rewards"""
        rwd_st, rwd_au, _ = normalize_rewards(0.1, 0.0, 1024, 7, 30, 1.0)
        self.assertEqual(rwd_au, 0.0)
        self.assertAlmostEqual(rwd_st, 0.1 / (1024 * 30))
        for split in (0, -0.5, 1.5):
            with self.assertRaises(ParameterError):
                normalize_rewards(0.1, 0.02, 1024, 7, 30, split)
        with self.assertRaises(ParameterError):
            normalize_rewards(0.1, 0.0, 1024, 7, 30, 0.8)

    def test_params(self):
        """Test derived rewards, overrides and validation"""
        params = EconomicParams()
        self.assertAlmostEqual(params.rwd_st_per_gb_month, 0.08)
        self.assertAlmostEqual(params.replace(p_a=0.2).rwd_au * 10, params.rwd_au)
        self.assertEqual(EconomicParams(rwd_st=1.0).rwd_st, 1.0)
        self.assertEqual(EconomicParams.from_dict(params.to_dict()), params)
        with self.assertRaises(ParameterError):
            EconomicParams.from_dict({'W': 0.1, 'bogus': 1})
        for bad in ({'p_a': 1.5}, {'S_a': -1}, {'epsilon': 0}, {'usd_per_token': 0}):
            with self.assertRaises(ParameterError, msg=bad):
                EconomicParams(**bad)


class IncentiveTestCase(unittest.TestCase):

    def test_min_p_a(self):
        """Test the smallest audit probability that makes storing cheaper than retrieving"""
        check = check_store_vs_retrieve(EconomicParams())
        self.assertGreaterEqual(check.details['min_p_a'], 0.0076)
        self.assertLessEqual(check.details['min_p_a'], 0.0077)
        self.assertFalse(check_store_vs_retrieve(EconomicParams(p_a=0.0076)).satisfied)
        self.assertTrue(check_store_vs_retrieve(EconomicParams(p_a=0.0077)).satisfied)

    def test_detection_probability(self):
        """Test catch probabilities of on-chain audits"""
        self.assertGreaterEqual(detection_probability(0.1, 50), 0.632)
        self.assertAlmostEqual(detection_probability(0.5, 50), 1 - 2 ** -37.5)
        self.assertEqual(detection_probability(1.0, 50), 1.0)
        self.assertEqual(detection_probability(0.1, 0), 0.0)
        previous = 0.0
        for prct_fake in (0.01, 0.05, 0.1, 0.3, 0.6, 1.0):
            p = detection_probability(prct_fake, 50)
            self.assertGreater(p, previous)
            previous = p
        self.assertLess(detection_probability(0.1, 20), detection_probability(0.1, 50))
        with self.assertRaises(ParameterError):
            detection_probability(0, 50)

    def test_fake_storage(self):
        """Test the fake-storage inequality"""
        check = check_fake_storage(EconomicParams(), 0.1, 1000)
        self.assertTrue(check.satisfied)
        self.assertAlmostEqual(check.details['P_Sa'], detection_probability(0.1, 50))
        self.assertFalse(check_fake_storage(EconomicParams(S_a=0.0), 0.1, 1000).satisfied)

    def test_ata_boundary(self):
        """Test that S_ata equal to its bound passes and anything below fails"""
        params = EconomicParams()
        self.assertAlmostEqual(params.ata_bound, params.rwd_au / (0.01 * 0.01))
        self.assertTrue(check_ata_calibration(params.replace(S_ata=params.ata_bound)).satisfied)
        self.assertFalse(check_ata_calibration(params.replace(S_ata=params.ata_bound * 0.999)).satisfied)
        with self.assertRaises(ParameterError):
            check_ata_calibration(params.replace(p_ata=0.0))

    def test_participation(self):
        """Test that storage rewards must cover storage costs"""
        self.assertTrue(check_participation(EconomicParams()).satisfied)
        self.assertFalse(check_participation(EconomicParams(W=1e-4)).satisfied)

    def test_report(self):
        """Test the combined report for the default parameters"""
        report = check_all(EconomicParams())
        self.assertTrue(report.satisfied)
        self.assertTrue(report.passes_with_margin(2.0))
        self.assertEqual([c.name for c in report.checks],
                         ['participation', 'store_vs_retrieve', 'fake_storage', 'ata_calibration'])
        self.assertEqual(report['ata_calibration'].relation, '>=')
        with self.assertRaises(KeyError):
            report['missing']
        df = report.to_dataframe()
        self.assertEqual(list(df['name']), [c.name for c in report.checks])
        self.assertIn('ratio', df.columns)
        self.assertTrue(report.to_dict()['satisfied'])
        self.assertIn('store_vs_retrieve', report.to_table())

    def test_failing_report_warns(self):
        """Test that failing checks are logged"""
        with self.assertLogs('shelbylab.analysis.economics', level='WARNING') as logs:
            report = check_all(EconomicParams(p_a=0.005))
        self.assertFalse(report.satisfied)
        self.assertTrue(any('store_vs_retrieve' in message for message in logs.output))

if __name__ == '__main__':
    unittest.main()
