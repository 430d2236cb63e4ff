# -*- coding: utf-8 -*-
"""
Tests for the durability and availability models
"""

import math
import unittest

from shelbylab.analysis.reliability import (FailureModel, AvailabilityModel, durability, durability_exact,
                                            availability, failure_rate_table, reliability_grid)
from shelbylab.exceptions import ParameterError

import logging
logger = logging.getLogger(__name__)


class DurabilityTestCase(unittest.TestCase):

    def test_reference(self):
        """Test the annual loss probability of a 16-node chunkset tolerating 6 losses"""
        p = durability(FailureModel())
        self.assertLess(abs(p - 3.01e-12) / 3.01e-12, 0.01)

    def test_exact(self):
        """Test that floating point agrees with exact rational arithmetic"""
        for m in range(1, 10):
            for hours in (12, 36, 72):
                model = FailureModel(m=m, mttd_hours=hours / 2, mttr_rebuild_hours=hours / 2)
                exact = durability_exact(model)
                self.assertTrue(math.isclose(durability(model), float(exact), rel_tol=1e-9))

    def test_monotonic(self):
        """Test that loss grows with the critical window and shrinks with m"""
        losses = [durability(FailureModel(mttd_hours=h, mttr_rebuild_hours=h)) for h in (1, 6, 12, 24, 48)]
        self.assertEqual(losses, sorted(losses))
        losses = [durability(FailureModel(m=m)) for m in range(2, 10)]
        self.assertEqual(losses, sorted(losses, reverse=True))

    def test_zero(self):
        """Test that nothing is lost without failures"""
        self.assertEqual(durability(FailureModel(p_chunk_loss_on_trigger=0)), 0)
        self.assertEqual(durability(FailureModel(trigger_rate=0)), 0)
        self.assertEqual(durability(FailureModel(mttd_hours=0, mttr_rebuild_hours=0)), 0)

    def test_invalid(self):
        """Test that impossible models are rejected"""
        for model in (FailureModel(m=16), FailureModel(m=-1), FailureModel(p_chunk_loss_on_trigger=1.5),
                      FailureModel(mttd_hours=-1)):
            with self.assertRaises(ParameterError, msg=model):
                durability(model)


class AvailabilityTestCase(unittest.TestCase):

    def test_reference(self):
        """Test the annual unavailability of five datacenters needing three"""
        p = availability(AvailabilityModel())
        self.assertLess(abs(p - 1.35e-4) / 1.35e-4, 0.01)

    def test_components(self):
        """Test the systemic and datacenter terms separately"""
        self.assertAlmostEqual(availability(AvailabilityModel(dc_uptime=1.0, systemic_outage_minutes_per_year=0,
                                                              p_data_loss=0)), 0.0)
        self.assertAlmostEqual(availability(AvailabilityModel(dc_uptime=1.0, p_data_loss=0)), 30 / 525600)
        self.assertAlmostEqual(availability(AvailabilityModel(min_dcs_required=0, systemic_outage_minutes_per_year=0,
                                                              p_data_loss=0)), 0.0)
        with self.assertRaises(ParameterError):
            availability(AvailabilityModel(min_dcs_required=6))
        with self.assertRaises(ParameterError):
            availability(AvailabilityModel(dc_uptime=1.1))


class GridTestCase(unittest.TestCase):

    def test_grid(self):
        """Test the durability and availability grid"""
        df = reliability_grid(m_values=[4, 6], t_critical_hours=(24, 36))
        self.assertEqual(len(df), 4)
        row = df[(df['m'] == 6) & (df['t_critical_hours'] == 36)].iloc[0]
        self.assertLess(abs(row['p_data_loss'] - 3.01e-12) / 3.01e-12, 0.01)
        self.assertGreater(row['durability_nines'], 11)
        self.assertTrue((df['p_unavailable'] > df['p_data_loss']).all())

    def test_failure_rates(self):
        """Test the reference hardware failure rates"""
        table = failure_rate_table()
        self.assertEqual(table['host'], (0.01, 0.05))
        self.assertEqual(table['drive'], 0.02)

if __name__ == '__main__':
    unittest.main()
