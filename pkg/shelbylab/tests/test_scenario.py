# -*- coding: utf-8 -*-
"""
Tests for scenario files
"""

import os
import tempfile
import unittest

from shelbylab.coding.codec import Scheme
from shelbylab.simulation.scenario import Scenario, ScenarioSelector, load_params_file
from shelbylab.simulation.strategies import HONEST, get_strategy
from shelbylab.scripts import example_file
from shelbylab.exceptions import ParameterError

import logging
logger = logging.getLogger(__name__)


SCENARIO_FILE = """
shelbylab_config:
    shelbylab_version: '>=0.1.0.dev0'

plain:

mixed:
    description: two cheaters
    seed: 7
    sp_count: 12
    strategy_mix:
        store_nothing: 1
        rubber_stamp: 2
    economics:
        p_a: 0.2
        p_ata: 0.1
    coding:
        k: 8
        m: 4
        scheme: ReedSolomon
    workload:
        blob_size: 10000
    experiment: nash
    deviations: [ignore, forge]
    expect:
        nash_passes: true
"""


class ScenarioTestCase(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory(prefix='shelbylab-')
        self.file = os.path.join(self.temp_dir.name, 'test.scenario')
        with open(self.file, 'w') as f:
            f.write(SCENARIO_FILE)

    def tearDown(self):
        self.temp_dir.cleanup()

    def write(self, text):
        with open(self.file, 'w') as f:
            f.write(text)

    def test_selector(self):
        """Test loading, selecting and indexing scenarios"""
        scenarios = ScenarioSelector(file=self.file)
        self.assertEqual(scenarios.keys, ['plain', 'mixed'])
        self.assertIsNone(scenarios.selected_scenario)
        with self.assertLogs('shelbylab.simulation.scenario', level='ERROR'):
            self.assertIsNone(scenarios['seed'])
        scenarios.select('mixed')
        self.assertEqual(scenarios['seed'], 7)
        self.assertEqual(scenarios.get('trials', 5), 5)
        self.assertEqual(scenarios.scenario().name, 'mixed')
        with self.assertRaises(ValueError):
            scenarios.select('missing')
        self.assertEqual(ScenarioSelector(self.file, initial_selection='plain').scenario().name, 'plain')

    def test_defaults(self):
        """Test that an empty scenario takes the default settings"""
        scenario = ScenarioSelector(self.file).scenario('plain')
        self.assertEqual(scenario.sp_count, 10)
        self.assertEqual((scenario.coding.k, scenario.coding.m), (4, 2))
        self.assertIs(scenario.coding.scheme, Scheme.CLAY)
        self.assertEqual(scenario.chunkset_size, 2048)
        self.assertEqual(scenario.sample_size, 64)
        self.assertEqual(scenario.auditors_per_audit, 7)
        self.assertEqual(scenario.econ.auditors_per_audit, 7)
        self.assertEqual(scenario.experiment, 'simulate')
        self.assertEqual(scenario.coalition_sizes, (2,))
        self.assertIsNone(scenario.deviations)
        self.assertEqual(scenario.expect, {})

    def test_overrides(self):
        """Test that scenario settings override the defaults"""
        scenario = ScenarioSelector(self.file).scenario('mixed')
        self.assertEqual(scenario.description, 'two cheaters')
        self.assertEqual(scenario.econ.p_a, 0.2)
        self.assertEqual(scenario.econ.W, 0.1)
        self.assertIs(scenario.coding.scheme, Scheme.REED_SOLOMON)
        self.assertEqual(scenario.blob_size, 10000)
        self.assertEqual(scenario.blob_count, 4)
        self.assertEqual(scenario.deviations, ('ignore', 'forge'))
        self.assertEqual(scenario.expect, {'nash_passes': True})
        self.assertEqual(scenario.to_dict()['coding']['scheme'], 'ReedSolomon')

    def test_strategies(self):
        """Test that the strategy mix is handed out in order"""
        strategies = ScenarioSelector(self.file).scenario('mixed').strategies()
        self.assertEqual(len(strategies), 12)
        self.assertIs(strategies['sp00'], get_strategy('store_nothing'))
        self.assertIs(strategies['sp01'], get_strategy('rubber_stamp'))
        self.assertIs(strategies['sp02'], get_strategy('rubber_stamp'))
        self.assertTrue(all(strategies[sp] is HONEST for sp in list(strategies)[3:]))

    def test_invalid_scenarios(self):
        """Test that bad settings are rejected"""
        with self.assertRaises(ParameterError):
            Scenario.from_dict('x', {'bogus': 1})
        with self.assertRaises(ParameterError):
            Scenario.from_dict('x', {'economics': {'bogus': 1}})
        with self.assertRaises(ParameterError):
            Scenario.from_dict('x', {'sp_count': 5})
        with self.assertRaises(ParameterError):
            Scenario.from_dict('x', {'strategy_mix': {'bribe': 1}})
        with self.assertRaises(ParameterError):
            Scenario.from_dict('x', {'strategy_mix': {'forge': 11}})
        with self.assertRaises(ParameterError):
            Scenario.from_dict('x', {'experiment': 'poker'})
        with self.assertRaises(ParameterError):
            Scenario.from_dict('x', {'trials': 0})

    def test_version_warning(self):
        """Test that an unmet version requirement is logged"""
        self.write("shelbylab_config:\n    shelbylab_version: '>=99'\nplain:\n")
        with self.assertLogs('shelbylab.simulation.scenario', level='WARNING'):
            scenarios = ScenarioSelector(self.file)
        self.assertEqual(scenarios.keys, ['plain'])

    def test_bad_files(self):
        """Test missing and malformed scenario files"""
        with self.assertRaises(FileNotFoundError):
            ScenarioSelector(os.path.join(self.temp_dir.name, 'missing.scenario'))
        self.write('- a\n- b\n')
        with self.assertRaises(ValueError):
            ScenarioSelector(self.file)
        self.write('plain: 3\n')
        with self.assertRaises(ValueError):
            ScenarioSelector(self.file)


class ExampleFilesTestCase(unittest.TestCase):

    def test_examples_pass_checks(self):
        """Test that every bundled scenario parses and passes the incentive checks"""
        for name in ('all_honest.scenario', 'mutual_dishonesty.scenario', 'equilibrium.scenario'):
            scenarios = ScenarioSelector(example_file(name))
            self.assertTrue(scenarios.keys)
            for key in scenarios.keys:
                self.assertTrue(scenarios.scenario(key).check().satisfied, f'{name}: {key}')

    def test_params_file(self):
        """Test the bundled economic parameter file"""
        params, prct_fake, total_committed = load_params_file(example_file('params.yml'))
        self.assertEqual(params.p_a, 0.02)
        self.assertEqual((prct_fake, total_committed), (0.1, 1000))

if __name__ == '__main__':
    unittest.main()
