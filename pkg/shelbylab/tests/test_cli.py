# -*- coding: utf-8 -*-
"""
Tests for the command line interface
"""

import io
import os
import json
import shutil
from subprocess import check_output
import tempfile
import pkg_resources
import copy
import fileinput
import re
import numpy as np
import unittest
from unittest import mock

import shelbylab

import logging
logger = logging.getLogger(__name__)


class CLITestCase(unittest.TestCase):

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory(prefix='shelbylab-')
        self.out = os.path.join(self.temp_dir.name, 'out')

        # the user's own settings come back in tearDown
        self.original_config = copy.deepcopy(shelbylab.global_config)

        # tests run against a private copy of the factory defaults
        shelbylab.global_config.clear()
        shelbylab.global_config.update(copy.deepcopy(
            shelbylab._global_config_factory_defaults))
        shelbylab.global_config['simulation']['progress_bars'] = False

        self.example_file = pkg_resources.resource_filename(
            'shelbylab', 'example/all_honest.scenario')
        self.example_scenario = 'all honest'

    def tearDown(self):
        self.temp_dir.cleanup()

        shelbylab.global_config.clear()
        shelbylab.global_config.update(self.original_config)

    def write_scenario(self, text):
        file = os.path.join(self.temp_dir.name, 'test.scenario')
        with open(file, 'w') as f:
            f.write(text)
        return file

    def read_json(self, *parts):
        with open(os.path.join(*parts)) as f:
            return json.load(f)

    def test_global_config_template(self):
        """Test that every setting in the config template equals its factory default"""

        # uncomment every setting in a copy of the template and load it
        template_global_config_file = pkg_resources.resource_filename(
            'shelbylab', 'global_config_template.txt')
        temp_global_config_file = shutil.copy(
            template_global_config_file, self.temp_dir.name)
        with fileinput.input(temp_global_config_file, inplace=True) as f:
            for line in f:
                if re.match('#.*=.*', line):
                    line = line[1:]
                print(line, end='')  # fileinput writes stdout back to the file
        shelbylab.global_config['simulation']['progress_bars'] = True
        shelbylab.update_global_config_from_file(temp_global_config_file)

        self.assertEqual(shelbylab.global_config,
                         shelbylab._global_config_factory_defaults,
                         'the config template disagrees with the factory defaults')

    def test_cli_installed(self):
        """Test that the shelbylab console script is on the path"""
        self.assertIsNotNone(shutil.which('shelbylab'), 'path to cli not found')

    def test_help(self):
        """Test that --help prints usage"""
        argv = ['shelbylab', '--help']
        out = check_output(argv)
        self.assertTrue(out.decode('utf-8').startswith('usage: shelbylab'),
                        'unexpected --help output')

    def test_version(self):
        """Test that --version prints the package version"""
        argv = ['shelbylab', '--version']
        out = check_output(argv)
        self.assertTrue(out.decode('utf-8').startswith('shelbylab'),
                        'unexpected --version output')

    def test_cli_defaults(self):
        """Test that unset options take the factory defaults"""
        argv = ['shelbylab', 'run', 'example']
        args = shelbylab.parse_args(argv)
        factory_defaults = shelbylab._global_config_factory_defaults['defaults']
        for k in ('out', 'workers', 'debug', 'deterministic', 'force'):
            self.assertEqual(getattr(args, k), factory_defaults[k],
                             f'{k} differs from its factory default')
        self.assertIsNone(args.seed, 'seed should defer to the scenario')
        self.assertIsNone(args.trials, 'trials should defer to the scenario')
        self.assertIsNone(args.scenario)

    def test_debug(self):
        """Test that --debug and --no-debug switch the package log level"""
        args = shelbylab.parse_args(['shelbylab', 'reliability', '--debug'])
        self.assertTrue(args.debug)
        self.assertEqual(logging.getLogger('shelbylab').level, logging.DEBUG)
        args = shelbylab.parse_args(['shelbylab', 'reliability', '--no-debug'])
        self.assertFalse(args.debug)
        self.assertEqual(logging.getLogger('shelbylab').level, shelbylab.default_log_level)

    def test_use_factory_defaults(self):
        """Test that --use-factory-defaults ignores a modified global config"""
        for k in shelbylab.global_config['defaults']:
            shelbylab.global_config['defaults'][k] = 12345
        argv = ['shelbylab', 'reliability', '--use-factory-defaults']
        args = shelbylab.parse_args(argv)
        for k, v in shelbylab._global_config_factory_defaults['defaults'].items():
            if k in ('seed', 'trials'):
                continue
            self.assertEqual(getattr(args, k), v,
                             f'{k} kept a value from the global config')

    def test_reliability(self):
        """Test that reliability reports the loss and unavailability probabilities"""
        argv = ['shelbylab', 'reliability', '--out', self.out, '--deterministic']
        with mock.patch('sys.stdout', new_callable=io.StringIO) as stdout:
            self.assertEqual(shelbylab.main(argv), 0)
        self.assertIn('P(data loss)   3.01e-12', stdout.getvalue())
        report = self.read_json(self.out, 'reliability.json')
        self.assertLess(abs(report['p_unavailable'] - 1.35e-4) / 1.35e-4, 0.01)
        self.assertNotIn('generated', report)
        self.assertEqual(report['schema_version'], 1)
        self.assertTrue(os.path.exists(os.path.join(self.out, 'reliability.csv')))

    def test_econ_check(self):
        """Test that econ-check passes the bundled parameters and fails a low audit probability"""
        argv = ['shelbylab', 'econ-check', '--out', self.out]
        with mock.patch('sys.stdout', new_callable=io.StringIO) as stdout:
            self.assertEqual(shelbylab.main(argv), 0)
        self.assertIn('fake_storage', stdout.getvalue())
        report = self.read_json(self.out, 'incentive_report.json')
        self.assertTrue(report['satisfied'])
        self.assertIn('generated', report)

        params = os.path.join(self.temp_dir.name, 'params.yml')
        with open(params, 'w') as f:
            f.write('p_a: 0.005\nprct_fake: 0.2\n')
        argv = ['shelbylab', 'econ-check', params, '--out', self.out]
        with mock.patch('sys.stdout', new_callable=io.StringIO):
            self.assertEqual(shelbylab.main(argv), 2)
        report = self.read_json(self.out, 'incentive_report.json')
        self.assertFalse(report['satisfied'])
        self.assertEqual(report['prct_fake'], 0.2)

        with open(params, 'w') as f:
            f.write('bogus: 1\n')
        self.assertEqual(shelbylab.main(['shelbylab', 'econ-check', params, '--out', self.out]), 1)

    def test_prepare_reassemble(self):
        """Test that a prepared file reassembles with lost chunks and byte ranges"""
        data = np.random.default_rng(0).bytes(5000)
        source = os.path.join(self.temp_dir.name, 'data.bin')
        with open(source, 'wb') as f:
            f.write(data)
        chunks = os.path.join(self.temp_dir.name, 'chunks')
        argv = ['shelbylab', 'prepare', source, '--out', chunks, '--k', '4', '--m', '2']
        self.assertEqual(shelbylab.main(argv), 0)
        self.assertTrue(os.path.exists(os.path.join(chunks, 'manifest.json')))

        output = os.path.join(self.temp_dir.name, 'copy.bin')
        argv = ['shelbylab', 'reassemble', chunks, '--lost', '0', '5', '--output', output]
        self.assertEqual(shelbylab.main(argv), 0)
        with open(output, 'rb') as f:
            self.assertEqual(f.read(), data)

        argv = ['shelbylab', 'reassemble', chunks, '--range', '1000', '3000', '--output', output]
        self.assertEqual(shelbylab.main(argv), 0)
        with open(output, 'rb') as f:
            self.assertEqual(f.read(), data[1000:4000])

        argv = ['shelbylab', 'reassemble', chunks, '--lost', '0', '1', '2', '--output', output]
        self.assertEqual(shelbylab.main(argv), 1)
        argv = ['shelbylab', 'reassemble', chunks, '--range', '4000', '2000', '--output', output]
        self.assertEqual(shelbylab.main(argv), 1)

    def test_run(self):
        """Test that run writes every output of a passing scenario"""
        argv = ['shelbylab', 'run', self.example_file, '--out', self.out,
                '--trials', '2', '--deterministic']
        self.assertEqual(shelbylab.main(argv), 0)
        out = os.path.join(self.out, self.example_scenario)
        for name in ('incentive_report.json', 'events.ndjson', 'utility.csv',
                     'reliability.csv', 'summary.json'):
            self.assertTrue(os.path.exists(os.path.join(out, name)), name)
        summary = self.read_json(out, 'summary.json')
        self.assertEqual(summary['failed_expectations'], [])
        self.assertEqual(summary['measured']['slash_events'], 0)
        self.assertTrue(summary['measured']['all_scores_one'])
        self.assertEqual(summary['scenario']['trials'], 2)
        with open(os.path.join(out, 'events.ndjson')) as f:
            self.assertTrue(all(json.loads(line)['type'] for line in f))

    def test_run_deterministic(self):
        """Test that repeated deterministic runs write identical files"""
        outputs = []
        for run in ('a', 'b'):
            out = os.path.join(self.temp_dir.name, run)
            argv = ['shelbylab', 'simulate', self.example_file, self.example_scenario,
                    '--out', out, '--trials', '2', '--seed', '9', '--deterministic']
            self.assertEqual(shelbylab.main(argv), 0)
            files = {}
            for name in ('summary.json', 'events.ndjson', 'utility.csv'):
                with open(os.path.join(out, self.example_scenario, name), 'rb') as f:
                    files[name] = f.read()
            outputs.append(files)
        self.assertEqual(outputs[0], outputs[1])
        summary = json.loads(outputs[0]['summary.json'])
        self.assertEqual(summary['scenario']['seed'], 9)

    def test_failed_expectation(self):
        """Test that an unmet expectation exits with status 2"""
        file = self.write_scenario(
            'wrong:\n'
            '    trials: 1\n'
            '    epochs: 1\n'
            '    economics: {p_a: 0.2, p_ata: 0.1}\n'
            '    expect: {slash_events: 5, nash_passes: true}\n')
        argv = ['shelbylab', 'run', file, '--out', self.out, '--deterministic']
        self.assertEqual(shelbylab.main(argv), 2)
        summary = self.read_json(self.out, 'wrong', 'summary.json')
        self.assertEqual(summary['failed_expectations'], ['slash_events: expected 5, measured 0'])

    def test_incentive_gate(self):
        """Test that scenarios failing an incentive check run only with --force"""
        file = self.write_scenario(
            'cheap audits:\n'
            '    trials: 1\n'
            '    epochs: 1\n'
            '    economics: {p_a: 0.005, p_ata: 0.1}\n')
        argv = ['shelbylab', 'run', file, '--out', self.out]
        self.assertEqual(shelbylab.main(argv), 1)
        report = self.read_json(self.out, 'cheap audits', 'incentive_report.json')
        self.assertFalse(report['satisfied'])
        self.assertFalse(os.path.exists(os.path.join(self.out, 'cheap audits', 'summary.json')))
        self.assertEqual(shelbylab.main(argv + ['--force']), 0)
        self.assertTrue(os.path.exists(os.path.join(self.out, 'cheap audits', 'summary.json')))

    def test_missing_file(self):
        """Test that a missing scenario file exits with status 1"""
        argv = ['shelbylab', 'run', os.path.join(self.temp_dir.name, 'missing.scenario'),
                '--out', self.out]
        self.assertEqual(shelbylab.main(argv), 1)
        argv = ['shelbylab', 'run', self.example_file, 'no such scenario', '--out', self.out]
        self.assertEqual(shelbylab.main(argv), 1)

if __name__ == '__main__':
    unittest.main()
