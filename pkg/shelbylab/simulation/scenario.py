# -*- coding: utf-8 -*-
"""
The :mod:`shelbylab.simulation.scenario` module implements a class for
reading scenario files and the :class:`Scenario` they describe.

A scenario file is YAML. Each top-level key names a scenario; the reserved
key ``shelbylab_config`` holds settings for the whole file, currently a
``shelbylab_version`` requirement. Anything a scenario leaves out takes its
default from :func:`_defaults_for_scenario`, which in turn reads the
``[simulation]`` and ``[economics]`` sections of the global config.

.. autoclass:: Scenario
   :members:

.. autoclass:: ScenarioSelector
   :members:

.. autofunction:: load_params_file
"""

import os
import copy
import dataclasses
from dataclasses import dataclass, field
import yaml
from packaging.specifiers import SpecifierSet
from packaging import version

from .. import __version__, global_config
from ..coding.codec import CodingParams
from ..analysis.economics import EconomicParams, check_all
from ..exceptions import ParameterError
from ..simulation.strategies import HONEST, get_strategy
from ..simulation.epoch import sp_ids

import logging
logger = logging.getLogger(__name__)


EXPERIMENTS = ('simulate', 'nash', 'mutual_dishonesty', 'coalition')


@dataclass(frozen=True)
class Scenario:
    """
    Everything needed to reproduce an experiment: the population and its
    strategies, the economic and coding parameters, the blob workload, the
    number of epochs and trials, and the seed.
    """
    name: str
    seed: int = 0
    sp_count: int = 10
    strategy_mix: dict = field(default_factory=dict)
    econ: EconomicParams = field(default_factory=EconomicParams)
    coding: CodingParams = field(default_factory=lambda: CodingParams(4, 2))
    epochs: int = 3
    trials: int = 20
    blob_count: int = 4
    blob_size: int = 4096
    chunkset_size: int = 2048
    sample_size: int = 64
    duration: int = 30
    reads_per_epoch: int = 1
    auditors_per_audit: int = 7
    treasury: float = 1000.0
    experiment: str = 'simulate'
    deviations: tuple = None
    coalition_sizes: tuple = (2,)
    joint_deviations: tuple = None
    prct_fake: float = 0.1
    total_committed: int = 1000
    expect: dict = field(default_factory=dict)
    description: str = None

    def __post_init__(self):
        if self.sp_count < self.coding.n:
            raise ParameterError(f'{self.sp_count} providers cannot hold the {self.coding.n} chunks of a chunkset')
        if self.epochs < 1 or self.trials < 1:
            raise ParameterError('epochs and trials must be positive')
        if self.reads_per_epoch < 0:
            raise ParameterError(f'reads_per_epoch must not be negative, got {self.reads_per_epoch}')
        if self.experiment not in EXPERIMENTS:
            raise ParameterError(f'unknown experiment "{self.experiment}", choose from {EXPERIMENTS}')
        if sum(self.strategy_mix.values()) > self.sp_count:
            raise ParameterError(f'strategy mix names {sum(self.strategy_mix.values())} providers, only {self.sp_count} exist')
        for name in self.strategy_mix:
            get_strategy(name)

    def sp_ids(self):
        return sp_ids(self.sp_count)

    def strategies(self):
        """
        The strategy of every provider: the mix is handed out in order, the
        rest are honest.
        """
        ids = self.sp_ids()
        strategies = {sp_id: HONEST for sp_id in ids}
        position = 0
        for name, count in self.strategy_mix.items():
            for sp_id in ids[position:position + count]:
                strategies[sp_id] = get_strategy(name)
            position += count
        return strategies

    def check(self):
        """
        The incentive checks of the scenario's economic parameters.
        """
        return check_all(self.econ, self.prct_fake, self.total_committed)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return {
            'name': self.name,
            'description': self.description,
            'seed': self.seed,
            'sp_count': self.sp_count,
            'strategy_mix': dict(self.strategy_mix),
            'economics': self.econ.to_dict(),
            'coding': {'k': self.coding.k, 'm': self.coding.m, 'd': self.coding.d,
                       'scheme': self.coding.scheme.value},
            'epochs': self.epochs,
            'trials': self.trials,
            'workload': {'blob_count': self.blob_count, 'blob_size': self.blob_size,
                         'chunkset_size': self.chunkset_size, 'sample_size': self.sample_size,
                         'duration': self.duration,
                         'reads_per_epoch': self.reads_per_epoch},
            'auditors_per_audit': self.auditors_per_audit,
            'experiment': self.experiment,
        }

    @classmethod
    def from_dict(cls, name, d):
        """
        Build a scenario from one entry of a scenario file, with defaults
        filled in.
        """
        d = copy.deepcopy(d) if d is not None else {}
        defaults = _defaults_for_scenario(name)
        unknown = set(d) - set(defaults)
        if unknown:
            raise ParameterError(f'unknown keys in scenario "{name}": {sorted(unknown)}')
        for k in defaults:
            d.setdefault(k, defaults[k])

        econ = dict(defaults['economics'])
        econ.update(d['economics'] or {})
        workload = dict(defaults['workload'])
        workload.update(d['workload'] or {})
        auditors = d['auditors_per_audit']
        econ.setdefault('auditors_per_audit', auditors)

        def as_tuple(value):
            return None if value is None else tuple(value)

        return cls(
            name=name,
            description=d['description'],
            seed=int(d['seed']),
            sp_count=int(d['sp_count']),
            strategy_mix=dict(d['strategy_mix'] or {}),
            econ=EconomicParams.from_dict(econ),
            coding=CodingParams(**d['coding']),
            epochs=int(d['epochs']),
            trials=int(d['trials']),
            blob_count=int(workload['blob_count']),
            blob_size=int(workload['blob_size']),
            chunkset_size=int(workload['chunkset_size']),
            sample_size=int(workload['sample_size']),
            duration=int(workload['duration']),
            reads_per_epoch=int(workload['reads_per_epoch']),
            auditors_per_audit=int(auditors),
            treasury=float(d['treasury']),
            experiment=d['experiment'],
            deviations=as_tuple(d['deviations']),
            coalition_sizes=tuple(d['coalition_sizes']),
            joint_deviations=as_tuple(d['joint_deviations']),
            prct_fake=float(d['prct_fake']),
            total_committed=int(d['total_committed']),
            expect=dict(d['expect'] or {}),
        )


class ScenarioSelector():
    """
    A class for managing scenario files.

    A scenario file can be specified at initialization, in which case it is
    read immediately. The file contents are stored as a dictionary in
    :attr:`all_scenarios`.

    >>> scenarios = ScenarioSelector(file='equilibrium.scenario')
    >>> print(scenarios.keys)

    A scenario is selected at initialization with ``initial_selection`` or
    later with :meth:`select`, after which its raw settings can be indexed
    directly and the parsed :class:`Scenario` is available from
    :meth:`scenario`.

    >>> scenarios.select('equilibrium')
    >>> scenarios['trials']
    >>> scenario = scenarios.scenario()
    """

    def __init__(self, file=None, initial_selection=None):
        """
        Initialize a new ScenarioSelector.
        """
        self.file = file
        self.all_scenarios = None  #: A dictionary containing the entire file contents, set by :meth:`load`.
        self._selection = None
        if self.file is not None:
            self.load()
            if initial_selection is not None:
                self.select(initial_selection)

    def load(self):
        """
        Read the scenario file.
        """
        self.all_scenarios = _load_scenarios(self.file)
        if self._selection not in self.all_scenarios:
            self._selection = None

    def select(self, selection):
        """
        Select a scenario.
        """
        if self.all_scenarios is None:
            logger.error('Load scenarios before selecting')
        elif selection not in self.all_scenarios:
            raise ValueError(f'{selection} was not found in {self.file}')
        else:
            self._selection = selection

    @property
    def keys(self):
        """
        The available scenario names.
        """
        if self.all_scenarios is None:
            return None
        else:
            return list(self.all_scenarios.keys())

    @property
    def selected_scenario(self):
        """
        The raw settings of the selected scenario.
        """
        if self._selection is None:
            return None
        else:
            return self.all_scenarios[self._selection]

    def scenario(self, name=None):
        """
        The parsed :class:`Scenario` named ``name``, or the selected one.
        """
        name = self._selection if name is None else name
        if name is None:
            raise ValueError('No scenario is selected. Use the select() method first.')
        if name not in self.all_scenarios:
            raise ValueError(f'{name} was not found in {self.file}')
        return Scenario.from_dict(name, self.all_scenarios[name])

    def __getitem__(self, *args):
        if self.selected_scenario is None:
            logger.error('No scenario is selected. Use the select() method first.')
        else:
            return self.selected_scenario.__getitem__(*args)

    def get(self, *args):
        if self.selected_scenario is None:
            logger.error('No scenario is selected. Use the select() method first.')
        else:
            return self.selected_scenario.get(*args)


def _load_scenarios(file):
    """
    Read the scenarios stored in a YAML file, dropping the reserved
    ``shelbylab_config`` entry after checking its version requirement.
    """
    if file is None:
        raise ValueError('scenario file must be specified')
    if not os.path.exists(file):
        raise FileNotFoundError(f'scenario file "{file}" cannot be found')

    with open(file) as f:
        scenarios = yaml.safe_load(f) or {}
    if not isinstance(scenarios, dict):
        raise ValueError(f'File "{file}" does not contain a mapping of scenarios')

    # remove special entry "shelbylab_config" from the dict if it exists
    config = scenarios.pop('shelbylab_config', None)
    shelbylab_version = config.get('shelbylab_version', None) if isinstance(config, dict) else None

    # check shelbylab version requirements
    if shelbylab_version is not None:
        version_spec = SpecifierSet(str(shelbylab_version), prereleases=True)
        if version.parse(__version__) not in version_spec:
            logger.warning('the installed version of shelbylab '
                           f'({__version__}) does not meet version '
                           'requirements specified in the scenario file: '
                           f'{version_spec}')

    for key in scenarios:
        if scenarios[key] is None:
            scenarios[key] = {}
        if not isinstance(scenarios[key], dict):
            raise ValueError(f'File "{file}" may be formatted incorrectly, especially beginning with entry "{key}"')
    return scenarios


def _defaults_for_scenario(name):
    """
    Default values for scenarios.
    """
    simulation = global_config['simulation']
    defaults = {
        # description of the scenario
        'description': None,

        # seed for the blob data and every trial's genesis
        'seed': global_config['defaults']['seed'],

        # number of storage providers
        'sp_count': 10,

        # number of providers following each named strategy; the rest are honest
        # - e.g. {rubber_stamp: 1, partial_0.9: 2}
        'strategy_mix': {},

        # overrides of the economic parameters
        # - e.g. {p_a: 0.2, p_ata: 0.1, S_ata: 0.5}
        'economics': dict(global_config['economics']),

        # erasure coding
        # - scheme is Clay or ReedSolomon
        'coding': {'k': 4, 'm': 2, 'scheme': 'Clay'},

        # epochs per trial and number of trials
        'epochs': 3,
        'trials': global_config['defaults']['trials'],

        # the blobs written at genesis and read every epoch
        'workload': {
            'blob_count': 4,
            'blob_size': 4096,
            'chunkset_size': simulation['chunkset_size'],
            'sample_size': simulation['sample_size'],
            'duration': 30,
            # full reads of every live blob per epoch
            'reads_per_epoch': 1,
        },

        # auditors named by every internal challenge
        'auditors_per_audit': simulation['auditors_per_audit'],

        # tokens in the treasury at genesis
        'treasury': 1000.0,

        # what the run command does: simulate, nash, mutual_dishonesty or coalition
        'experiment': 'simulate',

        # strategy presets tested by nash; all deviations if None
        'deviations': None,

        # coalition sizes and joint deviations tested by coalition; all if None
        'coalition_sizes': [2],
        'joint_deviations': None,

        # parameters of the fake-storage incentive check
        'prct_fake': 0.1,
        'total_committed': 1000,

        # expectations checked by the run command
        # - slash_events: exact number of slashes over all trials
        # - all_scores_one: every audit score equals 1
        # - conserved: tokens conserved in every trial
        # - nash_passes, mutual_dishonesty_passes, coalition_passes
        # - negative_per_one_utility
        'expect': {},
    }
    return defaults


def load_params_file(file):
    """
    Read economic parameters from a YAML file. Returns ``(params,
    prct_fake, total_committed)``.
    """
    with open(file) as f:
        d = yaml.safe_load(f) or {}
    if not isinstance(d, dict):
        raise ValueError(f'File "{file}" does not contain a mapping of parameters')
    prct_fake = float(d.pop('prct_fake', 0.1))
    total_committed = int(d.pop('total_committed', 1000))
    return EconomicParams.from_dict(d), prct_fake, total_committed
