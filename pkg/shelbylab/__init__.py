# -*- coding: utf-8 -*-
"""
Shelby protocol laboratory

Erasure coding, commitments, audits, payment channels, economics and a
deterministic epoch simulator for decentralized hot storage
"""

import os
import sys
import shutil
import copy
import pkg_resources
import collections.abc
import logging
import logging.handlers
import toml

from .version import version as __version__
from .version import git_revision as __git_revision__


# per-user directory holding the config file and the log
shelbylab_dir = os.path.join(os.path.expanduser('~'), '.shelbylab')
os.makedirs(shelbylab_dir, exist_ok=True)


class FileLoggingFormatter(logging.Formatter):
    """
    Formats records for the log file. While the package logger is at DEBUG,
    records also name the process, which tells apart trials running in
    parallel workers, and the source line.
    """
    default_msec_format = '%s.%03d'
    brief_fmt = '[%(asctime)s] [%(levelname)-8s] %(message)s'
    detailed_fmt = ('[%(asctime)s] [%(levelname)-8s] [%(processName)-16s] '
                    '[%(name)s:%(lineno)d (%(funcName)s)] %(message)s')

    def format(self, record):
        detailed = logging.getLogger(__name__).getEffectiveLevel() <= logging.DEBUG
        self._style._fmt = self.detailed_fmt if detailed else self.brief_fmt
        return super().format(record)

class StreamLoggingFormatter(logging.Formatter):
    """
    Formats records for the terminal: ``[shelbylab] message``, with the level
    name added to anything but INFO.
    """
    def format(self, record):
        level = '' if record.levelno == logging.INFO else '%(levelname)s: '
        self._style._fmt = f'[shelbylab] {level}%(message)s'
        return super().format(record)


log_file = os.path.join(shelbylab_dir, 'shelbylab-log.txt')

# INFO unless the caller chose a level before importing
logger = logging.getLogger(__name__)
if logger.level == logging.NOTSET:
    logger.setLevel(logging.INFO)
default_log_level = logger.level

# 10 MB files, two backups
logger_filehandler = logging.handlers.RotatingFileHandler(
    filename=log_file, maxBytes=10_000_000, backupCount=2)
logger_filehandler.setFormatter(FileLoggingFormatter())
logger.addHandler(logger_filehandler)

# the stream handler is attached afterwards so this banner goes to the file only
logger.info(f'--- shelbylab {__version__} (git {__git_revision__[:7]}) ---')

logger_streamhandler = logging.StreamHandler(stream=sys.stderr)
logger_streamhandler.setFormatter(StreamLoggingFormatter())
logger.addHandler(logger_streamhandler)


global_config = {
    'defaults': {
        # command line defaults
        'seed': 0,
        'trials': 20,
        'out': 'shelbylab-out',
        'workers': 1,
        'debug': False,
        'deterministic': False,
        'force': False,
    },
    'simulation': {
        # workload sizes for scenarios that leave them out
        'chunkset_size': 2048,
        'sample_size': 64,
        'auditors_per_audit': 7,
        'progress_bars': True,
    },
    'economics': {
        # EconomicParams fields replacing the built-in defaults
    },
}

# untouched copy, used by --use-factory-defaults and the tests
_global_config_factory_defaults = copy.deepcopy(global_config)

# user overrides of global_config, in TOML
global_config_file = os.path.join(shelbylab_dir, 'shelbylab-config.txt')

if not os.path.exists(global_config_file):
    # every setting in the template is commented out
    shutil.copy(pkg_resources.resource_filename('shelbylab', 'global_config_template.txt'),
                global_config_file)

def update_dict(d, d_new):
    """
    Merge ``d_new`` into ``d`` in place and return ``d``. Nested mappings are
    merged key by key rather than replaced, so a config file that sets only
    one economic parameter leaves the others alone:

    >>> config = {'economics': {'p_a': 0.02, 'C': 50}}
    >>> update_dict(config, {'economics': {'p_a': 0.1}})
    {'economics': {'p_a': 0.1, 'C': 50}}
    """
    for key, value in d_new.items():
        if isinstance(value, collections.abc.Mapping):
            d[key] = update_dict(d.get(key, {}), value)
        else:
            d[key] = value
    return d

def update_global_config_from_file(file=global_config_file):
    """
    Merge the settings of a TOML config file into :data:`global_config`.
    """
    update_dict(global_config, toml.load(file))

try:
    update_global_config_from_file()
except Exception as e:
    logger.error(f'Ignoring global config file due to parsing error ({global_config_file}): {e}')


from .exceptions import *
from .coding import *
from .storage import *
from .protocol import *
from .analysis import *
from .simulation import *
from .scripts import *
