# -*- coding: utf-8 -*-
"""
The :mod:`shelbylab.simulation.experiments` module estimates expected
utilities by Monte Carlo over independent trials and uses them to test
whether deviating from the honest strategy pays.

Every trial builds a fresh world from the scenario with a genesis seed
derived from the scenario seed and the trial number, runs the scenario's
epochs and is reduced to a picklable :class:`TrialOutcome`. Trials run in
order, or in a process pool with ``workers > 1``; outcomes are always merged
in trial order, so results do not depend on the number of workers.

Comparisons between strategies are paired: the honest and the deviating run
of a trial share their seed, so the difference isolates the deviation.

.. autoclass:: TrialOutcome
   :members:

.. autoclass:: ExperimentResult
   :members:

.. autofunction:: simulate_trial

.. autofunction:: run_trials

.. autofunction:: simulate

.. autofunction:: estimate_utility

.. autofunction:: nash_test

.. autofunction:: mutual_dishonesty_test

.. autofunction:: coalition_test
"""

import math
import functools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import numpy as np
import pandas as pd
from scipy import stats
from tqdm.auto import tqdm

from .. import global_config
from ..exceptions import ParameterError
from ..simulation.strategies import (HONEST, DEVIATIONS, AuditorPolicy, ChallengeResponse,
                                     Strategy, get_strategy, coalition_strategy)
from ..simulation.epoch import build_world, run_epoch, trial_genesis

import logging
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrialOutcome:
    """
    The per-provider totals of one trial.
    """
    trial: int
    net: dict
    components: dict
    ones: dict
    slashes: dict          # sp id -> reason -> amount
    scores: dict           # sp id -> epoch -> score
    verifications: dict
    slash_events: int
    conserved: bool

    def slashed(self, sp_id, reason):
        return self.slashes.get(sp_id, {}).get(reason, 0.0)


@dataclass(frozen=True)
class ExperimentResult:
    """
    The Monte Carlo estimate of one provider's net utility.
    """
    scenario: str
    strategy: str
    mean: float
    stderr: float
    trials: int
    seed: int
    samples: tuple = field(repr=False)

    def to_dict(self):
        return {'scenario': self.scenario, 'strategy': self.strategy, 'mean': self.mean,
                'stderr': self.stderr, 'trials': self.trials, 'seed': self.seed}


def _mean_stderr(values):
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return float(values.mean()) if len(values) else 0.0, 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values)))

def _lower_bound(mean, stderr, n, confidence):
    if n < 2 or stderr == 0:
        return mean
    return mean - stats.t.ppf(confidence, n - 1) * stderr

def _strategy(s):
    return get_strategy(s) if isinstance(s, str) else s


def simulate_trial(scenario, strategies, trial):
    """
    Build the world of ``trial`` and run every epoch of ``scenario``.
    Returns the :class:`World <shelbylab.simulation.epoch.World>`.
    """
    world = build_world(
        scenario.econ, scenario.coding, scenario.sp_count, strategies,
        blob_count=scenario.blob_count, blob_size=scenario.blob_size,
        chunkset_size=scenario.chunkset_size, sample_size=scenario.sample_size,
        duration=scenario.duration, genesis_seed=trial_genesis(scenario.seed, trial),
        data_seed=scenario.seed, auditors_per_audit=scenario.auditors_per_audit,
        treasury=scenario.treasury, reads_per_epoch=scenario.reads_per_epoch)
    for _ in range(scenario.epochs):
        run_epoch(world)
    return world

def _outcome(world, trial):
    components = {}
    for sp_id in world.sps:
        components[sp_id] = {c: world.utility.total(c, {sp_id}) for c in world.utility.COMPONENTS}
    ones, slashes, scores = {}, {}, {}
    for report in world.reports:
        for sp_id, count in report.ones.items():
            ones[sp_id] = ones.get(sp_id, 0) + count
        for event in report.slashes:
            by_reason = slashes.setdefault(event['sp'], {})
            by_reason[event['reason']] = by_reason.get(event['reason'], 0.0) + event['amount']
        for sp_id, score in report.scores.items():
            scores.setdefault(sp_id, {})[report.epoch] = score
    return TrialOutcome(
        trial=trial,
        net={sp_id: world.utility.net(sp_id) for sp_id in world.sps},
        components=components,
        ones=ones,
        slashes=slashes,
        scores=scores,
        verifications={sp_id: sp.verifications for sp_id, sp in world.sps.items()},
        slash_events=sum(len(report.slashes) for report in world.reports),
        conserved=world.ledger.check_conservation(),
    )

def _run_trial(scenario, strategies, trial):
    return _outcome(simulate_trial(scenario, strategies, trial), trial)

def run_trials(scenario, strategies=None, trials=None, workers=1, desc=None):
    """
    Run ``trials`` trials (default ``scenario.trials``) with the given
    strategy per provider and return their outcomes in trial order.
    """
    trials = scenario.trials if trials is None else trials
    if trials < 1:
        raise ParameterError(f'need at least one trial, got {trials}')
    strategies = scenario.strategies() if strategies is None else strategies
    run = functools.partial(_run_trial, scenario, strategies)
    progress = dict(total=trials, desc=desc or scenario.name, leave=False,
                    disable=not global_config['simulation']['progress_bars'])
    if workers is not None and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(tqdm(pool.map(run, range(trials)), **progress))
    else:
        outcomes = [run(trial) for trial in tqdm(range(trials), **progress)]
    if not all(outcome.conserved for outcome in outcomes):
        logger.warning(f'Token conservation failed in some trials of {scenario.name}')
    return outcomes

def simulate(scenario, trials=None, workers=1):
    """
    Run the scenario's strategy mix and tabulate every provider's mean
    utility components as a :class:`pandas.DataFrame`.
    """
    strategies = scenario.strategies()
    outcomes = run_trials(scenario, strategies, trials, workers)
    rows = []
    for sp_id in sorted(strategies):
        row = {'sp_id': sp_id, 'strategy': strategies[sp_id].name}
        for component in outcomes[0].components[sp_id]:
            row[component] = float(np.mean([o.components[sp_id][component] for o in outcomes]))
        row['net'], row['net_stderr'] = _mean_stderr([o.net[sp_id] for o in outcomes])
        row['slashed'] = float(np.mean([sum(o.slashes.get(sp_id, {}).values()) for o in outcomes]))
        rows.append(row)
    table = pd.DataFrame(rows)
    table.attrs['slash_events'] = int(sum(o.slash_events for o in outcomes))
    table.attrs['conserved'] = all(o.conserved for o in outcomes)
    table.attrs['all_scores_one'] = all(score == 1.0 for o in outcomes
                                        for by_epoch in o.scores.values() for score in by_epoch.values())
    return table

def estimate_utility(scenario, focal_strategy, background_strategy=HONEST, trials=None,
                     focal=None, workers=1):
    """
    Mean and standard error of the net utility of provider ``focal`` (the
    first provider by default) following ``focal_strategy`` while everyone
    else follows ``background_strategy``.
    """
    focal_strategy, background_strategy = _strategy(focal_strategy), _strategy(background_strategy)
    sp_ids = scenario.sp_ids()
    focal = sp_ids[0] if focal is None else focal
    strategies = {sp_id: background_strategy for sp_id in sp_ids}
    strategies[focal] = focal_strategy
    outcomes = run_trials(scenario, strategies, trials, workers, desc=focal_strategy.name)
    samples = tuple(o.net[focal] for o in outcomes)
    mean, stderr = _mean_stderr(samples)
    return ExperimentResult(scenario.name, focal_strategy.name, mean, stderr, len(samples),
                            scenario.seed, samples)

def nash_test(scenario, deviation_set=None, trials=None, workers=1, confidence=0.95):
    """
    Compare the honest strategy with each unilateral deviation while all
    other providers stay honest. For every deviation the table reports the
    paired difference ``U(honest) - U(deviation)`` with a one-sided lower
    confidence bound; a deviation is deterred when that bound is positive.
    Deviations identical to the honest strategy are reported but do not
    count toward ``table.attrs['passed']``.
    """
    deviations = [_strategy(d) for d in (DEVIATIONS if deviation_set is None else deviation_set)]
    honest = estimate_utility(scenario, HONEST, trials=trials, workers=workers)
    rows = []
    for deviation in deviations:
        result = estimate_utility(scenario, deviation, trials=trials, workers=workers)
        diffs = np.subtract(honest.samples, result.samples)
        mean, stderr = _mean_stderr(diffs)
        lower = _lower_bound(mean, stderr, len(diffs), confidence)
        identity = deviation == HONEST
        rows.append({
            'deviation': deviation.name,
            'honest_utility': honest.mean,
            'deviation_utility': result.mean,
            'difference': mean,
            'stderr': stderr,
            'lower_bound': lower,
            'trials': len(diffs),
            'identity': identity,
            'passed': bool(np.all(diffs == 0)) if identity else bool(lower > 0),
        })
    table = pd.DataFrame(rows)
    table.attrs['passed'] = bool(table.loc[~table['identity'], 'passed'].all()) if len(table) else True
    for row in rows:
        verdict = 'deterred' if row['passed'] else 'NOT deterred'
        logger.info(f'{row["deviation"]}: honest advantage {row["difference"]:.4g} +/- {row["stderr"]:.2g}, {verdict}')
    return table

def mutual_dishonesty_test(scenario, trials=None, workers=1, confidence=0.95):
    """
    Everyone stores nothing, rubber-stamps and publishes all ones. Measures
    the utility of one reported 1 (auditor rewards minus audit-the-auditor
    slashes, per 1 published) against the closed form
    ``rwd_au - p_ata * S_ata``, and checks that a single provider that
    defects to truthful reporting does better than the colluders.
    """
    econ = scenario.econ
    sp_ids = scenario.sp_ids()
    colluding = get_strategy('mutual_dishonesty')
    outcomes = run_trials(scenario, {sp_id: colluding for sp_id in sp_ids}, trials, workers,
                          desc='mutual dishonesty')
    per_one = []
    for o in outcomes:
        ones = sum(o.ones.values())
        if ones == 0:
            continue
        rewards = sum(o.components[sp_id]['auditor_rewards'] for sp_id in sp_ids)
        slashes = sum(o.slashed(sp_id, 'audit_the_auditor') for sp_id in sp_ids)
        per_one.append((rewards - slashes) / ones)
    if not per_one:
        raise ParameterError(f'no scoreboard entries were published in {scenario.name}; raise p_a or epochs')
    mean, stderr = _mean_stderr(per_one)
    closed_form = econ.rwd_au - econ.p_ata * econ.S_ata
    tolerance = max(3 * stderr, 1e-9 * abs(closed_form))

    defector = sp_ids[0]
    strategies = {sp_id: colluding for sp_id in sp_ids}
    strategies[defector] = get_strategy('defector')
    mixed = run_trials(scenario, strategies, trials, workers, desc='defector')
    gains = [o.net[defector] - np.mean([o.net[sp_id] for sp_id in sp_ids[1:]]) for o in mixed]
    gain, gain_stderr = _mean_stderr(gains)

    result = {
        'per_one_utility': mean,
        'per_one_stderr': stderr,
        'closed_form': closed_form,
        'agrees': bool(abs(mean - closed_form) <= tolerance),
        'negative': bool(mean < 0),
        'defector_gain': gain,
        'defector_stderr': gain_stderr,
        'defector_better': bool(_lower_bound(gain, gain_stderr, len(gains), confidence) > 0),
        'trials': len(per_one),
    }
    result['passed'] = result['agrees'] and result['negative'] and result['defector_better']
    logger.info(f'Utility per reported 1: {mean:.4g} +/- {stderr:.2g} (closed form {closed_form:.4g}); '
                f'defector gains {gain:.4g} over colluders')
    return result


def _mutual_blind_accept(members):
    return coalition_strategy(members, AuditorPolicy.BLIND_ACCEPT, name='mutual_blind_accept')

def _report_zero_outsiders(members):
    return coalition_strategy(members, AuditorPolicy.VERIFY_AND_RETAIN, AuditorPolicy.REPORT_ALL_ZERO,
                              name='report_zero_outsiders')

def _collude_store_nothing(members):
    base = Strategy('store_nothing', storage_policy=0.0, challenge_response=ChallengeResponse.IGNORE)
    return coalition_strategy(members, AuditorPolicy.BLIND_ACCEPT, base=base, name='collude_store_nothing')

JOINT_DEVIATIONS = {
    'mutual_blind_accept': _mutual_blind_accept,
    'report_zero_outsiders': _report_zero_outsiders,
    'collude_store_nothing': _collude_store_nothing,
}

def coalition_test(scenario, coalition_size, joint_deviations=None, trials=None, workers=1):
    """
    Let the first ``coalition_size`` providers deviate jointly and compare
    their aggregate utility with the all-honest aggregate of the same
    trials. A deviation passes when its mean gain does not exceed the
    coalition's own proof-verification costs in the honest runs. The table
    also reports whether any outsider's audit score changed.
    """
    names = list(JOINT_DEVIATIONS) if joint_deviations is None else list(joint_deviations)
    for name in names:
        if name not in JOINT_DEVIATIONS:
            raise ParameterError(f'unknown joint deviation "{name}", choose from {sorted(JOINT_DEVIATIONS)}')
    sp_ids = scenario.sp_ids()
    f = (len(sp_ids) - 1) // 3
    if not 0 <= coalition_size <= f:
        raise ParameterError(f'coalition size must lie in [0, {f}], got {coalition_size}')
    members = sp_ids[:coalition_size]
    outsiders = sp_ids[coalition_size:]

    if not members:
        table = pd.DataFrame([{'deviation': name, 'coalition_size': 0, 'honest_aggregate': 0.0,
                               'deviation_aggregate': 0.0, 'gain': 0.0, 'stderr': 0.0,
                               'epsilon_budget': 0.0, 'outsider_scores_unchanged': True,
                               'passed': True} for name in names])
        table.attrs['passed'] = True
        return table

    honest = run_trials(scenario, {sp_id: HONEST for sp_id in sp_ids}, trials, workers, desc='all honest')
    honest_aggregate = [sum(o.net[m] for m in members) for o in honest]
    budget = float(np.mean([scenario.econ.c_verify * sum(o.verifications[m] for m in members)
                            for o in honest]))
    rows = []
    for name in names:
        strategy = JOINT_DEVIATIONS[name](members)
        strategies = {sp_id: HONEST for sp_id in sp_ids}
        strategies.update({m: strategy for m in members})
        deviating = run_trials(scenario, strategies, trials, workers, desc=name)
        aggregate = [sum(o.net[m] for m in members) for o in deviating]
        gain, stderr = _mean_stderr(np.subtract(aggregate, honest_aggregate))
        unchanged = all(h.scores.get(sp_id) == d.scores.get(sp_id)
                        for h, d in zip(honest, deviating) for sp_id in outsiders)
        rows.append({
            'deviation': name,
            'coalition_size': coalition_size,
            'honest_aggregate': float(np.mean(honest_aggregate)),
            'deviation_aggregate': float(np.mean(aggregate)),
            'gain': gain,
            'stderr': stderr,
            'epsilon_budget': budget,
            'outsider_scores_unchanged': unchanged,
            'passed': bool(gain <= budget),
        })
        logger.info(f'Coalition of {coalition_size} playing {name}: gain {gain:.4g} against budget {budget:.4g}')
    table = pd.DataFrame(rows)
    table.attrs['passed'] = bool(table['passed'].all())
    return table
