"""Experiment orchestration: datasets, calibrated setups, sweeps and replays."""

import os
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from Core.analysis import (PredictorInput, ch_comm_cost, ch_error, fme_comm_bound, fme_variance, gh_error,
                           grr_variance, kv_accuracy, l_policy, lnf_comm_cost, lnf_error, mse_topk, mse_topk_kv,
                           optimal_b, predictor_rows, local_epsilon_for_target)
from Core.attacks import (CollusionScenario, PoisoningScenario, actual_epsilon, gain_report_rows, m2ga_kv,
                          mga_categorical)
from Core.config import ExperimentConfig
from Core.crypto import make_suite
from Core.datasets import (CategoricalDataset, KVDataset, KVStatistics, load_categorical_csv, load_kv_csv,
                           synth_kv, synth_zipf, true_frequencies, true_kv_statistics, user_sample)
from Core.dummy import PrivacyBudget, calibrate_fme, calibrate_lnf, distribution_from_config
from Core.exceptions import CalibrationError, ConfigError
from Core.hashing import TableHash
from Core.protocols import FmeConfig, ProtocolOutput, ProtocolSetup, ScriptedRandomness
from Core.reports import write_csv, write_manifest, write_xlsx
from Core.trials import run_trials
from Core.utils.constants import DEFAULT_COLLISION_ATTEMPTS, ProtocolKind, Regime
from Core.utils.helpers import mean_and_stderr, payload_bytes, top_k_indices
from Core.utils.rng import Rng

logger = logging.getLogger(__name__)

FME_FAMILY = (ProtocolKind.FME, ProtocolKind.PROPOSAL_STAR, ProtocolKind.KV)
HASHED_COUNTS = (ProtocolKind.CH, ProtocolKind.GH, ProtocolKind.UH)
DEFAULT_B_GRID = [0.25, 0.5, 1.0, 2.0, 4.0]

@dataclass
class ExperimentResult:
    """Tables produced by one experiment and the files they were written to."""
    tables: Dict[str, List[Dict[str, Any]]]
    files: List[str] = field(default_factory=list)
    manifest: Optional[Dict[str, Any]] = None

# Datasets and setups

def load_dataset(config: ExperimentConfig):
    """Dataset named by the config: a CSV file or a synthetic generator."""
    source = config.dataset
    wants_kv = config.kind is ProtocolKind.KV
    if 'path' in source:
        is_kv = source.get('kind', 'kv' if wants_kv else 'categorical') == 'kv'
        loader = load_kv_csv if is_kv else load_categorical_csv
        dataset = loader(source['path'], source.get('d'))
    else:
        synthetic = source['synthetic']
        seed = int(synthetic.get('seed', config.seed))
        if synthetic['kind'] == 'kv':
            pairs = tuple(synthetic.get('pairs', ('fixed', 1)))
            values = tuple(synthetic.get('values', ('uniform',)))
            dataset = synth_kv(int(synthetic['n']), int(synthetic['d']), pairs, values, seed,
                               float(synthetic.get('exponent', 1.0)))
        else:
            dataset = synth_zipf(int(synthetic['n']), int(synthetic['d']), float(synthetic.get('exponent', 1.0)), seed)

    if wants_kv != isinstance(dataset, KVDataset):
        raise ConfigError(f"Protocol {config.protocol} does not accept a "
                          f"{'key-value' if isinstance(dataset, KVDataset) else 'categorical'} dataset")
    logger.info(f"Loaded dataset with n={dataset.n}, d={dataset.d}")
    return dataset

def make_budget(config: ExperimentConfig) -> PrivacyBudget:
    try:
        return PrivacyBudget(float(config.budget['eps']), float(config.budget['delta']),
                             config.budget.get('split'))
    except ValueError as e:
        raise ConfigError(str(e))

def _explicit_distribution(config: ExperimentConfig, name: str):
    if not config.dist or name not in config.dist:
        return None
    entry = config.dist[name]
    try:
        return distribution_from_config(entry['kind'], entry.get('params', {}))
    except (KeyError, ValueError) as e:
        raise ConfigError(f"dist.{name}: {e}")

def choose_b_and_l(config: ExperimentConfig, n: int, domain: int, mu1: float, mu2: float,
                   tau: Tuple[int, int, int]) -> Tuple[int, int]:
    """Hash range b and list cap l for the filtering protocols.

    l = b under the "b" policy. Otherwise l is max{n²/d, 50} (or a fixed
    integer) and b minimizes the communication bound in the matching regime.
    """
    sampled_n = max(1, int(round(n * config.user_sample)))
    l = None if config.l_policy == "b" else (l_policy(sampled_n, domain) if config.l_policy == "max"
                                             else int(config.l_policy))
    if config.b is not None:
        b = int(config.b)
    else:
        inp = PredictorInput(n=sampled_n, d=domain, l=l, beta=config.beta, alpha=config.alpha,
                             mu1=mu1, mu2=mu2, tau=tau)
        regime = Regime.L_BELOW_BETA_N if l is not None and l < config.beta * sampled_n else Regime.L_EQUALS_B
        try:
            b = int(round(optimal_b(inp, regime)))
        except ValueError:
            logger.warning("First-stage dummy mean is zero, using b = min(n, d)")
            b = sampled_n
    b = int(min(max(b, 2), domain))
    l = b if l is None else int(min(max(l, 1), b))
    return b, l

def build_setup(config: ExperimentConfig, dataset) -> ProtocolSetup:
    """Calibrate dummy laws and fix every protocol parameter for `dataset`."""
    kind = config.kind
    budget = make_budget(config)
    tau = tuple(config.cipher.get('tau', ()))
    groups = dataset.n if kind is ProtocolKind.UH else config.groups
    b_default = int(min(max(config.b or dataset.n, 2), dataset.d))

    max_symbol = {
        ProtocolKind.CH: b_default,
        ProtocolKind.GH: groups * b_default,
        ProtocolKind.UH: groups * b_default,
        ProtocolKind.KV: 2 * (dataset.d + config.kappa),
    }.get(kind, dataset.d)
    suite = make_suite(config.cipher.get('kind', 'mock'), tau, int(config.cipher.get('security_bits', 256)),
                       payload_bytes(max_symbol))

    setup = ProtocolSetup(kind, suite=suite, beta=config.beta, groups=groups, kappa=config.kappa,
                          extra_eps=config.extra_eps, filter_level=config.level,
                          keep_hop_log=config.keep_hop_log)

    if kind is ProtocolKind.PURE_GRR:
        n = max(1, int(round(dataset.n * config.user_sample)))
        try:
            setup.eps0 = config.eps0 or local_epsilon_for_target(budget.eps, n, budget.delta)
        except ValueError as e:
            raise CalibrationError(str(e))
        setup.beta = 1.0
        logger.info(f"Pure shuffle baseline uses eps0={setup.eps0:.4f}")
        return setup

    if kind not in FME_FAMILY:
        setup.distribution = _explicit_distribution(config, 'd') or calibrate_lnf(budget, config.beta)
        if kind in HASHED_COUNTS:
            setup.b = b_default
        return setup

    d1 = _explicit_distribution(config, 'd1')
    d2 = _explicit_distribution(config, 'd2')
    if d1 is None or d2 is None:
        c1, c2 = calibrate_fme(budget, config.beta)
        d1, d2 = d1 or c1, d2 or c2
    domain = setup.hash_domain(dataset.d)
    b, l = choose_b_and_l(config, dataset.n, domain, d1.mean, d2.mean, tau)
    setup.fme = FmeConfig(d1=d1, d2=d2, beta=config.beta, l=l, b=b, alpha=config.alpha, suite=suite,
                          budget=budget, security_bits=int(config.cipher.get('security_bits', 256)),
                          keep_hop_log=config.keep_hop_log)
    setup.fme.validate(domain)
    logger.info(f"{setup.get_name()}: b={b}, l={l}, D1 mean {d1.mean:.2f}, D2 mean {d2.mean:.2f}")
    return setup

def truth_of(dataset):
    """Frequencies (or key statistics) before any user sampling."""
    if isinstance(dataset, KVDataset):
        return true_kv_statistics(dataset)
    return true_frequencies(dataset)

# Trials

def _measure_trial(setup: ProtocolSetup, dataset, truth, seed: int, index: int, probability: float,
                   top_k: int, clip: bool) -> Dict[str, float]:
    rng = Rng(seed).child(index)
    sample = user_sample(dataset, probability, rng)
    output = setup.run(sample, rng)
    k = min(top_k, dataset.d)

    metrics: Dict[str, float] = {'n_sampled': float(sample.n)}
    if isinstance(truth, KVStatistics):
        phi, psi = output.dense_kv()
        metrics['mse_phi'], metrics['mse_psi'] = mse_topk_kv(truth, phi, psi, k, clip)
        top = int(top_k_indices(truth.phi, 1)[0])
        metrics['top_phi'], metrics['top_psi'] = float(phi[top]), float(psi[top])
    else:
        estimates = output.dense()
        metrics['mse'] = mse_topk(truth.entries, estimates, k)
        metrics['top_estimate'] = float(estimates[int(top_k_indices(truth.entries, 1)[0])])
    if output.transcript is not None:
        metrics['c_us'] = float(output.transcript.c_us)
        metrics['c_sd'] = float(output.transcript.c_sd)
        metrics['c_tot'] = float(output.transcript.c_tot)
    if output.items is not None:
        metrics['lambda_size'] = float(output.items.size)
    return metrics

def run_point(config: ExperimentConfig, dataset=None, setup: Optional[ProtocolSetup] = None) -> List[Dict[str, float]]:
    """Per-trial metrics of one configuration, in trial order."""
    dataset = dataset if dataset is not None else load_dataset(config)
    setup = setup or build_setup(config, dataset)
    truth = truth_of(dataset)
    args = [(setup, dataset, truth, config.seed, t, config.user_sample, config.top_k, config.clip)
            for t in range(config.trials)]
    return run_trials(_measure_trial, args, config.workers)

def summarize(trials: List[Dict[str, float]]) -> Dict[str, Tuple[float, float]]:
    """Mean and standard error of every metric."""
    keys = trials[0].keys() if trials else []
    return {key: mean_and_stderr(t[key] for t in trials) for key in keys}

# Sweeps

def _point_rows(x: Any, protocol: str, summary: Dict[str, Tuple[float, float]]) -> List[Dict[str, Any]]:
    return [{'x': x, 'protocol': protocol, 'metric': metric, 'mean': mean, 'stderr': stderr}
            for metric, (mean, stderr) in summary.items()]

def _sweep_protocols(config: ExperimentConfig) -> List[str]:
    return list(config.sweep.get('protocols') or [config.protocol])

def mse_sweep(config: ExperimentConfig) -> List[Dict[str, Any]]:
    """Mean metrics per value of one swept key (ε by default)."""
    key = config.sweep.get('key', 'budget.eps')
    rows = []
    for protocol in _sweep_protocols(config):
        base = config.derive('protocol', protocol)
        dataset = None if key.startswith('dataset') else load_dataset(base)
        for value in config.sweep.get('values', []):
            point = base.derive(key, value).validate()
            logger.info(f"Sweep {protocol} {key}={value}")
            rows.extend(_point_rows(value, protocol, summarize(run_point(point, dataset))))
    return rows

def collusion_sweep(config: ExperimentConfig) -> List[Dict[str, Any]]:
    """Actual ε against the colluding fraction |Ω|/n."""
    dataset = load_dataset(config)
    n = max(1, int(round(dataset.n * config.user_sample)))
    eps, delta = float(config.budget['eps']), float(config.budget['delta'])
    protocols = config.sweep.get('protocols') or [config.protocol, 'pure-grr']
    rows = []
    for protocol in protocols:
        kind = ProtocolKind.parse(protocol)
        for fraction in config.sweep.get('values', []):
            scenario = CollusionScenario(n, int(round(fraction * n)), eps, delta, config.eps0)
            try:
                actual = actual_epsilon(kind, scenario)
            except ValueError as e:
                raise CalibrationError(str(e))
            rows.append({'x': fraction, 'protocol': kind.name.lower(), 'target_eps': eps, 'actual_eps': actual})
    return rows

def gain_sweep(config: ExperimentConfig) -> List[Dict[str, Any]]:
    """Empirical and analytic attack gains per ε and λ."""
    attack = config.attack or {}
    targets = [int(t) for t in attack.get('targets', [])]
    lambdas = attack.get('lambdas', [0.05, 0.1, 0.2])
    variant = attack.get('variant', 'colliding')
    attempts = int(attack.get('attempts', DEFAULT_COLLISION_ATTEMPTS))
    values = config.sweep.get('values', []) if config.sweep else [config.budget['eps']]
    rows = []
    for protocol in (_sweep_protocols(config) if config.sweep else [config.protocol]):
        base = config.derive('protocol', protocol)
        dataset = load_dataset(base)
        for eps in values:
            point = base.derive('budget.eps', eps).validate()
            setup = build_setup(point, dataset)
            for lam in lambdas:
                scenario = PoisoningScenario.from_lambda(targets, float(lam), dataset.n)
                if point.kind is ProtocolKind.KV:
                    results = list(m2ga_kv(setup, dataset, scenario, point.trials, point.seed, point.workers))
                else:
                    results = [mga_categorical(setup, dataset, scenario, point.trials, point.seed, variant,
                                               point.workers, attempts)]
                rows.extend(gain_report_rows(results, float(eps)))
    return rows

def efficiency_sweep(config: ExperimentConfig) -> List[Dict[str, Any]]:
    """Predicted communication of FME and LNF as the domain grows.

    With `simulate` set in the sweep, points whose d is at most
    `simulate_max_d` also run the protocol once on a fresh Zipf dataset.
    """
    synthetic = config.dataset.get('synthetic', {})
    n = int(config.sweep.get('n', synthetic.get('n', 10000)))
    budget = make_budget(config)
    tau = tuple(config.cipher.get('tau'))
    d1, d2 = calibrate_fme(budget, config.beta)
    lnf_dist = calibrate_lnf(budget, config.beta)
    simulate = bool(config.sweep.get('simulate', False))
    simulate_max_d = int(config.sweep.get('simulate_max_d', 10 ** 6))

    rows = []
    for d in config.sweep.get('values', []):
        d = int(d)
        b, l = choose_b_and_l(config.derive('user_sample', 1.0), n, d, d1.mean, d2.mean, tau)
        inp = PredictorInput(n=n, d=d, b=b, l=l, beta=config.beta, alpha=config.alpha, mu1=d1.mean,
                             mu2=d2.mean, tau=tau)
        bound = fme_comm_bound(inp)
        row = {'d': d, 'l': l, 'b': b, **bound,
               'lnf_c_tot': lnf_comm_cost(tau[0], n, config.beta, lnf_dist.mean, d),
               'measured_c_tot': float('nan')}
        if simulate and d <= simulate_max_d:
            point = config.derive('dataset', {'synthetic': {'kind': 'zipf', 'n': n, 'd': d,
                                                            'exponent': synthetic.get('exponent', 1.0)}})
            point = point.derive('b', b).derive('l_policy', l).derive('trials', 1).derive('protocol', 'fme')
            row['measured_c_tot'] = summarize(run_point(point))['c_tot'][0]
        rows.append(row)
    return rows

def b_grid_sweep(config: ExperimentConfig) -> List[Dict[str, Any]]:
    """Measured C_tot over multiples of the optimized hash range b*."""
    dataset = load_dataset(config)
    reference = build_setup(config.derive('b', None), dataset)
    b_star = reference.fme.b
    domain = reference.hash_domain(dataset.d)
    rows = []
    for multiple in config.sweep.get('values') or DEFAULT_B_GRID:
        b = int(min(max(round(multiple * b_star), 2), domain))
        point = config.derive('b', b)
        setup = build_setup(point, dataset)
        summary = summarize(run_point(point, dataset, setup))
        inp = PredictorInput(n=dataset.n, d=domain, b=setup.fme.b, l=setup.fme.l, beta=config.beta,
                             alpha=config.alpha, mu1=setup.fme.d1.mean, mu2=setup.fme.d2.mean,
                             tau=tuple(config.cipher.get('tau')))
        mean, stderr = summary['c_tot']
        rows.append({'multiple': multiple, 'b': setup.fme.b, 'l': setup.fme.l, 'c_tot_mean': mean,
                     'c_tot_stderr': stderr, 'c_tot_bound': fme_comm_bound(inp)['c_tot_bound']})
    return rows

SWEEPS = {
    'mse': mse_sweep,
    'collusion': collusion_sweep,
    'gain': gain_sweep,
    'efficiency': efficiency_sweep,
    'b_grid': b_grid_sweep,
}

def run_single(config: ExperimentConfig) -> List[Dict[str, Any]]:
    """One configuration, summarized."""
    return _point_rows(None, config.kind.name.lower(), summarize(run_point(config)))

def run_experiment(config: ExperimentConfig, xlsx: bool = False) -> ExperimentResult:
    """Run the configured sweep (or a single point) and write CSV, manifest and optional workbook."""
    config.validate()
    name = config.sweep['kind'] if config.sweep else ('gain' if config.attack else 'run')
    rows = SWEEPS[name](config) if config.sweep else (gain_sweep(config) if config.attack else run_single(config))
    return write_results(config, {name: rows}, xlsx)

def write_results(config: ExperimentConfig, tables: Dict[str, List[Dict[str, Any]]],
                  xlsx: bool = False) -> ExperimentResult:
    digest = config.hash()
    files, frames = [], {}
    for name, rows in tables.items():
        path = os.path.join(config.output, f"{name}.csv")
        frames[name] = write_csv(rows, path, digest)
        files.append(path)
    if xlsx:
        path = os.path.join(config.output, "results.xlsx")
        write_xlsx(frames, path)
        files.append(path)
    manifest = write_manifest(os.path.join(config.output, "manifest.json"), config.to_dict(), digest,
                              config.seed, files)
    return ExperimentResult(tables, files, manifest)

# Predictors against measurements

def predict(config: ExperimentConfig) -> List[Dict[str, Any]]:
    """Closed-form predictions next to Monte Carlo measurements for one configuration."""
    dataset = load_dataset(config)
    setup = build_setup(config, dataset)
    trials = run_point(config, dataset, setup)
    summary = summarize(trials)
    measured = {key: mean for key, (mean, _) in summary.items()}
    kind = setup.kind
    n = dataset.n if config.user_sample == 1 else int(round(dataset.n * config.user_sample))
    tau1 = setup.suite.size_model()[0]
    predicted: Dict[str, float] = {}

    if isinstance(dataset, KVDataset):
        truth = true_kv_statistics(dataset)
        top = int(top_k_indices(truth.phi, 1)[0]) + 1
        inp = PredictorInput(n=n, d=dataset.d, kappa=config.kappa, beta=config.beta, phi=truth.phi, psi=truth.psi,
                             var2=setup.fme.d2.variance)
        accuracy = kv_accuracy(inp, top)
        predicted['var_top_phi'] = accuracy['phi_variance']
        predicted['var_top_psi'] = accuracy['psi_variance_bound']
        if len(trials) > 1:
            measured['var_top_phi'] = float(np.var([t['top_phi'] for t in trials], ddof=1))
            measured['var_top_psi'] = float(np.var([t['top_psi'] for t in trials], ddof=1))
    else:
        f = true_frequencies(dataset).entries
        top = int(top_k_indices(f, 1)[0]) + 1
        f_top = float(f[top - 1])
        if kind is ProtocolKind.LNF:
            predicted['var_top'] = lnf_error(f_top, n, config.beta, setup.distribution.variance)
            predicted['c_tot'] = lnf_comm_cost(tau1, n, config.beta, setup.distribution.mean, dataset.d)
        elif kind is ProtocolKind.CH:
            predicted['var_top'] = ch_error(f, top, n, config.beta, setup.b, setup.distribution.variance)
            predicted['c_tot'] = ch_comm_cost(tau1, n, config.beta, setup.distribution.mean, setup.b)
        elif kind in (ProtocolKind.GH, ProtocolKind.UH):
            predicted['var_top'] = gh_error(f, top, n, config.beta, setup.b, setup.distribution.variance,
                                            setup.groups)
        elif kind is ProtocolKind.PURE_GRR:
            predicted['var_top'] = grr_variance(f_top, n, setup.eps0, dataset.d)
        else:
            predicted['var_top'] = fme_variance(f_top, n, config.beta, setup.fme.d2.variance)
        if len(trials) > 1:
            measured['var_top'] = float(np.var([t['top_estimate'] for t in trials], ddof=1))

    if setup.fme is not None:
        inp = PredictorInput(n=n, d=setup.hash_domain(dataset.d), b=setup.fme.b, l=setup.fme.l, beta=config.beta,
                             alpha=config.alpha, mu1=setup.fme.d1.mean, mu2=setup.fme.d2.mean,
                             tau=setup.suite.size_model())
        bound = fme_comm_bound(inp)
        predicted['c_us'] = bound['c_us']
        predicted['c_sd'] = bound['c_sd_bound']
        predicted['lambda_size'] = bound['lambda_bound']
    return predictor_rows(predicted, measured)

# Replays

def load_replay(path: str) -> Dict[str, Any]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read replay {path}: {e}")

def run_replay(document: Dict[str, Any]) -> ProtocolOutput:
    """Run a protocol with scripted shuffler choices and an explicit hash table.

    The document names the protocol, the users' values, the dummy laws and
    the shuffler's keep decisions, dummy counts and permutations.
    """
    kind = ProtocolKind.parse(document.get('protocol', 'fme'))
    d = int(document['d'])
    dataset = CategoricalDataset(np.asarray(document['values'], dtype=np.int64), d)
    randomness = ScriptedRandomness(document['shuffler'])
    beta = float(document.get('beta', 1.0))
    rng = Rng(int(document.get('seed', 0)))

    hash_fn = None
    if 'hash_table' in document:
        table = {int(k): int(v) for k, v in document['hash_table'].items()}
        hash_fn = TableHash(table, int(document['b']), d)

    setup = ProtocolSetup(kind, beta=beta, hash_fn=hash_fn, b=document.get('b'))
    if kind in FME_FAMILY:
        d1 = distribution_from_config(document['d1']['kind'], document['d1'].get('params', {}))
        d2 = distribution_from_config(document['d2']['kind'], document['d2'].get('params', {}))
        b = int(document['b'])
        setup = ProtocolSetup(kind, beta=beta, hash_fn=hash_fn, fme=FmeConfig(
            d1=d1, d2=d2, beta=beta, l=int(document.get('l', b)), b=b,
            alpha=float(document.get('alpha', 0.05))))
    else:
        setup.distribution = distribution_from_config(document['dist']['kind'], document['dist'].get('params', {}))
    return setup.run(dataset, rng, randomness=randomness)

def replay_report(document: Dict[str, Any], output: ProtocolOutput) -> Dict[str, Any]:
    """Replay outcome, checked against the document's `expected` block when present."""
    report = {
        'protocol': output.protocol.name.lower(),
        'selected': output.selected.tolist(),
        'estimates': [round(v, 12) for v in output.dense().tolist()],
    }
    if output.filter_result is not None:
        report['threshold'] = output.filter_result.threshold
        report['selected_hashes'] = output.filter_result.selected_hashes.tolist()
        if output.filter_result.counts is not None:
            report['hash_counts'] = output.filter_result.counts.tolist()
    if output.counts is not None:
        report['counts'] = np.asarray(output.counts).tolist()
    expected = document.get('expected')
    if expected:
        matches = True
        if 'selected' in expected:
            matches &= report['selected'] == list(expected['selected'])
        if 'estimates' in expected:
            matches &= bool(np.allclose(report['estimates'], expected['estimates'], atol=1e-9))
        for key in ('counts', 'hash_counts', 'threshold'):
            if key in expected:
                matches &= report.get(key) == expected[key]
        report['matches_expected'] = bool(matches)
    return report
