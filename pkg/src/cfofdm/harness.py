"""Monte-Carlo experiment orchestration: SE and MSE sweeps over scenario
parameters.

An ExperimentGrid pins one base scenario, a sweep axis, the estimators to
compare, pilot patterns, a trial count and a master seed. For every grid
point the harness draws the network geometry once, precomputes phase-noise
statistics and per-AP filter banks, then runs independent trials
(channels -> oscillator paths -> payload -> noise) on per-trial RNG streams
spawned from the master seed. Results are therefore bit-reproducible for a
fixed (seed, grid) regardless of worker count: trials are merged in trial
order, never in completion order.

run_experiment produces UatF SE reports per estimator (plus CSV/JSON/gnuplot
artifacts); mse_experiment produces channel/CPE estimation-error tables,
including the alternating estimator's per-iteration trajectory and the
constrained-vs-unconstrained CPE comparison.

Absolute SE levels depend on the externally calibrated path-loss model; only
orderings and trends across estimators/sweeps are reproduction targets.
"""

from __future__ import annotations

import csv
import json
import multiprocessing
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .channel import gen_block_channels, gen_large_scale
from .config import ConfigError, PATTERN_STAIRCASE, LO_SEPARATE, ScenarioConfig, scenario_hash
from .dl import DlHyperparams, DlParams, dl_forward, dl_train, gen_training_set
from .estimators import (
    ESTIMATOR_NAMES,
    alternating_centralized,
    build_joint_filters,
    build_single_carrier_filters,
    cpe_centralized_constrained,
    effective_estimate,
    lmmse_joint_distributed,
    lmmse_single_carrier,
    mmse_pn_unaware,
)
from .ofdm import gen_tx_grid, representative_subcarriers, stack_pilots, synthesize_mismatched, synthesize_time
from .phase_noise import PnStatistics, gen_pn_block
from .receiver import (
    DccAssignment,
    ExpectationBank,
    ici_power_lambda,
    mmse_combiner,
    se_per_ue,
    trial_terms,
    true_cpe,
)

__all__ = [
    "ExperimentGrid",
    "estimate_effective",
    "run_experiment",
    "mse_experiment",
    "write_se_csv",
    "write_mse_csv",
    "write_sidecar",
    "write_gnuplot_stub",
]

SWEEP_AXES = ("none", "gamma", "gamma_ap", "gamma_ue", "aps", "ues", "power")

_CENTRALIZED = ("proposed-centralized-lmmse", "proposed-centralized-dl")


@dataclass
class ExperimentGrid:
    """One experiment: base scenario x sweep values x patterns x estimators."""

    scenario: ScenarioConfig
    estimators: tuple = ("proposed-distributed", "mismatched", "unaware")
    sweep: str = "none"
    values: tuple = (None,)
    patterns: tuple = (PATTERN_STAIRCASE,)
    n_trials: int = 100
    seed: int = 0
    label: str = "custom"
    n_workers: int | None = None  # None/1: in-process serial execution
    dcc_serving: int | None = None  # serve-all when None, else nearest-m APs
    n_iter: int = 3
    kappa_min: float | None = 0.98
    kappa_max: float = 1.0
    dl_hyper: DlHyperparams = field(default_factory=DlHyperparams)
    dl_params: DlParams | None = None  # pretrained; trained per point when None

    def __post_init__(self):
        unknown = set(self.estimators) - set(ESTIMATOR_NAMES)
        if unknown:
            raise ConfigError(f"unknown estimators {sorted(unknown)}; valid: {ESTIMATOR_NAMES}")
        if self.sweep == "none":
            self.values = (None,)
        if not self.estimators or not self.values or not self.patterns:
            raise ConfigError("estimators, values and patterns must be nonempty")
        if self.sweep not in SWEEP_AXES:
            raise ConfigError(f"sweep must be one of {SWEEP_AXES}")
        if self.sweep != "none" and any(v is None for v in self.values):
            raise ConfigError("sweep values must be concrete numbers")
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")


def _apply_sweep(scenario: ScenarioConfig, sweep: str, value) -> ScenarioConfig:
    if sweep == "none":
        return scenario
    if sweep == "gamma":
        return replace(scenario, gamma_ap=float(value), gamma_ue=float(value))
    if sweep == "gamma_ap":
        return replace(scenario, gamma_ap=float(value))
    if sweep == "gamma_ue":
        return replace(scenario, gamma_ue=float(value))
    if sweep == "aps":
        return replace(scenario, n_aps=int(value))
    if sweep == "ues":
        return replace(scenario, n_ues=int(value))
    if sweep == "power":
        return replace(scenario, tx_power=float(value))
    raise ConfigError(f"unknown sweep axis {sweep!r}")


# ---------------------------------------------------------------------------
# single-estimator driver
# ---------------------------------------------------------------------------


def estimate_effective(
    name: str,
    y_pilots: np.ndarray,
    beta: np.ndarray,
    scenario: ScenarioConfig,
    stats: PnStatistics,
    *,
    filters=None,
    dl_params: DlParams | None = None,
    n_iter: int = 3,
    kappa_min: float | None = 0.98,
    kappa_max: float = 1.0,
):
    """Run one named estimator and return per-symbol effective-channel
    estimates with error variances, both shaped (K, L, tau_c).

    Block-channel estimators are broadcast across symbols; the centralized
    alternating estimators return J_hat * h_hat with the combined error
    variance.
    """
    tau_c = scenario.coherence.block_symbols
    if name == "unaware":
        ch = mmse_pn_unaware(y_pilots, beta, scenario)
        shape = ch.h_hat.shape + (tau_c,)
        return np.broadcast_to(ch.h_hat[:, :, None], shape), np.broadcast_to(ch.c[:, :, None], shape)
    if name in ("mismatched", "single-carrier"):
        ch = lmmse_single_carrier(y_pilots, beta, scenario, stats, filters=filters)
        return ch.h_hat, ch.c
    if name == "proposed-distributed":
        ch = lmmse_joint_distributed(y_pilots, beta, scenario, stats, filters=filters)
        return ch.h_hat, ch.c
    if name in _CENTRALIZED:
        if name == "proposed-centralized-dl":
            if dl_params is None:
                raise ConfigError("proposed-centralized-dl needs trained parameters")
            h0 = dl_forward(y_pilots, dl_params).T  # (L, K) -> (K, L)
            ch, cpe = alternating_centralized(
                y_pilots, beta, scenario, stats, init="dl", n_iter=n_iter,
                kappa_min=kappa_min, kappa_max=kappa_max, h0=h0,
            )
        else:
            ch, cpe = alternating_centralized(
                y_pilots, beta, scenario, stats, init="lmmse", n_iter=n_iter,
                kappa_min=kappa_min, kappa_max=kappa_max,
            )
        eff = effective_estimate(ch, cpe, beta)
        return eff.h_hat, eff.c
    raise ConfigError(f"unknown estimator {name!r} (choose from {ESTIMATOR_NAMES})")


# ---------------------------------------------------------------------------
# per-point context and per-trial work
# ---------------------------------------------------------------------------


@dataclass
class _PointContext:
    """Everything a trial worker needs at one grid point (geometry is fixed
    across the point's trials)."""

    scenario: ScenarioConfig
    beta: np.ndarray
    stats: PnStatistics
    dcc: DccAssignment | None
    lam: np.ndarray
    estimators: tuple
    joint_filters: object
    sc_filters: object
    dl_params: DlParams | None
    n_iter: int
    kappa_min: float | None
    kappa_max: float
    rep_subs: np.ndarray


def _simulate_trial(rng: np.random.Generator, ctx: _PointContext, need_sc: bool) -> dict:
    """One trial's common simulation: draws (in fixed RNG order) channels,
    oscillator paths, payload grid, exact-model noise, then — when the
    single-carrier track is requested — the rotation-model frame."""
    sc = ctx.scenario
    h_blocks = gen_block_channels(rng, ctx.beta, sc.coherence.n_blocks(sc.grid))
    pn = gen_pn_block(rng, sc)
    tx = gen_tx_grid(rng, sc)
    rx = synthesize_time(rng, tx, h_blocks, pn, sc)
    sim = {"h_blocks": h_blocks, "pn": pn, "y_p": stack_pilots(rx.y, sc)}
    h0 = h_blocks[:, :, 0]
    sim["j_true"] = true_cpe(pn, sc.n_aps)  # (K, L, tau_c)
    sim["h_eff"] = sim["j_true"] * h0[:, :, None]
    if need_sc:
        rx_sc = synthesize_mismatched(rng, tx, h_blocks, pn, sc)
        sim["y_p_sc"] = stack_pilots(rx_sc.y, sc)
        tau_c = sc.coherence.block_symbols
        taus = np.arange(tau_c)
        eu = np.exp(1j * pn.ue[:, taus, ctx.rep_subs])  # (K, tau_c)
        ea = np.broadcast_to(np.exp(1j * pn.ap[:, taus, ctx.rep_subs]), (sc.n_aps, tau_c))
        sim["h_eff_sc"] = np.einsum("kt,lt->klt", eu, ea) * h0[:, :, None]
    return sim


def _se_trial(seed_seq, ctx: _PointContext) -> dict:
    """UatF bank contributions of one trial, keyed by estimator."""
    rng = np.random.default_rng(seed_seq)
    sim = _simulate_trial(rng, ctx, need_sc="single-carrier" in ctx.estimators)
    out = {}
    for name in ctx.estimators:
        single = name == "single-carrier"
        y = sim["y_p_sc"] if single else sim["y_p"]
        filters = ctx.sc_filters if name in ("mismatched", "single-carrier") else ctx.joint_filters
        h_hat, err = estimate_effective(
            name, y, ctx.beta, ctx.scenario, ctx.stats,
            filters=filters, dl_params=ctx.dl_params, n_iter=ctx.n_iter,
            kappa_min=ctx.kappa_min, kappa_max=ctx.kappa_max,
        )
        v = mmse_combiner(h_hat, err, ctx.dcc, ctx.scenario)
        if single:  # evaluated under its own interference-free model
            out[name] = trial_terms(v, sim["h_eff_sc"], np.zeros_like(ctx.lam))
        else:
            out[name] = trial_terms(v, sim["h_eff"], ctx.lam)
    return out


def _norm_mse(err: np.ndarray, beta: np.ndarray) -> float:
    """Estimation-error power relative to the average channel power."""
    err = np.asarray(err)
    scale = float(np.sum(beta))
    if err.ndim == 3:  # per-symbol targets: average over symbols
        return float(np.mean(np.sum(np.abs(err) ** 2, axis=(0, 1)))) / scale
    return float(np.sum(np.abs(err) ** 2)) / scale


def _mse_trial(seed_seq, ctx: _PointContext) -> dict:
    """Channel/CPE estimation-error metrics of one trial."""
    rng = np.random.default_rng(seed_seq)
    sim = _simulate_trial(rng, ctx, need_sc="single-carrier" in ctx.estimators)
    sc, beta = ctx.scenario, ctx.beta
    y_p, h_true = sim["y_p"], sim["h_blocks"][:, :, 0]
    out = {}
    for name in ctx.estimators:
        if name in _CENTRALIZED:
            continue  # handled via the alternating trajectories below
        single = name == "single-carrier"
        y = sim["y_p_sc"] if single else y_p
        filters = ctx.sc_filters if name in ("mismatched", "single-carrier") else ctx.joint_filters
        h_hat, _ = estimate_effective(name, y, beta, sc, ctx.stats, filters=filters)
        target = sim["h_eff_sc"] if single else (h_true[:, :, None] if name == "unaware" else sim["h_eff"])
        out[f"channel-mse/{name}"] = np.array(_norm_mse(np.asarray(h_hat) - target, beta))
    inits = []
    if any(n in ctx.estimators for n in _CENTRALIZED):
        inits.append("lmmse")
    if "proposed-centralized-dl" in ctx.estimators and ctx.dl_params is not None:
        inits.append("dl")
    j_true = sim["j_true"]
    for init in inits:
        h0 = dl_forward(y_p, ctx.dl_params).T if init == "dl" else None
        _, _, history = alternating_centralized(
            y_p, beta, sc, ctx.stats, init=init, n_iter=ctx.n_iter,
            kappa_min=ctx.kappa_min, kappa_max=ctx.kappa_max, h0=h0, return_history=True,
        )
        out[f"alt-{init}/channel-mse"] = np.array(
            [_norm_mse(h.h_hat - h_true, beta) for h in (step["channel"] for step in history)]
        )
        out[f"alt-{init}/cpe-mse"] = np.array(
            [float(np.mean(np.abs(step["cpe"].j_hat - j_true) ** 2)) for step in history]
        )
        out[f"alt-{init}/residual"] = np.array([step["residual"] for step in history])
    if inits:
        # paired constraint study: one CPE solve from the true block channels,
        # amplitude constraint on vs off, per-symbol error — isolates the
        # effect of the clamp from channel-estimation quality
        cpe_c = cpe_centralized_constrained(
            y_p, h_true, beta, sc, ctx.stats, kappa_min=ctx.kappa_min, kappa_max=ctx.kappa_max
        )
        cpe_u = cpe_centralized_constrained(y_p, h_true, beta, sc, ctx.stats, kappa_min=None)
        out["cpe-mse-constrained"] = np.mean(np.abs(cpe_c.j_hat - j_true) ** 2, axis=(0, 1))
        out["cpe-mse-unconstrained"] = np.mean(np.abs(cpe_u.j_hat - j_true) ** 2, axis=(0, 1))
    return out


# worker-pool plumbing: the context is pushed once per worker process
_WORKER_CTX: _PointContext | None = None


def _init_worker(ctx):
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _pool_se(args):
    idx, seed_seq = args
    return idx, _se_trial(seed_seq, _WORKER_CTX)


def _pool_mse(args):
    idx, seed_seq = args
    return idx, _mse_trial(seed_seq, _WORKER_CTX)


def _run_trials(task, pool_task, ctx: _PointContext, trial_seeds, n_workers) -> list:
    """Execute trials serially or on a pool; results always in trial order."""
    if n_workers is None or n_workers <= 1:
        return [task(ss, ctx) for ss in trial_seeds]
    with multiprocessing.Pool(n_workers, initializer=_init_worker, initargs=(ctx,)) as pool:
        indexed = pool.map(pool_task, list(enumerate(trial_seeds)))
    return [res for _, res in sorted(indexed, key=lambda t: t[0])]


# ---------------------------------------------------------------------------
# experiment loops
# ---------------------------------------------------------------------------


def _point_label(grid: ExperimentGrid, value, pattern) -> str:
    parts = [grid.label]
    if grid.sweep != "none":
        parts.append(f"{grid.sweep}={value!r}")
    if len(grid.patterns) > 1:
        parts.append(pattern)
    return parts[0] if len(parts) == 1 else f"{parts[0]}[{','.join(parts[1:])}]"


def _build_point(grid: ExperimentGrid, value, pattern, point_seed) -> tuple[_PointContext, list]:
    scenario = replace(_apply_sweep(grid.scenario, grid.sweep, value), pilot_pattern=pattern)
    if any(n in grid.estimators for n in _CENTRALIZED) and scenario.lo_mode == LO_SEPARATE:
        warnings.warn(
            "centralized CPE estimation with separate AP oscillators: supported "
            "but the per-AP CPEs are then weakly coupled",
            RuntimeWarning,
            stacklevel=3,
        )
    streams = point_seed.spawn(grid.n_trials + 2)
    ls = gen_large_scale(np.random.default_rng(streams[0]), scenario)
    plan = scenario.pilot_plan()
    stats = PnStatistics.from_scenario(scenario).precompute(plan)
    joint_filters = build_joint_filters(ls.beta, scenario, stats) if "proposed-distributed" in grid.estimators else None
    sc_filters = (
        build_single_carrier_filters(ls.beta, scenario, stats)
        if ("mismatched" in grid.estimators or "single-carrier" in grid.estimators)
        else None
    )
    dl_params = grid.dl_params
    if "proposed-centralized-dl" in grid.estimators and dl_params is None:
        train_rng = np.random.default_rng(streams[1])
        dataset = gen_training_set(train_rng, scenario, ls.beta, grid.dl_hyper.n_train)
        dl_params, _ = dl_train(dataset, grid.dl_hyper, train_rng, scenario)
    dcc = None if grid.dcc_serving is None else DccAssignment.nearest(ls.beta, grid.dcc_serving)
    ctx = _PointContext(
        scenario=scenario,
        beta=ls.beta,
        stats=stats,
        dcc=dcc,
        lam=ici_power_lambda(ls.beta, scenario, stats),
        estimators=tuple(grid.estimators),
        joint_filters=joint_filters,
        sc_filters=sc_filters,
        dl_params=dl_params,
        n_iter=grid.n_iter,
        kappa_min=grid.kappa_min,
        kappa_max=grid.kappa_max,
        rep_subs=representative_subcarriers(scenario),
    )
    return ctx, streams[2:]


def _points(grid: ExperimentGrid):
    return [(value, pattern) for value in grid.values for pattern in grid.patterns]


def run_experiment(grid: ExperimentGrid, out_csv=None) -> list[dict]:
    """Run the SE experiment over the grid.

    Returns one dict per grid point with the scenario, the point label, the
    per-estimator SeReport, and the underlying expectation banks. With
    out_csv also writes the results CSV, a JSON sidecar (config echo +
    scenario hashes + CI data), and leaves plotting to write_gnuplot_stub.
    """
    points = _points(grid)
    point_seeds = np.random.SeedSequence(grid.seed).spawn(len(points))
    results = []
    for (value, pattern), pseed in zip(points, point_seeds):
        ctx, trial_seeds = _build_point(grid, value, pattern, pseed)
        trials = _run_trials(_se_trial, _pool_se, ctx, trial_seeds, grid.n_workers)
        banks = {
            name: ExpectationBank.from_trials([t[name] for t in trials]) for name in grid.estimators
        }
        reports = {name: se_per_ue(bank, ctx.scenario) for name, bank in banks.items()}
        results.append(
            {
                "label": _point_label(grid, value, pattern),
                "value": value,
                "pattern": pattern,
                "scenario": ctx.scenario,
                "reports": reports,
                "banks": banks,
            }
        )
    if out_csv is not None:
        write_se_csv(results, out_csv)
        write_sidecar(grid, results, str(out_csv) + ".json")
    return results


def mse_experiment(grid: ExperimentGrid, out_csv=None) -> list[dict]:
    """Run the estimation-error experiment over the grid.

    Per point returns {"trials": {metric: (T, ...) array}, "summary":
    {metric: mean array}} plus scenario/label. Metrics: channel-mse/<name>
    per simple estimator; alt-<init>/channel-mse, /cpe-mse, /residual per
    iteration (index 0 = initialization) for the alternating estimator; and
    the paired per-symbol cpe-mse-constrained / cpe-mse-unconstrained arrays.
    """
    points = _points(grid)
    point_seeds = np.random.SeedSequence(grid.seed).spawn(len(points))
    results = []
    for (value, pattern), pseed in zip(points, point_seeds):
        ctx, trial_seeds = _build_point(grid, value, pattern, pseed)
        trials = _run_trials(_mse_trial, _pool_mse, ctx, trial_seeds, grid.n_workers)
        metrics = {key: np.stack([t[key] for t in trials]) for key in trials[0]}
        results.append(
            {
                "label": _point_label(grid, value, pattern),
                "value": value,
                "pattern": pattern,
                "scenario": ctx.scenario,
                "trials": metrics,
                "summary": {key: arr.mean(axis=0) for key, arr in metrics.items()},
            }
        )
    if out_csv is not None:
        write_mse_csv(results, out_csv)
        write_sidecar(grid, results, str(out_csv) + ".json")
    return results


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x))


def write_se_csv(results: list[dict], path) -> None:
    """Per-symbol SE table: one row per (point, estimator, symbol, UE); the
    block SE of a UE is exactly the mean of its per-symbol rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["estimator", "scenario", "gamma_ap", "gamma_ue", "pattern", "tau", "ue", "sinr", "se"])
        for point in results:
            cfg = point["scenario"]
            for name, rep in point["reports"].items():
                for k in range(cfg.n_ues):
                    for tau in range(cfg.coherence.block_symbols):
                        w.writerow(
                            [
                                name,
                                point["label"],
                                _fmt(cfg.gamma_ap),
                                _fmt(cfg.gamma_ue),
                                point["pattern"],
                                tau,
                                k,
                                _fmt(rep.sinr[k, tau]),
                                _fmt(rep.se_symbol[k, tau]),
                            ]
                        )


def write_mse_csv(results: list[dict], path) -> None:
    """Estimation-error table: mean and normal-approximation 95% CI per
    metric; the index column is the iteration (alt-*) or symbol (cpe-mse-*)
    where the metric is a trajectory."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "scenario", "gamma_ap", "gamma_ue", "pattern", "index", "mean", "ci_low", "ci_high"])
        for point in results:
            cfg = point["scenario"]
            for key, arr in sorted(point["trials"].items()):
                flat = arr.reshape(arr.shape[0], -1)
                mean = flat.mean(axis=0)
                hw = 1.959963984540054 * flat.std(axis=0, ddof=1) / np.sqrt(flat.shape[0]) if flat.shape[0] > 1 else np.full(mean.shape, np.nan)
                for idx in range(flat.shape[1]):
                    w.writerow(
                        [
                            key,
                            point["label"],
                            _fmt(cfg.gamma_ap),
                            _fmt(cfg.gamma_ue),
                            point["pattern"],
                            idx,
                            _fmt(mean[idx]),
                            _fmt(mean[idx] - hw[idx]),
                            _fmt(mean[idx] + hw[idx]),
                        ]
                    )


def write_sidecar(grid: ExperimentGrid, results: list[dict], path) -> None:
    """JSON sidecar: grid echo, per-point scenario hash/config, and the CI
    data that the flat CSV cannot carry."""

    def point_payload(point):
        payload = {
            "label": point["label"],
            "pattern": point["pattern"],
            "sweep_value": point["value"],
            "scenario_hash": scenario_hash(point["scenario"]),
            "scenario": asdict(point["scenario"]),
        }
        if "reports" in point:
            payload["reports"] = {
                name: {
                    "se": rep.se.tolist(),
                    "ci_low": rep.ci_low.tolist(),
                    "ci_high": rep.ci_high.tolist(),
                    "prelog": rep.prelog,
                    "n_trials": rep.n_trials,
                }
                for name, rep in point["reports"].items()
            }
        if "summary" in point:
            payload["summary"] = {key: np.asarray(val).tolist() for key, val in sorted(point["summary"].items())}
        return payload

    doc = {
        "grid": {
            "label": grid.label,
            "estimators": list(grid.estimators),
            "sweep": grid.sweep,
            "values": [None if v is None else float(v) for v in grid.values],
            "patterns": list(grid.patterns),
            "n_trials": grid.n_trials,
            "seed": grid.seed,
            "dcc_serving": grid.dcc_serving,
            "n_iter": grid.n_iter,
            "kappa_min": grid.kappa_min,
            "kappa_max": grid.kappa_max,
        },
        "points": [point_payload(p) for p in results],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_gnuplot_stub(csv_path, gp_path, se_column: int = 9) -> None:
    """Emit a gnuplot script stub for the SE CSV (no plotting dependency)."""
    text = f"""# gnuplot stub for {csv_path}
# usage: gnuplot -persist {gp_path}
set datafile separator ','
set key autotitle columnhead outside
set xlabel 'OFDM symbol index'
set ylabel 'SE [bit/s/Hz]'
# per-symbol SE of UE 0, one curve per estimator; adapt the filter
# (column 7 = ue, column 1 = estimator) to taste.
plot '{csv_path}' using 6:(column(7) == 0 ? column({se_column}) : 1/0) with linespoints
"""
    with open(gp_path, "w") as fh:
        fh.write(text)
