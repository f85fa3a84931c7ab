"""Experiment orchestration: the round loop, metrics persistence, and sweeps.

A run is deterministic given its config and seed: every random draw comes
from a stream keyed by (seed, purpose, worker, round), so re-running any
config reproduces the metrics file byte for byte.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import models
from .channel import AggregationError, align_transmissions, ota_aggregate, sample_gains
from .config import ExperimentConfig, apply_overrides, from_dict, to_dict
from .core import ConfigError, NumericError, RngStream, draw_pso_coeffs, eval_schedule
from .data import (
    Dataset,
    GlobalDataset,
    PartitionSpec,
    gen_synthetic,
    load_csv,
    merge_global_train,
    partition_noniid,
    standardize,
    weight_divergence,
)
from .optimizer import (
    SwarmState,
    dsl_step,
    init_worker,
    pso_round,
    sgd_step,
    swarm_best,
    update_local_best,
)
from .robustness import apply_attack, attacker_ids, inject_failures, permanent_failures, screen_aggregate
from .selection import censor_report, next_best, select_workers

CSV_HEADER = [
    "round",
    "algo",
    "seed",
    "test_acc",
    "test_loss",
    "score_loss",
    "mean_fbest",
    "weight_div",
    "uplink_scalars",
    "uplink_vectors",
    "ota_uses",
    "s_eff",
    "rejected",
]


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    algo: str
    seed: int
    test_acc: float
    test_loss: float
    score_loss: float
    mean_fbest: float
    weight_div: float
    uplink_scalars: int
    uplink_vectors: int
    ota_uses: int
    s_eff: int
    rejected: int

    def as_row(self) -> list[str]:
        out = []
        for name in CSV_HEADER:
            value = getattr(self, name)
            if isinstance(value, float):
                out.append(f"{value:.9g}")
            else:
                out.append(str(value))
        return out


class _MetricsWriter:
    """Appends one CSV row per round and flushes immediately (crash safe)."""

    def __init__(self, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        self.fh = open(path, "w", newline="")
        self.fh.write(",".join(CSV_HEADER) + "\n")
        self.fh.flush()

    def append(self, metrics: RoundMetrics):
        self.fh.write(",".join(metrics.as_row()) + "\n")
        self.fh.flush()

    def close(self):
        self.fh.close()


@dataclass
class Task:
    """Everything a round needs to evaluate and differentiate models."""

    dim: int
    batch_size: int
    mu: float
    model: models.ModelSpec | None = None
    worker_data: list | None = None  # effective per-worker training sets
    global_ds: GlobalDataset | None = None
    test_ds: Dataset | None = None
    sphere_target: np.ndarray | None = None
    _batch_stream: RngStream | None = None

    def score_fn(self, w) -> float:
        """Fair-value score: loss on the shared scoring set (regularizer free)."""
        if self.sphere_target is not None:
            diff = w - self.sphere_target
            return float(diff @ diff)
        return models.loss(self.model, w, self.global_ds.score_part, 0.0)

    def eval_test(self, w) -> tuple[float, float]:
        if self.sphere_target is not None:
            return math.nan, self.score_fn(w)
        return (
            models.accuracy(self.model, w, self.test_ds),
            models.loss(self.model, w, self.test_ds, 0.0),
        )

    def batch_for(self, worker_id: int, t: int) -> Dataset:
        """This round's minibatch: sampled without replacement, refreshed per round."""
        ds = self.worker_data[worker_id]
        n = len(ds)
        if self.batch_size == 0 or self.batch_size >= n:
            return ds
        g = self._batch_stream.child(worker_id, t).generator()
        idx = g.choice(n, size=self.batch_size, replace=False)
        return ds.subset(idx)

    def make_grad_fn(self, worker_id: int, t: int):
        if self.sphere_target is not None:
            target = self.sphere_target
            mu = self.mu

            def sphere_grad(w, anchor):
                out = 2.0 * (w - target)
                if mu != 0.0:
                    out = out + mu * (w - anchor)
                return out

            return sphere_grad
        batch = self.batch_for(worker_id, t)
        spec, mu = self.model, self.mu

        def data_grad(w, anchor):
            return models.grad(spec, w, batch, mu, anchor)

        return data_grad


def build_task(config: ExperimentConfig) -> Task:
    """Materialize datasets (or the synthetic objective) for a validated config."""
    seed = config.seed
    mu = config.schedules.mu
    if config.objective.kind == "sphere":
        target = RngStream(seed, "sphere_target").generator().uniform(
            -config.objective.radius, config.objective.radius, config.objective.dim
        )
        return Task(
            dim=config.objective.dim,
            batch_size=config.batch_size,
            mu=mu,
            sphere_target=target,
        )

    dc = config.data
    if dc.csv_path:
        base = load_csv(dc.csv_path)
        if base.dim != config.model.d_in:
            raise ConfigError(
                f"data.csv_path: feature dim {base.dim} != model.d_in {config.model.d_in}"
            )
        if base.labels.max() >= config.model.num_classes:
            raise ConfigError(
                f"data.csv_path: label {base.labels.max()} >= model.classes "
                f"{config.model.num_classes}"
            )
    else:
        base = gen_synthetic(
            dc.n_total,
            config.model.d_in,
            config.model.num_classes,
            dc.sep,
            RngStream(seed, "datagen"),
        )
    if dc.standardize:
        base = standardize(base)

    # hold out the test set before any worker or the global share sees the data
    perm = RngStream(seed, "test_split").generator().permutation(len(base))
    n_test = int(round(dc.test_fraction * len(base)))
    if n_test < 1 or n_test >= len(base):
        raise ConfigError("data.test_fraction leaves an empty split")
    test_ds = base.subset(perm[:n_test])
    pool = base.subset(perm[n_test:])

    part_spec = PartitionSpec(
        num_workers=config.num_workers,
        dirichlet_alpha=dc.dirichlet_alpha,
        global_fraction=dc.global_fraction,
        global_split=dc.global_split,
        mode=dc.partition_mode,
        shards_per_worker=dc.shards_per_worker,
    )
    locals_, global_ds = partition_noniid(pool, part_spec, RngStream(seed, "partition"))
    if len(global_ds.score_part) == 0:
        raise ConfigError("data.global_fraction/global_split leave an empty scoring set")
    if dc.share_global:
        worker_data = [merge_global_train(ds, global_ds) for ds in locals_]
    else:
        worker_data = list(locals_)
    return Task(
        dim=config.model.param_dim,
        batch_size=config.batch_size,
        mu=mu,
        model=config.model,
        worker_data=worker_data,
        global_ds=global_ds,
        test_ds=test_ds,
        _batch_stream=RngStream(seed, "batch"),
    )


def _resolve_tau(config: ExperimentConfig) -> float | None:
    """Concrete screening tolerance, calibrating from a pilot when unset.

    The pilot replays the first rounds of this config with attacks off and an
    infinite tolerance, measures the honest gap between the aggregate's score
    and the mean reported score, and sets tau to three times the worst gap.
    """
    if not config.screening.enabled:
        return None
    if config.screening.tolerance is not None:
        return float(config.screening.tolerance)
    pilot = replace(
        config,
        rounds=min(5, config.rounds),
        attacks=replace(config.attacks, kind="none", num_attackers=0),
        screening=replace(config.screening, tolerance=math.inf, max_retries=0),
        output_dir=None,
    )
    gaps = []

    def collect(t, workers, swarm):
        if math.isfinite(swarm.last_gap):
            gaps.append(swarm.last_gap)

    run(pilot, on_round=collect)
    if not gaps:
        return 1.0
    return max(3.0 * max(gaps), 1e-9)


def _measure(config, task, workers, swarm, live_ids, t) -> RoundMetrics:
    acc, test_loss = task.eval_test(swarm.w_global)
    fbests = [workers[i].f_best for i in live_ids]
    return RoundMetrics(
        round=t,
        algo=config.algorithm,
        seed=config.seed,
        test_acc=acc,
        test_loss=test_loss,
        score_loss=task.score_fn(swarm.w_global),
        mean_fbest=float(np.mean(fbests)),
        weight_div=weight_divergence([workers[i].w for i in live_ids], swarm.w_global),
        uplink_scalars=swarm.uplink_scalars,
        uplink_vectors=swarm.uplink_vectors,
        ota_uses=swarm.ota_uses,
        s_eff=swarm.s_effective,
        rejected=swarm.rejected,
    )


class _Streams:
    def __init__(self, seed: int):
        self.coeffs = RngStream(seed, "pso_coeffs")
        self.gain = RngStream(seed, "gain")
        self.noise = RngStream(seed, "ota_noise")
        self.link = RngStream(seed, "link")
        self.attack = RngStream(seed, "attack")


def _transmit_vectors(config, workers, live_ids, streams, t, use_best: bool):
    """What each live worker would put on the air this round (attacks applied)."""
    out = {}
    reported = {}
    for idx in live_ids:
        wk = workers[idx]
        true_w = wk.w_best if use_best else wk.w
        true_f = wk.f_best
        if wk.is_byzantine and config.attacks.active:
            tw, rf = apply_attack(
                config.attacks, wk, true_w, true_f, streams.attack.child(idx, t)
            )
        else:
            tw, rf = true_w, true_f
        out[idx] = tw
        reported[idx] = rf
    return out, reported


def _aggregate_once(config, task, transmit_w, candidate_ids, streams, t, attempt, swarm):
    """Channel sampling, power alignment, and one OTA aggregation attempt.

    Returns (w_candidate, s_eff, included_ids) or None when nothing usable
    was transmitted (total outage or full truncation).
    """
    gains = sample_gains(config.channel, candidate_ids, streams.gain.child(t), dim=task.dim)
    realizations, eta = align_transmissions(gains, config.channel)
    included = [r.worker_id for r in realizations if r.included]
    if not included:
        return None
    contributions = [
        (transmit_w[r.worker_id], r.gain, r.power, r.included) for r in realizations
    ]
    try:
        w_cand, s_eff = ota_aggregate(
            contributions,
            config.channel.noise_var,
            streams.noise.child(t, attempt),
            receiver_scale=eta,
        )
    except AggregationError:
        return None
    swarm.ota_uses += 1
    swarm.uplink_vectors += s_eff
    return w_cand, s_eff, included


def _dsl_round(config, task, workers, swarm, rp, t, streams, live_ids, permanent_failed, tau):
    sched = config.schedules
    coeff_dim = task.dim if config.coeff_mode == "per_coord" else None
    for idx in live_ids:
        wk = workers[idx]
        coeffs = draw_pso_coeffs(
            streams.coeffs.child(idx, t), sched.c1_max, sched.c2_max, coeff_dim
        )
        grad_fn = task.make_grad_fn(idx, t)
        try:
            wk = dsl_step(
                wk,
                rp,
                coeffs,
                swarm.w_global,
                sched.alpha,
                sched.mu,
                grad_fn,
                config.velocity_mode,
            )
        except NumericError as exc:
            raise NumericError(f"round {t}: {exc}") from None
        wk = update_local_best(wk, task.score_fn)
        workers[idx] = wk

    transmit_w, lied_f = _transmit_vectors(config, workers, live_ids, streams, t, use_best=True)
    reports = []
    for idx in live_ids:
        report, workers[idx] = censor_report(
            workers[idx], lied_f[idx], rp.censor_threshold_t
        )
        if report.fresh:
            swarm.uplink_scalars += 1
        reports.append(report)

    report_by_id = {r.worker_id: r.reported_f for r in reports}
    tried: set[int] = set()
    selected = select_workers(reports, rp.s_t)
    swarm.last_gap = math.nan
    swarm.s_effective = 0
    swarm.selected = ()
    attempt = 0
    while selected:
        survivors = inject_failures(
            selected, config.failures, streams.link, t, permanent_failed
        )
        result = (
            _aggregate_once(config, task, transmit_w, survivors, streams, t, attempt, swarm)
            if survivors
            else None
        )
        if result is None:
            break  # outage or full truncation: the global model carries over
        w_cand, s_eff, included = result
        if config.screening.enabled:
            accept, gap = screen_aggregate(
                w_cand, [report_by_id[i] for i in included], task.score_fn, tau
            )
            swarm.last_gap = gap
            if not accept:
                swarm.rejected += 1
                tried.update(selected)
                attempt += 1
                if attempt > config.screening.max_retries:
                    break
                selected = next_best(reports, tried, rp.s_t)
                continue
        swarm.w_global = w_cand
        swarm.s_effective = s_eff
        swarm.selected = tuple(included)
        break


def _fl_round(config, task, workers, swarm, rp, t, streams, live_ids, permanent_failed):
    sched = config.schedules
    anchor = swarm.w_global
    for idx in live_ids:
        grad_fn = task.make_grad_fn(idx, t)
        try:
            workers[idx] = sgd_step(workers[idx], sched.alpha, grad_fn, anchor)
        except NumericError as exc:
            raise NumericError(f"round {t}: {exc}") from None

    transmit_w, _ = _transmit_vectors(config, workers, live_ids, streams, t, use_best=False)
    survivors = inject_failures(live_ids, config.failures, streams.link, t, permanent_failed)
    swarm.s_effective = 0
    swarm.selected = ()
    result = (
        _aggregate_once(config, task, transmit_w, survivors, streams, t, 0, swarm)
        if survivors
        else None
    )
    if result is not None:
        swarm.w_global, swarm.s_effective, included = result
        swarm.selected = tuple(included)

    # every worker resumes from the broadcast model; score it once for the
    # personal-best bookkeeping shared with the other algorithms
    f_global = task.score_fn(swarm.w_global)
    for idx in live_ids:
        wk = replace(workers[idx], w=swarm.w_global.copy())
        if f_global < wk.f_best:
            wk = replace(wk, w_best=swarm.w_global.copy(), f_best=f_global)
        workers[idx] = wk


def _pso_harness_round(config, task, workers, swarm, rp, t, live_ids):
    live = [workers[i] for i in live_ids]
    coeff_dim = task.dim if config.coeff_mode == "per_coord" else None
    new_live, w_global = pso_round(
        live, config.schedules, rp, swarm.w_global, task.score_fn, config.seed, t,
        coeff_dim=coeff_dim,
    )
    for wk in new_live:
        workers[wk.id] = wk
    swarm.w_global = w_global
    best = new_live[swarm_best(new_live)].id
    swarm.selected = (best,)
    swarm.s_effective = 1
    swarm.uplink_scalars += len(live_ids)
    swarm.uplink_vectors += 1
    swarm.ota_uses += 1


def run(config: ExperimentConfig, on_round=None) -> list[RoundMetrics]:
    """Execute one experiment; returns per-round metrics (and writes them if
    config.output_dir is set).

    `on_round(t, workers, swarm)` is called after each round's metrics are
    recorded, for tests and notebooks that want trajectory access.
    """
    config.validate()
    seed = config.seed
    task = build_task(config)
    num_workers = config.num_workers

    byzantine = attacker_ids(config.attacks, num_workers, RngStream(seed, "attack_ids"))
    init_stream = RngStream(seed, "init")
    workers = [
        init_worker(
            i,
            task.dim,
            init_stream.child(0 if config.shared_init else i),
            data=task.worker_data[i] if task.worker_data else None,
            is_byzantine=i in byzantine,
            init_scale=config.init_scale,
        )
        for i in range(num_workers)
    ]
    permanent_failed = permanent_failures(
        config.failures, num_workers, RngStream(seed, "node_fail")
    )
    live_ids = [i for i in range(num_workers) if i not in permanent_failed]
    if not live_ids:
        raise ConfigError("failures.node_fail_prob left no live workers")

    tau = _resolve_tau(config)
    streams = _Streams(seed)
    swarm = SwarmState(w_global=np.zeros(task.dim))

    writer = None
    if config.output_dir:
        out_dir = Path(config.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = {
            "seed": seed,
            "metrics_csv": "metrics.csv",
            "screening_tolerance_resolved": tau,
            "config": to_dict(config),
        }
        with open(out_dir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        writer = _MetricsWriter(out_dir / "metrics.csv")

    history: list[RoundMetrics] = []
    try:
        for t in range(config.rounds):
            rp = eval_schedule(config.schedules, t, config.censoring)
            swarm.t = t
            if config.algorithm == "dsl":
                _dsl_round(
                    config, task, workers, swarm, rp, t, streams, live_ids,
                    permanent_failed, tau,
                )
            elif config.algorithm == "fl":
                _fl_round(
                    config, task, workers, swarm, rp, t, streams, live_ids,
                    permanent_failed,
                )
            else:
                _pso_harness_round(config, task, workers, swarm, rp, t, live_ids)
            metrics = _measure(config, task, workers, swarm, live_ids, t)
            history.append(metrics)
            if writer:
                writer.append(metrics)
            if on_round is not None:
                on_round(t, workers, swarm)
    finally:
        if writer:
            writer.close()
    return history


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", text).strip("-") or "variant"


SWEEP_HEADER = [
    "variant",
    "seed",
    "status",
    "rounds",
    "final_test_acc",
    "final_test_loss",
    "final_score_loss",
    "final_mean_fbest",
    "uplink_scalars",
    "uplink_vectors",
    "ota_uses",
    "rejected",
]


def sweep(base_raw: dict, overrides: list[dict], seeds, out_dir=None) -> list[dict]:
    """Run each override variant over the given seeds.

    Emits one row per (variant, seed) plus a median-over-seeds row per
    variant; a failing sub-run is recorded in its row and the sweep goes on.
    """
    if not overrides:
        raise ConfigError("sweep needs at least one override set")
    rows: list[dict] = []
    for ov in overrides:
        if not isinstance(ov, dict):
            raise ConfigError("each override must be a mapping of dotted keys")
        label = ov.get("_label") or (
            ";".join(f"{k}={ov[k]}" for k in sorted(ov) if not k.startswith("_")) or "base"
        )
        ok_rows = []
        for seed in seeds:
            raw = apply_overrides(base_raw, {k: v for k, v in ov.items() if not k.startswith("_")})
            raw["seed"] = int(seed)
            if out_dir:
                raw["output_dir"] = str(Path(out_dir) / f"{_slug(label)}_seed{seed}")
            row = {"variant": label, "seed": int(seed), "status": "ok"}
            try:
                history = run(from_dict(raw))
                last = history[-1]
                row.update(
                    rounds=last.round + 1,
                    final_test_acc=last.test_acc,
                    final_test_loss=last.test_loss,
                    final_score_loss=last.score_loss,
                    final_mean_fbest=last.mean_fbest,
                    uplink_scalars=last.uplink_scalars,
                    uplink_vectors=last.uplink_vectors,
                    ota_uses=last.ota_uses,
                    rejected=last.rejected,
                )
                ok_rows.append(row)
            except Exception as exc:  # noqa: BLE001 - sweep must survive bad variants
                row["status"] = f"error: {exc}"
            rows.append(row)
        if ok_rows:
            median_row = {"variant": label, "seed": "median", "status": "ok"}
            for key in SWEEP_HEADER[3:]:
                values = [r[key] for r in ok_rows]
                median_row[key] = float(np.median(values))
            rows.append(median_row)
    if out_dir:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        with open(out_path / "sweep_summary.csv", "w", newline="") as fh:
            fh.write(",".join(SWEEP_HEADER) + "\n")
            for row in rows:
                fields = []
                for key in SWEEP_HEADER:
                    value = row.get(key, "")
                    if isinstance(value, float):
                        fields.append(f"{value:.9g}")
                    else:
                        fields.append(str(value))
                fh.write(",".join(fields) + "\n")
    return rows
