"""Per-worker swarm/gradient updates and the FL and PSO reference algorithms.

Each worker blends two pulls per round: a swarm term (inertia plus attraction
toward its own best and the global model) weighted by lambda_t, and a local
gradient step weighted by (1 - lambda_t). Gradients and objective values are
injected as callables so the same machinery runs on data-driven losses and on
synthetic test objectives alike.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import (
    HyperSchedule,
    NumericError,
    ParamVector,
    RngStream,
    RoundParams,
    draw_pso_coeffs,
    ensure_finite,
    require_same_dim,
)


@dataclass(frozen=True)
class WorkerState:
    """One worker's model, velocity, personal best, and reporting memory."""

    id: int
    w: ParamVector
    v: ParamVector
    w_best: ParamVector
    f_best: float = np.inf
    last_reported_f: float | None = None
    data: object = None  # effective training Dataset; None for synthetic objectives
    is_byzantine: bool = False


@dataclass
class SwarmState:
    """Server-side view: global model, round index, selection, traffic counters."""

    w_global: ParamVector
    t: int = 0
    selected: tuple = ()
    uplink_scalars: int = 0
    uplink_vectors: int = 0
    ota_uses: int = 0
    rejected: int = 0
    s_effective: int = 0
    last_gap: float = np.nan  # |score(aggregate) - mean(reports)| of the last attempt


def init_worker(
    worker_id: int,
    dim: int,
    rng: RngStream,
    data=None,
    is_byzantine: bool = False,
    init_scale: float = 0.05,
) -> WorkerState:
    """Fresh worker: w ~ U(-scale, scale), zero velocity, personal best unset."""
    w0 = rng.generator().uniform(-init_scale, init_scale, dim)
    return WorkerState(
        id=worker_id,
        w=w0,
        v=np.zeros(dim),
        w_best=w0.copy(),
        f_best=np.inf,
        data=data,
        is_byzantine=is_byzantine,
    )


def dsl_step(
    worker: WorkerState,
    rp: RoundParams,
    coeffs: tuple[float, float],
    w_global: ParamVector,
    alpha: float,
    mu: float,
    grad_fn,
    velocity_mode: str = "bi",
) -> WorkerState:
    """One hybrid update.

    swarm pull  bi = c0_t*v + c1*(w_best - w) + c2*(w_global - w)
    grad pull   ai = alpha * grad_fn(w, anchor=w_global)
    new model   w' = w + lambda_t*bi - (1 - lambda_t)*ai

    The stored velocity is the swarm pull alone (mode "bi"), so a pure-swarm
    run (lambda = 1) is exactly classic particle swarm optimization; mode
    "total" stores the whole applied displacement instead.
    """
    require_same_dim(worker.w, w_global, f"worker {worker.id} step")
    c1, c2 = coeffs
    bi = rp.c0_t * worker.v + c1 * (worker.w_best - worker.w) + c2 * (w_global - worker.w)
    if rp.lambda_t < 1.0:
        ai = alpha * grad_fn(worker.w, w_global)
        step_vec = rp.lambda_t * bi - (1.0 - rp.lambda_t) * ai
    else:
        step_vec = bi
    w_new = worker.w + step_vec
    v_new = bi if velocity_mode == "bi" else step_vec
    try:
        ensure_finite(w_new)
        ensure_finite(v_new)
    except NumericError:
        raise NumericError(
            f"worker {worker.id}: non-finite update "
            f"(|w|={np.linalg.norm(worker.w):.3g}, |v|={np.linalg.norm(worker.v):.3g}, "
            f"mu={mu}, alpha={alpha})"
        ) from None
    return replace(worker, w=w_new, v=v_new)


def sgd_step(worker: WorkerState, alpha: float, grad_fn, anchor: ParamVector) -> WorkerState:
    """Plain gradient step used by the FL baseline."""
    w_new = worker.w - alpha * grad_fn(worker.w, anchor)
    try:
        ensure_finite(w_new)
    except NumericError:
        raise NumericError(f"worker {worker.id}: non-finite SGD update") from None
    return replace(worker, w=w_new)


def update_local_best(worker: WorkerState, score_fn) -> WorkerState:
    """Overwrite the personal best when the fair-value score strictly improves."""
    f_new = float(score_fn(worker.w))
    if f_new < worker.f_best:
        return replace(worker, w_best=worker.w.copy(), f_best=f_new)
    return worker


def swarm_best(workers: list[WorkerState]) -> int:
    """Index of the worker with the best (lowest) fair-value score; ties to lower id."""
    best = 0
    for i in range(1, len(workers)):
        if workers[i].f_best < workers[best].f_best:
            best = i
    return best


def fl_round(
    workers: list[WorkerState],
    alpha: float,
    grad_fn_for,
    aggregate_fn,
    anchor: ParamVector,
) -> tuple[list[WorkerState], ParamVector]:
    """One federated-averaging round.

    Every worker takes one gradient step from the common model, the results
    are aggregated (ideally or over the air, supplied by `aggregate_fn`), and
    all workers reset to the aggregate.
    """
    stepped = [sgd_step(wk, alpha, grad_fn_for(wk), anchor) for wk in workers]
    w_global = aggregate_fn([(wk.id, wk.w) for wk in stepped])
    reset = [replace(wk, w=w_global.copy()) for wk in stepped]
    return reset, w_global


def pso_round(
    workers: list[WorkerState],
    schedule: HyperSchedule,
    rp: RoundParams,
    w_global: ParamVector,
    objective,
    seed: int,
    t: int,
    coeff_dim: int | None = None,
) -> tuple[list[WorkerState], ParamVector]:
    """One classic particle swarm round over a common objective.

    v' = c0*v + c1*(w_best - w) + c2*(w_global - w);  w' = w + v'. Personal
    bests update on strict improvement and the returned global model is the
    best personal best (ties to the lower id). Coefficients come from the
    same keyed streams as the hybrid algorithm, so a pure-swarm hybrid run
    reproduces this trajectory exactly.
    """
    coeff_stream = RngStream(seed, "pso_coeffs")
    new_workers = []
    for wk in workers:
        c1, c2 = draw_pso_coeffs(
            coeff_stream.child(wk.id, t), schedule.c1_max, schedule.c2_max, coeff_dim
        )
        v_new = rp.c0_t * wk.v + c1 * (wk.w_best - wk.w) + c2 * (w_global - wk.w)
        w_new = wk.w + v_new
        ensure_finite(w_new, f"pso worker {wk.id}")
        wk = replace(wk, w=w_new, v=v_new)
        wk = update_local_best(wk, objective)
        new_workers.append(wk)
    best = swarm_best(new_workers)
    return new_workers, new_workers[best].w_best.copy()
