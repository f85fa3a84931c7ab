import numpy as np
from dslsim.config import from_dict
from dslsim.harness import run, build_task
from dslsim import models

base = {
    "algorithm": "dsl", "rounds": 200, "num_workers": 50, "batch_size": 32, "seed": 1,
    "shared_init": True,
    "model": {"kind": "mlp", "d_in": 20, "classes": 5, "hidden": 16},
    "data": {"n_total": 20000, "sep": 2.0, "dirichlet_alpha": 0.1,
             "global_fraction": 0.01, "share_global": True},
    "schedules": {"lambda_init": 0.4, "lambda_final": 0.1, "c0_init": 1.0, "c0_final": 0.4,
                  "c1_max": 1.0, "c2_max": 1.0, "alpha": 0.3, "mu": 0.5,
                  "s_init": 1, "s_final": 25},
    "channel": {"kind": "rayleigh", "noise_var": 0.01, "p_max": 10.0, "h_min": 0.2},
}
cfg = from_dict(base)
task = build_task(cfg)
spec = cfg.model

def probe(t, workers, swarm):
    if t not in (50, 100, 150, 199):
        return
    cur_accs = [models.accuracy(spec, wk.w, task.test_ds) for wk in workers]
    best_accs = [models.accuracy(spec, wk.w_best, task.test_ds) for wk in workers]
    mean_cur = np.mean(np.stack([wk.w for wk in workers]), axis=0)
    sel = list(swarm.selected)
    mean_best_sel = np.mean(np.stack([workers[i].w_best for i in sel]), axis=0) if sel else None
    print(f"t={t}: worker_cur mean={np.mean(cur_accs):.3f} max={np.max(cur_accs):.3f} | "
          f"worker_best mean={np.mean(best_accs):.3f} | "
          f"acc(mean cur w)={models.accuracy(spec, mean_cur, task.test_ds):.3f} | "
          f"acc(w^g)={models.accuracy(spec, swarm.w_global, task.test_ds):.3f} | s_eff={len(sel)}")

hist = run(cfg, on_round=probe)
print("final", hist[-1].test_acc)
