import numpy as np
from dslsim.config import from_dict
from dslsim.harness import run, build_task
from dslsim import models

base = {
    "algorithm": "dsl", "rounds": 200, "num_workers": 50, "batch_size": 32, "seed": 1,
    "model": {"kind": "mlp", "d_in": 20, "classes": 5, "hidden": 16},
    "data": {"n_total": 6000, "sep": 2.0, "dirichlet_alpha": 0.1,
             "global_fraction": 0.01, "share_global": True},
    "schedules": {"lambda_init": 0.8, "lambda_final": 0.2, "c0_init": 1.0, "c0_final": 0.4,
                  "c1_max": 1.0, "c2_max": 1.0, "alpha": 0.3, "mu": 0.01,
                  "s_init": 1, "s_final": 25},
    "channel": {"kind": "rayleigh", "noise_var": 0.01, "p_max": 10.0, "h_min": 0.2},
}
cfg = from_dict(base)
task = build_task(cfg)
snaps = {}
def probe(t, workers, swarm):
    if t in (50, 100, 199):
        cur = np.mean([models.accuracy(cfg.model, wk.w, task.test_ds) for wk in workers])
        best = np.mean([models.accuracy(cfg.model, wk.w_best, task.test_ds) for wk in workers])
        age = np.mean([np.abs(wk.w - wk.w_best).max() > 1e-9 for wk in workers])
        snaps[t] = (cur, best)
        print(f"t={t}: mean acc of current w={cur:.3f}  of w_best={best:.3f}  w!=w_best frac={age:.2f}")
hist = run(cfg, on_round=probe)
print("final w^g acc:", hist[-1].test_acc)

# FL ceiling: iid vs non-iid
for alpha in (0.1, 1e6):
    accs = []
    for seed in (1, 2, 3):
        raw = {**base, "algorithm": "fl", "seed": seed,
               "data": {**base["data"], "dirichlet_alpha": alpha, "share_global": False}}
        accs.append(run(from_dict(raw))[-1].test_acc)
    print(f"fl dirichlet_alpha={alpha}: median={np.median(accs):.4f}")
