import sys, time
import numpy as np
from dslsim.config import from_dict
from dslsim.harness import run

def final_acc(raw, seed):
    cfg = from_dict({**raw, "seed": seed})
    return run(cfg)[-1].test_acc

def variant(base, **kw):
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in base.items()}
    for k, v in kw.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = v
    return out

base = {
    "algorithm": "dsl", "rounds": 200, "num_workers": 50, "batch_size": 32,
    "model": {"kind": "mlp", "d_in": 20, "classes": 5, "hidden": 16},
    "data": {"n_total": 6000, "sep": 2.0, "dirichlet_alpha": 0.1,
             "global_fraction": 0.01, "share_global": True},
    "schedules": {"lambda_init": 0.8, "lambda_final": 0.2, "c0_init": 1.0, "c0_final": 0.4,
                  "c1_max": 1.0, "c2_max": 1.0, "alpha": 0.3, "mu": 0.01,
                  "s_init": 1, "s_final": 25},
    "channel": {"kind": "rayleigh", "noise_var": 0.01, "p_max": 10.0, "h_min": 0.2},
}

seeds = [1, 2, 3, 4, 5]
t0 = time.time()
for chan in ("rayleigh", "ideal"):
    b = variant(base, channel={"kind": chan})
    rows = {}
    rows["dsl+share"] = [final_acc(b, s) for s in seeds]
    rows["dsl-noshare"] = [final_acc(variant(b, data={"share_global": False}), s) for s in seeds]
    rows["fl"] = [final_acc(variant(b, algorithm="fl"), s) for s in seeds]
    print(f"--- channel={chan} ({time.time()-t0:.0f}s)")
    for name, accs in rows.items():
        print(f"{name:12s} median={np.median(accs):.4f}  accs={[f'{a:.3f}' for a in accs]}")
