import itertools, time
import numpy as np
from dslsim.config import from_dict
from dslsim.harness import run

def variant(base, **kw):
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in base.items()}
    for k, v in kw.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = v
    return out

def med(raw, seeds=(1, 2, 3)):
    return float(np.median([run(from_dict({**raw, "seed": s}))[-1].test_acc for s in seeds]))

base = {
    "algorithm": "dsl", "rounds": 200, "num_workers": 50, "batch_size": 32,
    "shared_init": True,
    "model": {"kind": "mlp", "d_in": 20, "classes": 5, "hidden": 16},
    "data": {"n_total": 20000, "sep": 2.0, "dirichlet_alpha": 0.1,
             "global_fraction": 0.01, "share_global": True},
    "schedules": {"lambda_init": 0.4, "lambda_final": 0.1, "c0_init": 1.0, "c0_final": 0.4,
                  "c1_max": 1.0, "c2_max": 1.0, "alpha": 0.3, "mu": 0.5,
                  "s_init": 1, "s_final": 25},
    "channel": {"kind": "rayleigh", "noise_var": 0.01, "p_max": 10.0, "h_min": 0.2},
}

t0 = time.time()
fl = med(variant(base, algorithm="fl", data={"share_global": False}))
print(f"fl baseline: {fl:.4f}  ({time.time()-t0:.0f}s)")
for mu, c2m, alpha in itertools.product([0.2, 0.5, 1.0], [1.0, 2.0], [0.3, 0.5]):
    b = variant(base, schedules={"mu": mu, "c2_max": c2m, "alpha": alpha})
    share = med(b)
    noshare = med(variant(b, data={"share_global": False}))
    flag = "OK " if share > max(noshare, fl) else "   "
    print(f"{flag} mu={mu} c2m={c2m} a={alpha}: share={share:.4f} noshare={noshare:.4f}  ({time.time()-t0:.0f}s)")
