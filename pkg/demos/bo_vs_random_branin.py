"""GP-Hedge BO against random search on a noisy Branin function stretched onto
the default (log10 n, log10 tau) box."""

import numpy as np

from lapbo.benchmarks import BRANIN_MIN, ScalarObjective, branin_on_box
from lapbo.bo import SearchConfig, best_so_far, bo_search, random_search

cfg = SearchConfig(budget=30)
objective = ScalarObjective(branin_on_box(cfg.bounds), noise=0.1)

bo_curves, rs_curves = [], []
for seed in range(10):
    scfg = SearchConfig(budget=30, seed=seed)
    bo = bo_search(objective, scfg)
    bo_curves.append(best_so_far(bo))
    rs_curves.append(best_so_far(random_search(objective, scfg)))
    picks = [r.chosen_acquisition for r in bo[scfg.n_init:]]
    print(f"seed {seed}: BO best {bo_curves[-1][-1]:.3f}  RS best {rs_curves[-1][-1]:.3f}  "
          f"EI/LCB/PI picks {picks.count('EI')}/{picks.count('LCB')}/{picks.count('PI')}")

print(f"\nglobal minimum {BRANIN_MIN:.3f} (noise sd 0.1 on top)")
print("iteration  BO median  RS median")
for i in (4, 9, 14, 19, 29):
    print(f"{i + 1:>9}  {np.median([c[i] for c in bo_curves]):9.3f}  "
          f"{np.median([c[i] for c in rs_curves]):9.3f}")
