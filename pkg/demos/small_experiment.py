"""A reduced end-to-end run: three repetitions of BO and random search over the
Laplace hyperparameters, then the summary table written by the report step."""

import sys
import tempfile
from pathlib import Path

from lapbo.experiment import ExperimentConfig, run_experiment

cfg = ExperimentConfig().with_overrides(**{
    "experiment.repetitions": 3,
    "search.budget": 20,
})
out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="lapbo-"))
art = run_experiment(cfg, out)

print(f"artifacts in {art.out_dir}")
print(art.summary["table"].read_text())
# best-so-far mean/std per iteration, ready for plotting
rows = art.summary["best_so_far"].read_text().splitlines()
print("\n".join(rows[:3] + ["..."] + rows[-2:]))
