"""Train a small MLP on two moons, then look at what the diagonal Laplace
posterior does to its predictions as the prior precision tau changes."""

import numpy as np

from lapbo.curvature import diagonal_fisher, groups_from_log10, layer_layout
from lapbo.data import gen_dataset, split
from lapbo.laplace import laplace_posterior, predict_mc, predictive_entropy
from lapbo.metrics import reliability, score
from lapbo.nn import ArchSpec, forward_batch, init_network, train_sgd

train, val = split(gen_dataset("two_moons", 3000, 0.1, seed=0), [2000, 1000])
net = train_sgd(init_network(ArchSpec((2, 32, 32, 2)), 0), train, epochs=200, lr=0.1,
                batch_size=32, seed=0)

base = score(forward_batch(net, val.inputs), val.labels)
print(f"MAP network: acc {base.accuracy_pct:.1f}%  ece {base.ece_pct:.3f}%  cost {base.cost:.3f}")

curv = diagonal_fisher(net, train)
layout = layer_layout("single", net.arch.n_layers)

# log10 n fixed at the training-set size; sweep log10 tau
print("\nlog10 tau   acc     ece     cost    mean entropy")
for log_tau in (-2, 0, 1, 2, 3, 4):
    post = laplace_posterior(net, curv, groups_from_log10([np.log10(2000), log_tau], layout))
    probs = predict_mc(post, val.inputs, t=30, seed=0).probs
    s = score(probs, val.labels)
    print(f"{log_tau:>9}   {s.accuracy_pct:5.1f}  {s.ece_pct:6.3f}  {s.cost:7.3f}  "
          f"{predictive_entropy(probs).mean():.4f}")

# the reliability table behind a reliability diagram
bins = reliability(forward_batch(net, val.inputs), val.labels, m_bins=10)
print("\nbin            count  conf    acc")
for lo, hi, c, conf, acc in zip(bins.lo, bins.hi, bins.count, bins.mean_confidence, bins.accuracy):
    if c:
        print(f"[{lo:.1f}, {hi:.1f})   {c:5d}  {conf:.3f}  {acc:.3f}")
