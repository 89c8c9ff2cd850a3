"""
The averaged gradient approaches the full gradient
==================================================

vr_diagnostic = || V / alpha - grad f(W_prev) ||. For plain SGD the
analogous quantity (minibatch minus full gradient) does not shrink;
for the dual average it does, even when every sample is freshly noised.
"""

from rmda import config, runner

# batch 10 so the minibatch noise is large to begin with
base = config.load_preset("synthetic-logreg").replace(batch_size=10)

for aug in ({"kind": "none", "sigma": 0.0}, {"kind": "gaussian", "sigma": 0.1}):
    recs = runner.run_experiment(base.replace(augmentation=aug))
    print(f"\naugmentation {aug['kind']} (sigma {aug['sigma']})")
    for r in recs[::10]:
        print(f"  epoch {r.epoch:3d}  vr {r.vr_diagnostic:.2e}")
    print(f"  final / first = {recs[-1].vr_diagnostic / recs[0].vr_diagnostic:.4f}")

# the jumps at epochs 25/50/75 are the restarts: V and alpha are reset,
# so the average starts over from a single minibatch.
