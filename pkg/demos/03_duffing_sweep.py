"""
Duffing parameters from one short trajectory

Same pipeline as `kpid sweep` but driven from Python: 2000 snapshots of the
augmented Duffing oscillator, a 50-step query at (alpha, beta, delta) =
(1, -1, 0), and two meshes, one containing the truth and one shifted off it.
Takes about half a minute.
"""

import time

import numpy as np

from kpid import KernelSpec, ParameterMesh, identify, predict_trajectory, train
from kpid.systems import (SamplingConfig, augmented_duffing, generate_query,
                          generate_training, uniform_controls)

truth = np.array([1.0, -1.0, 0.0])
system = augmented_duffing()

t0 = time.perf_counter()
data = generate_training(system, SamplingConfig(2000, [(-3, 3)] * 5, [(-2, 2)], seed=0))
model = train(data, KernelSpec.gaussian(20.0), eps=1e-6)
print(f"trained on {len(data)} snapshots in {time.perf_counter() - t0:.1f}s, "
      f"effective rank {model.effective_rank}")

controls = uniform_controls(50, -2, 2, seed=1)
query = generate_query(system, [1.0, 0.0], truth, controls)

for label, lo, hi in (("on-grid ", -3.0, 3.0), ("off-grid", -3.3, 2.7)):
    res = identify(model, query, ParameterMesh.uniform(lo, hi, 0.5, p=3), reference=truth)
    top = np.argsort(res.mse)[:3]
    print(f"{label}: best {np.round(res.best_node, 2)}  mse {res.best_mse:.3e}")
    for i in top[1:]:
        print(f"          then {np.round(res.nodes[i], 2)}  mse {res.mse[i]:.3e}")

# roll the learned model forward from the true initial condition
pred = predict_trajectory(model, np.r_[query.Z[0], truth], controls)
err = np.abs(pred[1:, :2] - query.W).max(axis=1)
print("rollout state error at steps 1, 10, 50:",
      np.array2string(err[[0, 9, 49]], precision=3))
print("parameter states after 50 steps:", np.array2string(pred[-1, 2:], precision=3))
