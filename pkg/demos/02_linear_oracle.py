"""
Recovering a known pole

The scalar map x+ = a*x + 0.1*u is learned with the pole a carried as a
constant extra state. A short query from the true system then picks a out
of a mesh by one-step prediction error.
"""

import numpy as np

from kpid import KernelSpec, ParameterMesh, identify, train
from kpid.systems import (SamplingConfig, generate_query, generate_training,
                          scalar_pole_system, uniform_controls)

system = scalar_pole_system(b=0.1)
cfg = SamplingConfig(500, [(-1, 1), (0.4, 1.0)], [(-1, 1)], seed=0)
model = train(generate_training(system, cfg), KernelSpec.gaussian(20.0), eps=1e-6)
mesh = ParameterMesh.uniform(0.4, 1.0, 0.05, p=1)
print("mesh nodes:", np.array2string(mesh.nodes().ravel(), precision=2))

controls = uniform_controls(50, -1, 1, seed=1)
for a in (0.5, 0.7, 0.9):
    query = generate_query(system, [0.5], [a], controls)
    res = identify(model, query, mesh, reference=[a])
    runner_up = np.sort(res.mse)[1]
    print(f"true a = {a:.2f}  ->  found {res.best_node[0]:.2f}   "
          f"best mse {res.best_mse:.2e}, next {runner_up:.2e}")
