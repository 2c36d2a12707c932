"""
Finite-rank operator on a handful of Duffing snapshots

Train on 25 augmented snapshots, look at the singular values, check that
the two ways of evaluating the model agree, then save and reload it.
"""

import tempfile

import numpy as np

from kpid import KernelSpec, train, save_model, load_model, predict_step
from kpid.operator import predict_step_direct, drift_and_control
from kpid.systems import SamplingConfig, augmented_duffing, generate_training

cfg = SamplingConfig(25, [(-3, 3)] * 5, [(-2, 2)], dt=0.1, seed=0)
data = generate_training(augmented_duffing(), cfg)
model = train(data, KernelSpec.gaussian(20.0), eps=1e-6)

print("snapshots:", len(data), " state dim:", model.dims.n_aug)
print("leading singular values:", np.array2string(model.Sigma[:5], precision=3))
print("reconstruction residual: %.2e" % model.reconstruction_residual)

# the factored evaluation and the direct matrix evaluation should coincide
x = np.array([0.5, -0.2, 1.0, -1.0, 0.0])
u = np.array([0.3])
a = predict_step(model, x, u)
b = predict_step_direct(model, x, u)
print("one-step prediction:", np.array2string(a, precision=4))
print("path disagreement:   %.1e" % (np.linalg.norm(a - b) / np.linalg.norm(b)))

# the prediction splits into a drift term and a control-gain term
f, g = drift_and_control(model, x)
print("drift + gain*u reproduces it:", np.allclose(f + g @ u, a, rtol=1e-12))

with tempfile.TemporaryDirectory() as tmp:
    save_model(model, tmp)
    again = load_model(tmp)
    print("reloaded model matches bit for bit:",
          np.array_equal(predict_step(again, x, u), a))
