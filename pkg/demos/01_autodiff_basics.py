"""A tour of the reverse-mode autodiff engine.

The package trains its models on a small tape-based engine: operations
on `Tensor`s recorded inside a `Tape` block can be differentiated by a
single backward sweep.  Here we differentiate a tiny expression and
confirm the result against central finite differences.
"""

import numpy as np

from essaygen import autodiff as ad

# Build a little computation: y = sum(softmax(x W) * W2)
rng = np.random.default_rng(0)
x = ad.Tensor(rng.normal(size=(2, 4)), requires_grad=True)
w = ad.Tensor(rng.normal(size=(4, 3)), requires_grad=True)

with ad.Tape() as tape:
    h = ad.softmax(ad.matmul(x, w), axis=-1)
    y = ad.tsum(ad.mul(h, h))
    tape.backward(y)

print("loss:", float(y.data))
print("grad wrt w:\n", w.grad)

# Check one entry of the gradient numerically.  Outside a Tape the same
# operations run as plain numpy, so the probe is cheap.
h_step = 1e-6
orig = w.data[1, 2]


def loss_at(v):
    w.data[1, 2] = v
    out = ad.tsum(ad.mul(ad.softmax(ad.matmul(x, w), axis=-1),
                         ad.softmax(ad.matmul(x, w), axis=-1)))
    return float(out.data)


numeric = (loss_at(orig + h_step) - loss_at(orig - h_step)) / (2 * h_step)
w.data[1, 2] = orig
print(f"analytic {w.grad[1, 2]:.10f} vs numeric {numeric:.10f}")
assert abs(w.grad[1, 2] - numeric) < 1e-6
print("gradient agrees with finite differences")
