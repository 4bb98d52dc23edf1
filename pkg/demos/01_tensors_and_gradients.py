"""Tour of the autodiff engine: build a small conv network, backprop, and
compare analytic gradients against central finite differences.

Run:  python demos/01_tensors_and_gradients.py
"""

import numpy as np

from panosynth import tensor as T
from panosynth.gradcheck import check_gradients
from panosynth.optim import Adam
from panosynth.tensor import Tensor

rng = np.random.default_rng(0)

print("== a tiny computation graph ==")
x = Tensor(np.array([3.0]), requires_grad=True)
loss = T.tsum(x * x)
loss.backward()
print(f"d(x^2)/dx at x=3 -> {x.grad[0]:.1f}  (calculus says 6)")

print("\n== conv + instance norm + leaky relu, checked against finite differences ==")
inp = Tensor(rng.normal(size=(2, 3, 8, 8)), requires_grad=True, dtype=np.float64)
kern = Tensor(rng.normal(size=(4, 3, 3, 3)) * 0.2, requires_grad=True, dtype=np.float64)
probe = Tensor(rng.normal(size=(2, 4, 8, 8)), dtype=np.float64)


def network(a, k):
    h = T.conv2d(a, k, stride=1, pad=1)
    h = T.leaky_relu(T.instance_norm(h), 0.2)
    return T.tsum(h * probe)


worst = check_gradients(network, [inp, kern], h=1e-5, tol=1e-4)
print(f"worst relative error across {inp.size + kern.size} entries: {worst:.2e}")

print("\n== Adam drives a quadratic to its minimum ==")
p = Tensor(np.array([4.0, -2.0]), requires_grad=True)
opt = Adam({"p": p})
for step in range(400):
    opt.zero_grad()
    err = (p - Tensor(np.array([1.0, 1.0])))
    T.tsum(err * err).backward()
    opt.step(0.05)
print(f"after 400 steps: {p.data.round(4)}  (target [1, 1])")
