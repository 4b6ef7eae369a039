"""Tour of the tensor engine: building blocks, backward passes, grad checks.

Run: python3 demos/01_autodiff.py
"""

import numpy as np

from pfan import tensor as T
from pfan.tensor import Tensor

print("== scalar chain rule ==")
x = Tensor(np.array([0.5, -1.5, 2.0]), requires_grad=True)
y = (T.gelu(x) * 3.0 + x ** 2).sum()
y.backward()
print("x      =", x.data)
print("dy/dx  =", x.grad)

print("\n== broadcasting tracks shapes through the backward pass ==")
w = Tensor(np.ones((2, 3)), requires_grad=True)
b = Tensor(np.zeros(3), requires_grad=True)
loss = ((w * 2.0 + b) ** 2).mean()
loss.backward()
print("dL/dw shape", w.grad.shape, " dL/db shape", b.grad.shape)
print("dL/db (summed over the broadcast rows):", b.grad)

print("\n== convolution against a finite-difference probe ==")
rng = np.random.default_rng(0)
img = Tensor(rng.standard_normal((2, 6, 6)), requires_grad=True)
kern = Tensor(0.3 * rng.standard_normal((3, 2, 3, 3)), requires_grad=True)


def loss_fn():
    return (T.conv2d(img, kern, padding=1) ** 2).sum()


loss_fn().backward()
analytic = kern.grad.reshape(-1)[0]
h = 1e-5
flat = kern.data.reshape(-1)
orig = flat[0]
flat[0] = orig + h
lp = loss_fn().item()
flat[0] = orig - h
lm = loss_fn().item()
flat[0] = orig
numeric = (lp - lm) / (2 * h)
print(f"analytic d(loss)/d(kernel[0]) = {analytic:.8f}")
print(f"numeric  d(loss)/d(kernel[0]) = {numeric:.8f}")

print("\n== float64 inputs keep the whole graph in double precision ==")
x64 = Tensor(np.array([1.0, 2.0]))          # float64 stays float64
x32 = Tensor(np.array([1.0, 2.0], np.float32))
print("float64 in ->", T.gelu(x64).data.dtype, "; float32 in ->",
      T.gelu(x32).data.dtype)
