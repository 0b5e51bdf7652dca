"""Tour of the tensor engine: forward ops, reverse-mode gradients, the tape.

Run:  python3 demos/01_tensor_autodiff.py
"""

import numpy as np

from xlrc import tensor as T
from xlrc.gradcheck import check_gradients
from xlrc.tensor import ComputationTape, Tensor, backward

print("=== building a small expression graph ===")
rng = np.random.default_rng(0)
x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
w = Tensor(rng.standard_normal((4, 4)), requires_grad=True)

y = T.matmul(x, w)
attn = T.softmax_rows(T.matmul(y, T.transpose(y)))
out = T.matmul(attn, y)
loss = T.scale(T.sum_all(T.mul(out, out)), 0.5)
print(f"x{x.shape} @ w{w.shape} -> attention{attn.shape} -> loss {loss.item():.4f}")

print("\n=== reverse-mode differentiation ===")
backward(loss)
print(f"grad wrt x has shape {x.grad.shape}, first row: "
      f"{np.round(x.grad[0], 3)}")
print(f"grad wrt w has shape {w.grad.shape}")

print("\n=== the tape records every operation in topological order ===")
tape = ComputationTape.from_tensor(loss)
ops = [node._op for node in tape if node._op != "leaf"]
print(f"{len(tape)} nodes, ops in order: {ops}")
print(f"replay reproduces bit-identical values: {tape.replay()}")

print("\n=== analytic gradients vs central finite differences ===")
def build_loss():
    y = T.matmul(x, w)
    a = T.softmax_rows(T.matmul(y, T.transpose(y)))
    return T.scale(T.sum_all(T.mul(T.matmul(a, y), T.matmul(a, y))), 0.5)

rep = check_gradients(build_loss, {"x": x, "w": w})
print(f"checked {rep.checked} entries, failures: {len(rep.failures)}")

print("\n=== softmax rows always sum to one ===")
probs = T.softmax_rows(Tensor(rng.uniform(-30, 30, size=(4, 6))))
print("row sums:", probs.values.sum(axis=1))
