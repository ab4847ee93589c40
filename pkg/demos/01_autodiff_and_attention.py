"""Tape autodiff and attention on toy inputs.

Run: python demos/01_autodiff_and_attention.py
"""

import numpy as np

from molvit import tensor as T
from molvit.attention import capture_attention, multi_head_attention
from molvit.decoder import causal_mask
from molvit.tensor import Tensor

# A scalar function of a small matrix, differentiated by the tape.
x = Tensor(np.array([[0.5, -1.0], [2.0, 0.0]]), requires_grad=True)
with T.Tape() as tape:
    y = T.tsum(T.mul(T.gelu(x), x))
tape.backward(y)
print("f(x) =", float(y.data))
print("df/dx =\n", x.grad)

# Masked self-attention over four positions; each row only sees its past.
rng = np.random.default_rng(0)
w = {}
for p in "qkvo":
    w["w" + p] = Tensor(rng.normal(0, 0.5, (8, 8)))
    w["b" + p] = Tensor(np.zeros(8))
seq = Tensor(rng.normal(size=(4, 8)))
with capture_attention() as weights:
    multi_head_attention(seq, seq, w, heads=2, mask=causal_mask(4))
print("attention weights of head 0 (rows sum to 1, upper triangle is 0):")
print(np.round(weights[0][0], 3))
