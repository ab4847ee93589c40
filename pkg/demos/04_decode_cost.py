"""How much work layer-output caching saves during greedy decoding.

Counts are query-key pairs scored by decoder attention, which are exact and
machine independent; wall times are for orientation only.
Run: python demos/04_decode_cost.py
"""

import numpy as np

from molvit import Model, ModelConfig
from molvit.evaluation import bench_decode, format_bench

# 48x80 pixels in 16-pixel patches: 15 patches plus the class token, so M = 16.
cfg = ModelConfig.build(20, image_size=(48, 80), patch_size=16, dim=32, enc_layers=2, dec_layers=2,
                        heads=4, dropout=0.0, max_len=160)
model = Model.init(cfg, seed=0)
image = np.random.default_rng(0).random((48, 80, 1)).astype(np.float32)

rows = bench_decode(model, image, [16, 32, 64, 128])
print(format_bench(rows))

for a, b in zip(rows, rows[1:]):
    print(f"N {a.steps:>3} -> {b.steps:>3}: naive grows x{b.naive_pairs / a.naive_pairs:.2f}, "
          f"cached x{b.cached_pairs / a.cached_pairs:.2f}")
