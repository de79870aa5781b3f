"""
Parameter and FLOP budget
=========================

Builds the default network and walks its parameter and FLOP breakdown.
"""

import re
from collections import Counter

from fmsr.flops import count_flops
from fmsr.model import ModelConfig, build_model, count_params, module_param_breakdown

cfg = ModelConfig()
model = build_model(cfg)
print(cfg)
print(f"total parameters: {count_params(model) / 1e6:.3f}M")
for name, n in module_param_breakdown(model).items():
    print(f"  {name:<12} {n:>10}")

# FLOPs for one 128x128 low-resolution input, grouped by layer type
rep = count_flops(model, 128, 128)
print(f"total FLOPs at 128x128: {rep.total / 1e9:.2f}G")
agg = Counter()
for name, n in rep.breakdown.items():
    agg[re.sub(r"\.\d+", "", name)] += n
for name, n in agg.most_common(10):
    print(f"  {name:<40} {n / 1e9:7.2f}G")

# the frequency blocks are a large share of the count
fsm = sum(n for k, n in agg.items() if "fsm" in k)
print(f"frequency blocks: {fsm / rep.total:.1%} of all FLOPs")
