"""
Receptive field and cost scaling
================================

Compares where the gradient of one output pixel lands for a toy FMSR and a
three-layer conv net, then times an FMB block against windowless attention.
"""

import numpy as np
import torch

from fmsr.bench import bench_scaling, summarize
from fmsr.evaluate import conv_reference_net, erf_map
from fmsr.model import ModelConfig, build_model

torch.set_num_threads(1)
x = torch.rand(1, 3, 64, 64, generator=torch.Generator().manual_seed(0))

toy = erf_map(build_model(ModelConfig(groups=2, blocks=2, channels=32, d_state=8, reduction=8)), x)
ref = erf_map(conv_reference_net(), x)
print("nonzero gradient pixels, fmsr:", int((toy.raw > 0).sum()), "of", toy.raw.size)
print("nonzero gradient pixels, conv:", int((ref.raw > 0).sum()))
print("fmsr corners:", np.array([toy.raw[0, 0], toy.raw[0, -1], toy.raw[-1, 0], toy.raw[-1, -1]]))

# a coarse text rendering of the fmsr map, six decades below the peak
decades = np.log10(toy.raw[::4, ::4] / toy.raw.max() + 1e-12)
for row in np.clip((decades + 6) / 6, 0, 0.999):
    print("".join(" .:-=+*#%@"[int(v * 10)] for v in row))

# FMB cost grows with token count, attention cost with its square
recs = bench_scaling(sizes=(32, 48, 64), repeats=3)
print(summarize(recs))
