"""Print stage shapes and parameter counts of the full-size acoustic encoder for a few input lengths."""

import numpy as np

from swinbert import tensor as T
from swinbert.acoustic import AcousticEncoder, DemographicInfo
from swinbert.config import AcousticConfig

model = AcousticEncoder(AcousticConfig(), np.random.default_rng(0))
print(f"parameters: {model.num_parameters():,}")
with T.no_grad():
    for frames in (98, 498, 998):
        out = model(np.zeros((1, frames, 64)), [DemographicInfo(70, "F")], keep_stages=True)
        chain = " -> ".join("x".join(map(str, s.shape[1:])) for s in out.stages)
        print(f"{frames:>4} frames: {chain}; xp {out.xp.shape[1]}, xa {out.xa.shape[1]}")
