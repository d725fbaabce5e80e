"""
The median-split PUF for comparison.

It digitizes every device's LRS resistance, finds the median, and writes the
upper half to HRS. Balance is forced (ones and zeros differ by at most one),
but every device costs a digitization and a write-back decision. The
self-extracting cell needs neither.
"""
import json

import numpy as np

from r3puf.campaign import CampaignConfig, baseline_comparison
from r3puf.metrics import median_split_baseline

doc = baseline_comparison(CampaignConfig(chips=2, cells_per_chip=1000))
print(json.dumps(doc["baseline"], indent=2))
print("extra operations per device for the self-extracting cell:", doc["r3puf_extra_ops_per_device"])

# balance holds even for inputs full of duplicates
r = np.repeat([1.0, 2.0, 2.0, 3.0], [5, 1, 6, 3])
b = median_split_baseline(r)
print(f"{r.size} values with ties -> {int(b.bits.sum())} ones, {int(r.size - b.bits.sum())} zeros")
