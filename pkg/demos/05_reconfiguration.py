"""
How far a response moves between programming epochs.

Each epoch redraws both devices' LRS resistance around their own means. A cell
only changes its bit when that redraw reverses which device reaches its RESET
threshold first, so the distance between epochs depends on how the
cycle-to-cycle spread compares with the fixed device-to-device spread of
resistance and threshold voltage. The sweep below makes that visible, and checks
each point against a closed-form average of 2p(1-p).
"""
from dataclasses import replace

import numpy as np
from scipy.special import ndtr

from r3puf.campaign import CampaignConfig, replay_cell, run_campaign

base = CampaignConfig(cells_per_chip=1000, readout_repetitions=2, reconfig_epochs=5)
cells = [replay_cell(base, 0, i, 0)[0] for i in range(base.cells_per_chip)]
m1 = np.array([c.m1.r_on_mean for c in cells])
m2 = np.array([c.m2.r_on_mean for c in cells])
vr1 = np.array([c.m1.v_reset for c in cells])
vr2 = np.array([c.m2.v_reset for c in cells])

for c2c in (0.0, 0.05, 0.1, 0.2, 0.4):
    config = replace(base, variation=replace(base.variation, c2c_rel_std=c2c))
    measured = run_campaign(config, write=False).report.reconfig_distance
    if c2c == 0:
        expected = 0.0
    else:
        s = np.sqrt(2 * np.log1p(c2c**2))
        p = ndtr((np.log(m1 / m2) - np.log(np.abs(vr1) / np.abs(vr2))) / s)
        expected = float(np.mean(2 * p * (1 - p)))
    print(f"c2c_rel_std={c2c:<5}  measured {measured:.3f}  expected {expected:.3f}")
