"""
Reliability under injected readout noise.

Without noise the model reads every cell identically forever. Adding gaussian
noise to V_out before the comparator gives a flip probability per read of
p = Phi(-|V_out - V_th| / sigma); two reads disagree with probability 2p(1-p).
The campaign's measured reliability should track that prediction.
"""
import numpy as np
from scipy.special import ndtr

from r3puf.campaign import CampaignConfig, run_campaign

reps = 100
for sigma in (0.0, 0.1, 0.2, 0.3):
    config = CampaignConfig(cells_per_chip=2000, readout_repetitions=reps, reconfig_epochs=1, noise_sigma=sigma)
    result = run_campaign(config, write=False)
    if sigma == 0:
        predicted = 1.0
    else:
        p = ndtr(-np.abs(result.v_clean - result.inverter_vth[..., None]) / sigma)
        predicted = 1.0 - np.mean((reps - 1) / reps * 2 * p * (1 - p))
    print(f"sigma={sigma:.2f} V  measured {result.report.reliability:.5f}  predicted {predicted:.5f}")
