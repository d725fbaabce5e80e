"""
One cell, start to finish: form both devices, ramp the drive until one of them
RESETs, and read the response bit.

The two devices differ by 0.2% in LRS resistance. Nothing else separates them,
yet the ramp reliably resolves that difference into a full-swing output.
"""
import sys

import numpy as np

from r3puf.campaign import write_trace_csv
from r3puf.cell import CellConfig, CellState, collapse_onset, extract, readout, readout_pulse
from r3puf.device import DeviceParams, DeviceState

m1 = DeviceParams(r_on_mean=5e5, r_off_mean=5e8)
m2 = DeviceParams(r_on_mean=4.99e5, r_off_mean=5e8)
config = CellConfig(m1, m2)

# both devices start in LRS at their nominal resistance
state = CellState(DeviceState(1.0, 5e5, 5e8), DeviceState(1.0, 4.99e5, 5e8))

state, trace = extract(state, config)
print(f"drive ramp: {config.extract_profile.breakpoints}, dt={config.extract_profile.dt:g} s")
print(f"final omega: M1={state.s1.omega:.3g}  M2={state.s2.omega:.4f}")

# V_out rises with V_in until M1 starts to RESET; from there the divider
# collapses towards 0 V
onset = collapse_onset(trace)
print(f"collapse begins at V_in = {onset:.4f} V (frozen divider predicts {1.0 * (5e5 + 4.99e5) / 5e5:.4f} V)")

for v in (1.0, 1.5, 1.9, 2.0, 2.05, 2.5):
    k = int(np.argmin(np.abs(trace.v_in - v)))
    print(f"  V_in={trace.v_in[k]:.3f}  V_out={trace.v_out[k]:.4f}  omega1={trace.omega1[k]:.4f}")

bit, v_out = readout(state, config)
print(f"readout at 1 V: V_out={v_out:.2e} V -> bit {bit}")

# readout is non-destructive: holding the read voltage leaves the state alone
held = readout_pulse(state, config, duration=1e-4)
print("state unchanged after a 100 us read:", held.omegas == state.omegas)

if len(sys.argv) > 1:
    write_trace_csv(trace, sys.argv[1])
    print("trace written to", sys.argv[1])
