"""
A small Monte-Carlo campaign: four chips of 500 cells each, five programming
epochs, twenty readouts per epoch.

Every number printed here is reproducible from the master seed alone.
"""
from r3puf.campaign import CampaignConfig, acceptance_checks, run_campaign

config = CampaignConfig(chips=4, cells_per_chip=500, readout_repetitions=20, reconfig_epochs=5)
result = run_campaign(config, write=False)
r = result.report

print(f"config hash {result.config_hash[:16]}..., master seed {config.master_seed}")
print(f"uniformity        {r.uniformity:.4f}")
print(f"reliability       {r.reliability:.4f}")
print(f"uniqueness        {r.uniqueness:.4f}   (mean inter-chip Hamming distance)")
print(f"reconfig distance {r.reconfig_distance:.4f}   (consecutive epochs, same chip)")
print(f"middle-band V_out {r.histogram['middle_band_count']} of {sum(r.histogram['counts'])}")

d = result.diagnostics()
print("extraction outcomes:", d["status_counts"])
print(f"first-to-threshold prediction agrees on {d['oracle_agreement']:.4%} of extractions;"
      f" {d['contested_cells']} extractions saw both devices cross their threshold")

# the same gate the CLI's `check` subcommand applies. Its windows are sized for
# the 15,000-cell campaign; with 2,000 cells the uniformity has a binomial std of
# about 0.011, so it can land outside [0.485, 0.515] by chance. The
# reconfiguration window is not reachable at 5% cycle-to-cycle spread at any
# size (see 05_reconfiguration.py).
for c in acceptance_checks(result):
    print(f"  {'PASS' if c.passed else 'FAIL'} {c.name}: {c.value} (target {c.target})")
