"""Compare probing policies and stopping rules on the 3-state preset.

A reduced version of the full grid produced by ``robust-explore table1``:
ten seeds per cell instead of fifty, so it finishes in a couple of minutes.
"""

from robust_explore import bench

base = bench.ExperimentConfig(preset="dean", lam=1.0, trials=10)
cells = [
    base.replace(policy="vanilla", region="ellipsoid"),
    base.replace(policy="vanilla", region="ball"),
    base.replace(policy="vanilla", stopping="cec"),
    base.replace(policy="cec", region="ellipsoid"),
]

summaries = []
for cfg in cells:
    logs = bench.run_trials(cfg)
    s = bench.summarize(cfg, logs)
    summaries.append(s)
    print(f"{s.policy:8s} {s.region:10s} median steps {s.median_steps:6.1f}   "
          f"median log cost {s.median_logcost:5.2f}")

# The ellipsoid stopping test uses the full posterior shape, so it should
# fire no later than the isotropic ball surrogate.
print()
print(bench.format_table1(summaries))
