# coding: utf-8

# # Reconstruction
#
# TV plus l1 reconstruction with FISTA for Rademacher and dual-scale masks,
# the flow-constrained reconstruction seeded by the coarse preview, and the
# spline-upsampled conventional baseline, all with the default configuration
# (64 x 64 x 32, one seed, under a minute on one core).

# In[1]:

from cake.config import parse_config
from cake.pipeline import format_metrics_table, run_seed

cfg = parse_config()


# In[2]:

res = run_seed(cfg, 0)
print(format_metrics_table(res.rmse, cfg))
for label, report in res.reports.items():
    if report is not None:
        print(f"{label:9s} {report.iterations:5d} iterations, status {report.status}")


# The TV plus l1 objective trace never increases.

# In[3]:

import numpy as np

trace = np.asarray(res.reports["CAKE"].objective)
print("first, last objective", trace[0], trace[-1], "monotone", bool(np.all(np.diff(trace) <= 0)))
