# coding: utf-8

# # Stage-by-stage command-line run
#
# The `cake` command runs each stage separately, passing data only through
# files. This script drives the same entry point in-process on a small config.

# In[1]:

import json
import tempfile
from pathlib import Path

from cake.cli import run

work = Path(tempfile.mkdtemp())
cfg = work / "small.ini"
cfg.write_text("[geometry]\nn1 = 32\nn2 = 32\nframes = 16\n"
               "[tvl1]\nmax_iters = 1000\n[of]\nmax_iters = 500\n")


# In[2]:

for cmd in (["synth"], ["masks"], ["acquire"], ["coarse"], ["flow"],
            ["recon", "--method", "tvl1"], ["recon", "--method", "of"],
            ["recon", "--method", "spline"], ["metrics"]):
    code = run(cmd + ["--config", str(cfg), "--out", str(work / "run")])
    print(" ".join(cmd), "->", code)


# In[3]:

print((work / "run" / "metrics.txt").read_text())
manifest = json.loads((work / "run" / "manifest.json").read_text())
print(sorted(manifest["stages"]))
