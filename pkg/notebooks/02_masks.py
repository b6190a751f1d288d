# coding: utf-8

# # Mask families
#
# Rademacher masks, flat-spectrum phase-shift masks and dual-scale masks that
# mix a block-constant low-resolution kernel with a zero-mean high-resolution
# pattern.

# In[1]:

import numpy as np

from cake.masks import gen_dsm, gen_phase_shift_sequence, gen_rademacher, to_physical
from cake.operators import integrate_downsample
from cake.video import make_geometry

g = make_geometry(16, 16, 8, 2, 2, 4)


# All families share the normalisation ``||h_t||^2 = n / m``.

# In[2]:

for seq in (gen_rademacher(g, 0), gen_phase_shift_sequence(g, 0), gen_dsm(g, 0.383, 0.924, 0)):
    print(f"{seq.family:12s}", np.round((seq.masks ** 2).sum(axis=(1, 2)), 12)[:4], "target", g.n / g.m)


# Phase-shift masks have a flat magnitude spectrum.

# In[3]:

ps = gen_phase_shift_sequence(g, 1)
spec = np.abs(np.fft.fft2(ps.masks[0], norm="ortho")) * np.sqrt(g.m)
print("spectrum magnitude range", spec.min(), spec.max())


# Dual-scale masks: the high-resolution part sums to zero on every detector
# cell and is orthogonal to the low-resolution part of its exposure block.

# In[4]:

dsm = gen_dsm(g, 0.383, 0.924, 2)
print("max cell sum of high-res part", np.abs(integrate_downsample(dsm.highres, 2, 2)).max())
print("inner products", [round(float(np.vdot(dsm.highres[t], dsm.lowres[t // g.B])), 15)
                         for t in range(g.N)])


# Binary masks map affinely onto a physical [0, 1/n] transmission range.

# In[5]:

phys, remap = to_physical(gen_rademacher(g, 3).masks[0], g)
print("physical range", phys.min(), phys.max(), "open fraction", (phys > 0).mean())
