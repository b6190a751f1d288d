# coding: utf-8

# # The keyed-exposure sensing operator
#
# Each measurement frame sums `B` high-rate frames, each convolved with its own
# mask and subsampled to the detector grid. This script builds the operator on
# a small scene, checks its adjoint and compares it with an explicit matrix.

# In[1]:

import numpy as np

from cake.masks import gen_family
from cake.operators import CakeOperator, bccb_convolve
from cake.video import default_scene_spec, make_geometry, synth_scene


# A 32 x 32 scene with 8 frames, 2 x 2 detector cells and 4 frames per exposure.

# In[2]:

g = make_geometry(32, 32, 8, 2, 2, 4)
scene = synth_scene(default_scene_spec(g, 0), g).frames
print(g.scene_shape, "->", g.measurement_shape, "compression", g.compression_ratio)


# The forward model for three mask families.

# In[3]:

rng = np.random.default_rng(0)
for family in ("rademacher", "phase_shift", "dsm"):
    op = CakeOperator(g, gen_family(g, family, 0))
    y = op.forward(scene)
    f = rng.standard_normal(g.scene_shape)
    r = rng.standard_normal(g.measurement_shape)
    gap = abs(np.vdot(op.forward(f), r) - np.vdot(f, op.adjoint(r)))
    print(f"{family:12s} |y| = {np.linalg.norm(y):8.4f}   adjoint gap = {gap:.1e}")


# FFT convolution against a direct circular sum on one 8 x 8 frame.

# In[4]:

frame, kernel = rng.standard_normal((2, 8, 8))
direct = np.zeros((8, 8))
for i1 in range(8):
    for i2 in range(8):
        direct[i1, i2] = sum(frame[j1, j2] * kernel[(i1 - j1) % 8, (i2 - j2) % 8]
                             for j1 in range(8) for j2 in range(8))
print("max difference", np.abs(bccb_convolve(frame, kernel) - direct).max())


# The dense matrix of a tiny operator has one block row per exposure.

# In[5]:

tiny = make_geometry(4, 4, 4, 2, 2, 2)
A = CakeOperator(tiny, gen_family(tiny, "rademacher", 1)).dense()
print(A.shape, "nonzero blocks:", [[int(A[k * 4:(k + 1) * 4, t * 16:(t + 1) * 16].any())
                                   for t in range(4)] for k in range(2)])
