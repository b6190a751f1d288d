# coding: utf-8

# # Restricted-isometry checks
#
# Gram entries of one exposure block are compared with Hoeffding bounds, and
# Gersgorin discs with exact restricted-isometry constants on a 64-column toy.

# In[1]:

from cake.masks import gen_rademacher
from cake.operators import CakeOperator
from cake.ripcheck import concentration_report, gersgorin_eigen_bounds, gram_matrix, rip_chain
from cake.video import make_geometry


# In[2]:

g = make_geometry(16, 16, 2, 2, 2, 2)
stats = concentration_report(g, "rademacher", 1000, 0.2, (0.5, 1.0, 1.5, 2.0), 2)
print(stats.to_text())


# Exact and disc bounds on the toy geometry (8 x 4 pixels, 1 x 2 cells, B = 2).
# For two columns with unit norms the disc bound is exact.

# In[3]:

toy = make_geometry(8, 4, 2, 1, 2, 2)
for k in range(5):
    exact, bound = rip_chain(CakeOperator(toy, gen_rademacher(toy, [0, k])), 2)
    print(f"instance {k}: exact {exact:.4f}  Gersgorin {bound:.4f}")


# Larger supports loosen the disc bound.

# In[4]:

G = gram_matrix(CakeOperator(toy, gen_rademacher(toy, [0, 1])))
for s in (2, 3):
    print(s, gersgorin_eigen_bounds(G, s).delta)
