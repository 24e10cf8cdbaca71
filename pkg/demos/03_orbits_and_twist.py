# %% [markdown]
# # Periodic orbits, actions and Conley-Zehnder indices
#
# A C^2-small Morse function has only its critical points as 1-periodic
# orbits, and their indices match the Morse indices.

# %%
import math

import numpy as np

from hoferlab.dynamics.hamiltonians import cos_sum, planar_rotation
from hoferlab.orbits import scan_fixed_points, under_twisted_status

# %%
scan = scan_fixed_points(cos_sum(0.05), resolution=16)
for o in scan.orbits:
    print(np.round(o.start, 6), round(o.action, 9), o.cz_index, o.nondegenerate)

# %%
# rotation speeds around 2 pi: the linearized flow first closes up at T = 2 pi / a
for a in (math.pi, 2 * math.pi - 1e-3, 2 * math.pi, 3 * math.pi):
    st = under_twisted_status(planar_rotation(a), np.zeros(2))
    print(f"a = {a:.4f}: under-twisted {st.under_twisted}, margin {st.margin:.2e}, "
          f"kernel times {st.nonconstant_kernel_times}")

# %%
# at amplitude 1/(2 pi) the orbits are unchanged but the maximum is no longer
# generically under-twisted: the linearized flow closes up at T = 1
H = cos_sum(1 / (2 * math.pi))
print(len(scan_fixed_points(H, resolution=16).orbits))
st = under_twisted_status(H, np.zeros(2))
print(st.under_twisted, st.generically, st.nonconstant_kernel_times)
