# %% [markdown]
# # Hofer norms and length-minimizing certificates
#
# Certificates bundle every hypothesis check with its evidence and a verdict.

# %%
import numpy as np

from hoferlab.certificates import (
    certify_theorem_1_5,
    certify_theorem_1_6,
    hofer_norms,
)
from hoferlab.dynamics.constructions import dominated_cap
from hoferlab.dynamics.hamiltonians import cos_sum, zero_hamiltonian

# %%
H = cos_sum(0.05)
r = hofer_norms(H, resolution=32, nodes=6)
print(r.positive, r.negative, r.length)

# %%
P, Q = np.zeros(2), np.array([0.5, 0.5])
cert = certify_theorem_1_5(H, P, Q, resolution=16, check_resolution=16)
print(cert.summary())

# %%
K = dominated_cap(H, P)
print(certify_theorem_1_6(H, K, P, resolution=16, check_resolution=16).verdict)

# %%
# the zero path has a continuum of fixed points, so nothing can be concluded
print(certify_theorem_1_5(zero_hamiltonian(), P, Q, resolution=8, check_resolution=8).verdict)
