# %% [markdown]
# # Morse complexes of sampled torus functions
#
# The discrete gradient of a sampled function gives a small filtered complex
# whose fundamental class has spectral value equal to the grid maximum.

# %%
import numpy as np

from hoferlab.dynamics.hamiltonians import cos_sum
from hoferlab.filtration import spectral_value
from hoferlab.complex_core import homology_ranks
from hoferlab.morse_oracle import SampledFunction, build_morse_complex, fundamental_cycle

# %%
f = SampledFunction.from_hamiltonian(cos_sum(1.0), resolution=64)
mc = build_morse_complex(f)
for cid, info in mc.cells.items():
    print(cid, info["dim"], round(info["value"], 12))

# %%
print(homology_ranks(mc.complex))
z = fundamental_cycle(mc.complex)
print(sorted(z.support), spectral_value(mc.complex, mc.filtration, z), f.values.max())

# %%
# small noise moves the critical values but keeps the homology and the bound
rng = np.random.default_rng(1)
noisy = SampledFunction(f.values + 1e-3 * rng.standard_normal(f.values.shape))
mcn = build_morse_complex(noisy)
print(len(mcn.complex.basis), "generators", homology_ranks(mcn.complex))
print(spectral_value(mcn.complex, mcn.filtration, fundamental_cycle(mcn.complex)),
      noisy.values.max())
