# %% [markdown]
# # Filtered Z/2 complexes
#
# A small complex where one top generator is pushed down by a boundary, and
# another where two top generators share the fundamental class.

# %%
from hoferlab.complex_core import Chain, GradedComplex, classify_chain, homology_ranks
from hoferlab.filtration import FiltrationMap, is_essential_filtered, minimality_verdict, spectral_value

# %%
# a has boundary P + z, so P and z are homologous
cx = GradedComplex.build([("a", 3), ("P", 2), ("z", 2)], {"a": ["P", "z"]})
print(homology_ranks(cx))
print(classify_chain(cx, Chain.of(cx, ["P", "z"])).kind)

# %%
# with z below P, the class of P has a cheaper representative
low = FiltrationMap({"a": 3.0, "P": 1.0, "z": 0.5})
cls = Chain.of(cx, ["P"])
print("spectral value:", spectral_value(cx, low, cls))
rep = is_essential_filtered(cx, low, "P", cls)
print(rep.condition1, rep.condition2, rep.counterexample)

# %%
# lift z above P and P becomes the minimizer
high = FiltrationMap({"a": 3.0, "P": 1.0, "z": 2.0})
print("spectral value:", spectral_value(cx, high, cls))
print(minimality_verdict(cx, high, "P", cls).certified)

# %%
two = GradedComplex.build([("P", 2), ("w", 2)])
v = minimality_verdict(two, FiltrationMap({"P": 1.0, "w": 0.25}), "P", Chain.of(two, ["P", "w"]))
print(v.certified, v.spectral_value)
