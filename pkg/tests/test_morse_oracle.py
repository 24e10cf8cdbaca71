import json
from importlib import resources

import numpy as np
import pytest

from hoferlab.complex_core import Chain, ChainError, GradedComplex, homology_ranks
from hoferlab.dynamics.hamiltonians import cos_sum, load_hamiltonian, planar_rotation
from hoferlab.filtration import spectral_value, validate_filtration
from hoferlab.morse_oracle import (
    MorseError,
    SampledFunction,
    build_morse_complex,
    fundamental_cycle,
)

FUNCS = resources.files("hoferlab") / "data" / "functions"


def sampled(name, N=64):
    return SampledFunction.from_hamiltonian(load_hamiltonian(FUNCS / f"{name}.json"), N)


def by_dim(mc):
    return sorted(((info["dim"], info["value"]) for info in mc.cells.values()), reverse=True)


def test_cos_cos_critical_cells():
    mc = build_morse_complex(sampled("cos-cos"))
    got = by_dim(mc)
    # max 2 at the origin, two saddles at level 0, min -2 at (1/2, 1/2)
    assert [d for d, _ in got] == [2, 1, 1, 0]
    assert [v for _, v in got] == pytest.approx([2.0, 0.0, 0.0, -2.0], abs=1e-12)
    assert homology_ranks(mc.complex) == {0: 1, 1: 2, 2: 1}
    z = fundamental_cycle(mc.complex)
    assert spectral_value(mc.complex, mc.filtration, z) == pytest.approx(2.0)


def test_unequal_amplitudes_split_saddles():
    mc = build_morse_complex(sampled("cos-half-cos"))
    assert [v for _, v in by_dim(mc)] == pytest.approx([1.5, 0.5, -0.5, -1.5], abs=1e-12)


def test_constant_function_rejected():
    with pytest.raises(MorseError, match="plateau"):
        build_morse_complex(SampledFunction(np.zeros((16, 16))))


def test_small_or_bad_grids_rejected():
    with pytest.raises(MorseError):
        SampledFunction(np.zeros((4, 4)))
    with pytest.raises(MorseError):
        SampledFunction(np.zeros((8, 9)))
    with pytest.raises(MorseError):
        SampledFunction.from_hamiltonian(planar_rotation(1.0), 16)


def test_two_peaks_fundamental_class():
    mc = build_morse_complex(sampled("two-peaks"))
    tops = sorted(b for b, d in mc.complex.basis if d == 2)
    assert len(tops) == 2
    z = fundamental_cycle(mc.complex)
    assert sorted(z.support) == tops
    grid_max = float(sampled("two-peaks").values.max())
    spec = spectral_value(mc.complex, mc.filtration, z)
    assert spec <= grid_max + 1e-12
    assert spec == pytest.approx(grid_max)


def test_corrupt_complex_fundamental_sum_not_cycle():
    # two top cells whose boundaries do not cancel
    cx = GradedComplex.build([("s1", 2), ("s2", 2), ("e", 1), ("f", 1), ("v", 0)],
                             {"s1": ["e"], "s2": ["f"]})
    with pytest.raises(ChainError, match="not a cycle"):
        fundamental_cycle(cx)


@pytest.mark.parametrize("name", ["cos-cos", "cos-half-cos", "two-peaks"])
def test_morse_invariants(name):
    mc = build_morse_complex(sampled(name))
    assert validate_filtration(mc.complex, mc.filtration) == []
    ranks = homology_ranks(mc.complex)
    assert ranks == {0: 1, 1: 2, 2: 1}
    counts = {k: sum(1 for _, d in mc.complex.basis if d == k) for k in (0, 1, 2)}
    for k in (0, 1, 2):
        assert counts[k] >= ranks[k]
    assert counts[0] - counts[1] + counts[2] == 0  # Euler characteristic of the torus


def test_generators_sorted_by_id_and_deterministic():
    a = build_morse_complex(sampled("two-peaks", 32)).to_dict()
    b = build_morse_complex(sampled("two-peaks", 32)).to_dict()
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    ids = [g["id"] if isinstance(g, dict) else g[0] for g in a["complex"]["basis"]]
    assert ids == sorted(ids)


def test_random_perturbation_keeps_torus_homology():
    rng = np.random.default_rng(5)
    base = sampled("cos-cos", 32).values
    noisy = base + 1e-3 * rng.standard_normal(base.shape)
    mc = build_morse_complex(SampledFunction(noisy))
    assert homology_ranks(mc.complex) == {0: 1, 1: 2, 2: 1}
    spec = spectral_value(mc.complex, mc.filtration, fundamental_cycle(mc.complex))
    assert spec <= noisy.max() + 1e-12


def test_from_file_variants(tmp_path):
    vals = sampled("cos-cos", 16).values
    npy = tmp_path / "grid.npy"
    np.save(npy, vals)
    js = tmp_path / "grid.json"
    js.write_text(json.dumps({"values": vals.tolist()}))
    for p in (npy, js):
        f = SampledFunction.from_file(p)
        assert np.array_equal(f.values, vals)
    f = SampledFunction.from_file(FUNCS / "cos-cos.json", resolution=16)
    assert np.allclose(f.values, vals)
    assert SampledFunction.from_hamiltonian(cos_sum(1.0), 16).values == pytest.approx(vals)
