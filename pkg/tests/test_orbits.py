import math

import numpy as np
import pytest
from scipy.linalg import expm

import oracles
from hoferlab.dynamics.hamiltonians import (
    TimeProfile,
    cos_sum,
    hamiltonian_from_dict,
    planar_rotation,
    symplectic_J,
    zero_hamiltonian,
)
from hoferlab.dynamics.integrate import evolve_path
from hoferlab.orbits import (
    DEGENERATE,
    OrbitError,
    action,
    complete_orbit,
    cz_index,
    linearized_path,
    loop_action,
    nondegenerate,
    scan_fixed_points,
    under_twisted_status,
)

PI = math.pi


def linear_path(S, samples=400):
    A = symplectic_J(len(S)) @ np.asarray(S, float)
    return np.array([expm(t * A) for t in np.linspace(0, 1, samples + 1)])


# -- Conley-Zehnder ---------------------------------------------------------------------------

def test_cz_anchors():
    eps = 0.05
    H = cos_sum(eps)
    for x, morse in (([0.0, 0.0], 2), ([0.5, 0.0], 1), ([0.0, 0.5], 1), ([0.5, 0.5], 0)):
        path = linearized_path(H, np.array(x), np.linspace(0, 1, 101))
        assert cz_index(path) == morse


@pytest.mark.parametrize("S", [
    np.diag([3 * PI, 3 * PI]),
    np.diag([-3 * PI, -3 * PI]),
    np.diag([5 * PI, 5 * PI]),
    np.diag([2.5 * PI, 2.5 * PI]),
    np.diag([0.7, -0.4]),
    7.0 * np.array([[2.0, 0.3], [0.3, 1.0]]),
    np.diag([3 * PI, 0.5, 3 * PI, 0.5]),
    np.diag([-5 * PI, PI, -5 * PI, PI]),
])
def test_cz_matches_crossing_form_oracle(S):
    assert cz_index(linear_path(S)) == oracles.crossing_form_cz(S)


def test_cz_degenerate_and_bad_start():
    assert cz_index(linear_path(np.diag([2 * PI, 2 * PI]))) == DEGENERATE
    with pytest.raises(OrbitError):
        cz_index(linear_path(np.eye(2))[1:])


# -- under-twisted status -------------------------------------------------------------------

def test_under_twisted_examples():
    o = np.zeros(2)
    st = under_twisted_status(planar_rotation(PI), o)
    assert st.under_twisted and st.generically and st.margin > 0
    st = under_twisted_status(planar_rotation(2 * PI), o)
    assert not st.generically and not st.under_twisted
    st = under_twisted_status(planar_rotation(3 * PI), o)
    assert not st.under_twisted and not st.generically
    assert any(abs(T - 2 / 3) < 1e-6 for T in st.nonconstant_kernel_times)


def test_under_twisted_rejects_moving_point():
    with pytest.raises(OrbitError):
        under_twisted_status(planar_rotation(PI), np.array([0.2, 0.0]))


def test_small_morse_function_is_under_twisted():
    H = cos_sum(0.05)
    for x in ([0.0, 0.0], [0.5, 0.5]):
        st = under_twisted_status(H, np.array(x), samples=50)
        assert st.under_twisted and st.generically


# -- actions ---------------------------------------------------------------------------------

def test_constant_orbit_actions():
    eps = 0.05
    H = cos_sum(eps)
    assert action(H, complete_orbit(H, np.zeros(2))) == pytest.approx(2 * eps, abs=1e-12)
    assert action(H, complete_orbit(H, np.array([0.5, 0.5]))) == pytest.approx(-2 * eps, abs=1e-12)
    Ht = cos_sum(eps, profile=TimeProfile("fourier", {"a0": 1, "sin": [0.5]}))
    # time-average of the profile is a0 = 1
    assert action(Ht, complete_orbit(Ht, np.zeros(2))) == pytest.approx(2 * eps, abs=1e-9)


@pytest.mark.parametrize("k", [1, 2])
def test_circle_orbit_action_closed_form(k):
    a, R, c = 2 * PI * k, 0.3, 0.25
    H = hamiltonian_from_dict({"domain": {"type": "chart", "n": 1}, "terms": [
        {"type": "quadratic", "amplitude": a, "matrix": [[1, 0], [0, 1]]},
        {"type": "constant", "value": c}]})
    orb = complete_orbit(H, np.array([R, 0.0]), samples=200)
    assert not orb.constant and orb.contractible
    # int H dt = a R^2 / 2 + c; the loop winds k times around a disk of area pi R^2
    expected = a * R ** 2 / 2 + c - k * PI * R ** 2
    assert orb.action == pytest.approx(expected, abs=1e-9)


def test_action_invariant_under_cyclic_resampling():
    H = planar_rotation(2 * PI)
    x0 = np.array([0.3, 0.1])
    t, traj, _ = evolve_path(H, x0, 200)
    shifted = np.roll(traj[:-1], 37, axis=0)
    shifted = np.vstack([shifted, shifted[:1]])
    assert loop_action(H, t, shifted) == pytest.approx(loop_action(H, t, traj), abs=1e-8)


def test_noncontractible_loop_rejected():
    # H = sin(2 pi p) / (2 pi): on p = 0 the flow is q' = 1, one full turn in q
    wind = hamiltonian_from_dict({"domain": {"type": "torus", "n": 1}, "terms": [
        {"type": "sin", "amplitude": 1 / (2 * PI), "k": [0, 1]}]})
    orb = complete_orbit(wind, np.zeros(2))
    assert orb.lift_displacement == (1, 0) and not orb.contractible and orb.action is None
    with pytest.raises(OrbitError):
        action(wind, orb)


# -- nondegeneracy and scans ---------------------------------------------------------------------

def test_nondegeneracy_examples():
    o = complete_orbit(zero_hamiltonian(), np.array([0.2, 0.3]))
    assert not nondegenerate(zero_hamiltonian(), o)[0] and o.cz_index == DEGENERATE
    rot = planar_rotation(2 * PI)
    assert not nondegenerate(rot, complete_orbit(rot, np.zeros(2)))[0]


def test_scan_cos_sum():
    eps = 0.05
    res = scan_fixed_points(cos_sum(eps), resolution=16)
    assert not res.non_isolated and len(res.orbits) == 4
    starts = sorted(tuple(np.round((o.start + 0.25) % 1.0 - 0.25, 8) + 0.0) for o in res.orbits)
    assert starts == [(0.0, 0.0), (0.0, 0.5), (0.5, 0.0), (0.5, 0.5)]
    assert [o.cz_index for o in res.orbits] == [2, 1, 1, 0]
    assert all(o.constant and o.nondegenerate and o.contractible for o in res.orbits)
    assert res.metadata["seeds"] == 256


def test_scan_zero_is_non_isolated():
    res = scan_fixed_points(zero_hamiltonian(), resolution=8)
    assert res.non_isolated and res.orbits == [] and res.status


def test_scan_rotation_chart():
    res = scan_fixed_points(planar_rotation(PI), resolution=8)
    assert len(res.orbits) == 1
    assert np.abs(res.orbits[0].start).max() < 1e-10
    assert res.orbits[0].cz_index == 0


def test_scan_stable_across_resolutions():
    H = cos_sum(0.05, profile=TimeProfile("fourier", {"a0": 1, "sin": [0.5]}))
    a = scan_fixed_points(H, resolution=8)
    b = scan_fixed_points(H, resolution=16)

    def key(r):
        return sorted(tuple(np.round((o.start + 0.25) % 1.0 - 0.25, 7) + 0.0) for o in r.orbits)

    assert key(a) == key(b)
    assert sorted(o.action for o in a.orbits) == pytest.approx(
        sorted(o.action for o in b.orbits), abs=1e-10)


def test_scan_report_is_json_ready():
    import json
    res = scan_fixed_points(cos_sum(0.05), resolution=8)
    d = json.loads(json.dumps(res.to_dict(include_samples=False)))
    assert len(d["orbits"]) == 4 and "samples" not in d["orbits"][0]
