import json
import math

import numpy as np
import pytest

from hoferlab.certificates import (
    CERTIFIED,
    INCONCLUSIVE,
    REFUTED,
    certify_negative_side,
    certify_short_time,
    certify_theorem_1_5,
    certify_theorem_1_6,
    dominates_check,
    find_extrema,
    hofer_norms,
    quasi_autonomous_check,
)
from hoferlab.dynamics.constructions import bump_perturb, dominated_cap, reparameterize, reverse
from hoferlab.dynamics.hamiltonians import (
    ConfigError,
    TimeProfile,
    cos_sum,
    hamiltonian_from_dict,
    planar_rotation,
    zero_hamiltonian,
)

P, Q = np.zeros(2), np.array([0.5, 0.5])
FAST = {"resolution": 16, "check_resolution": 16}


def moving_wave(eps=0.05, second=0.03):
    return hamiltonian_from_dict({
        "domain": {"type": "torus", "n": 1},
        "terms": [
            {"type": "cos", "amplitude": eps, "k": [1, 0],
             "profile": {"type": "fourier", "a0": 0, "cos": [1.0]}},
            {"type": "sin", "amplitude": eps, "k": [1, 0],
             "profile": {"type": "fourier", "a0": 0, "sin": [1.0]}},
            {"type": "cos", "amplitude": second, "k": [0, 1]},
        ]})


# -- Hofer norms -----------------------------------------------------------------------------------

def test_hofer_examples():
    r = hofer_norms(cos_sum(0.05), resolution=32, nodes=6)
    assert r.positive == pytest.approx(0.1, abs=1e-12)
    assert r.negative == pytest.approx(0.1, abs=1e-12)
    assert r.length == pytest.approx(0.2, abs=1e-12)
    z = hofer_norms(zero_hamiltonian(), resolution=16, nodes=4)
    assert z.positive == 0 and z.negative == 0 and z.normalized
    with pytest.raises(ConfigError):
        hofer_norms(planar_rotation(1.0))


def test_hofer_moving_wave_and_reparameterization():
    H = moving_wave()
    a = hofer_norms(H, resolution=16, nodes=6)
    # max over space is 0.05 + 0.03 at every time
    assert a.positive == pytest.approx(0.08, abs=1e-9)
    assert a.negative == pytest.approx(0.08, abs=1e-9)
    b = hofer_norms(reparameterize(H), resolution=16, nodes=6)
    assert abs(a.positive - b.positive) < 1e-6 and abs(a.negative - b.negative) < 1e-6


# -- hypothesis checks ----------------------------------------------------------------------------

def test_quasi_autonomous_examples():
    assert quasi_autonomous_check(cos_sum(0.05), P, Q, resolution=16).holds
    flip = cos_sum(0.05, profile=TimeProfile("fourier", {"a0": 0, "cos": [1.0]}))
    res = quasi_autonomous_check(flip, P, Q, resolution=16)
    assert not res.holds and res.details["witness"] is not None
    # P is no longer the maximum when c(t) < 0
    t = res.details["witness"]["t"]
    assert math.cos(2 * math.pi * t) < 0


def test_dominates_examples():
    H = cos_sum(0.05)
    assert dominates_check(H, H, P, resolution=16).holds
    assert dominates_check(H, dominated_cap(H, P), P, resolution=16).holds
    bumped = bump_perturb(H, Q, rho=0.1, amplitude=1e-3)  # bump away from P
    res = dominates_check(H, bumped, P, resolution=16)
    assert not res.holds
    w = res.details["witness"]
    assert w is not None and w["difference"] < 0
    d = np.asarray(w["x"]) - Q
    assert np.abs(d - np.round(d)).max() < 0.1


def test_find_extrema():
    fP, fQ = find_extrema(cos_sum(0.05))
    assert np.allclose(fP, P) and np.allclose(fQ % 1.0, Q)


# -- theorem certificates -------------------------------------------------------------------------

def test_thm15_examples():
    c = certify_theorem_1_5(cos_sum(0.05), P, Q, **FAST)
    assert c.verdict == CERTIFIED
    assert all(i["passed"] for i in c.checklist)
    # the same pair passes the one-sided criterion with K = H
    assert certify_theorem_1_6(cos_sum(0.05), cos_sum(0.05), P, **FAST).verdict == CERTIFIED
    over = certify_theorem_1_5(cos_sum(1 / (2 * math.pi)), P, Q, **FAST)
    assert over.verdict == REFUTED
    failed = {i["id"] for i in over.checklist if i["passed"] is False}
    assert failed & {"generic_twist_P", "generic_twist_Q"}
    z = certify_theorem_1_5(zero_hamiltonian(), P, Q, **FAST)
    assert z.verdict == INCONCLUSIVE


def test_thm16_examples():
    H = cos_sum(0.05)
    K = dominated_cap(H, P)
    c = certify_theorem_1_6(H, K, P, **FAST)
    assert c.verdict == CERTIFIED
    bumped = bump_perturb(H, Q, rho=0.1, amplitude=1e-3)
    bad = certify_theorem_1_6(H, bumped, P, **FAST)
    assert bad.verdict == REFUTED
    assert {i["id"]: i["passed"] for i in bad.checklist}["dominates"] is False


def test_negative_side_rejects_moving_Q():
    c = certify_negative_side(moving_wave(), Q=np.array([0.3, 0.2]), **FAST)
    assert c.verdict == REFUTED and c.checklist[0]["id"] == "Q_fixed"


def test_negative_side_identity():
    H = cos_sum(0.05)
    c = certify_negative_side(H, Q, hofer_resolution=16, hofer_nodes=4, **FAST)
    ident = c.evidence["hofer_identity"]
    assert ident["difference"] <= 1e-6
    assert c.verdict == CERTIFIED
    assert reverse(H).value(0.2, np.array([0.1, 0.3])) == pytest.approx(
        -H.value(0.2, np.array([0.1, 0.3])), abs=1e-9)


def test_short_time_certificate():
    H = cos_sum(1.0)  # too strong at eps = 1 but fine once rescaled
    c = certify_short_time(H, P, eps_start=0.05, eps_min=1e-3, **FAST)
    assert c.verdict == CERTIFIED
    assert c.parameters["eps"] >= 1e-3
    assert c.evidence["short_time_search"][-1]["verdict"] == CERTIFIED


def test_certificate_serialization_is_deterministic():
    a = certify_theorem_1_5(cos_sum(0.05), P, Q, **FAST).to_dict()
    b = certify_theorem_1_5(cos_sum(0.05), P, Q, **FAST).to_dict()
    sa = json.dumps(a, sort_keys=True, allow_nan=False)
    assert sa == json.dumps(b, sort_keys=True, allow_nan=False)
    assert "Numerical support" in a["caveat"]
