"""Hofer norms, hypothesis checks and length-minimality certificates.

A certificate records each hypothesis of a minimality criterion as a checklist
item pointing at the evidence that decided it.  Verdicts are numerical
support, never proof: orbit nonexistence is only as good as the seeded scan.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics.constructions import (
    DominationError,
    dominated_cap,
    reverse,
    rescale,
    sample_grid,
    time_samples,
)
from .dynamics.hamiltonians import ConfigError, Hamiltonian
from .dynamics.integrate import DEFAULT_ORDER, DEFAULT_STEPS, evolve
from .orbits import (
    DEGENERATE,
    OrbitError,
    loop_action,
    scan_fixed_points,
    thread_count,
    under_twisted_status,
)

CERTIFIED = "certified"
REFUTED = "refuted-hypothesis"
INCONCLUSIVE = "inconclusive"


# -- Hofer norms -------------------------------------------------------------------------------

def _wrap(system, x):
    return x - np.floor(x) if system.domain == "torus" else x


def refine_extrema(system, t, X0, sign, maxiter: int = 30, gtol: float = 1e-11):
    """Batched damped Newton ascent (sign=+1) or descent (sign=-1) of H(t, .)
    from the rows of X0; falls back to gradient steps where the Hessian has
    the wrong definiteness.  Returns (values, points)."""
    X = np.array(X0, float)
    v, g = system.value_and_gradient(t, X)
    v, g = np.array(v, float), np.array(g, float)
    active = np.arange(len(X))
    for _ in range(maxiter):
        active = active[np.abs(g[active]).max(axis=1) > gtol]
        if not active.size:
            break
        S = -sign * system.hessian(t, X[active])
        ga = -sign * g[active]
        step = np.empty_like(ga)
        for k in range(len(active)):
            w = np.linalg.eigvalsh(S[k])
            if w.min() > 1e-12 * max(1.0, abs(w).max()):
                step[k] = -np.linalg.solve(S[k], ga[k])
            else:
                step[k] = -ga[k] / max(abs(w).max(), 1e-12)
        lam = np.minimum(1.0, 0.05 / np.maximum(np.abs(step).max(axis=1), 1e-300))
        improved = np.zeros(len(active), bool)
        for _ in range(30):
            todo = np.flatnonzero(~improved)
            if not todo.size:
                break
            idx = active[todo]
            cand = X[idx] + lam[todo, None] * step[todo]
            cv, cg = system.value_and_gradient(t, cand)
            cv = np.asarray(cv, float)
            ok = sign * (cv - v[idx]) >= -1e-15
            X[idx[ok]], v[idx[ok]], g[idx[ok]] = cand[ok], cv[ok], cg[ok]
            improved[todo[ok]] = True
            lam[todo[~ok]] *= 0.5
        active = active[improved]
    return v, X


def spatial_extrema(system: Hamiltonian, t: float, grid: np.ndarray, candidates: int = 4):
    """(max, argmax, min, argmin, grid mean) of H(t, .) from a grid scan refined
    by Newton iteration from the best ``candidates`` grid points."""
    vals = system.value(t, grid)
    out = []
    for sign in (1, -1):
        order = np.argsort(-sign * vals, kind="stable")[:candidates]
        rv, rx = refine_extrema(system, t, grid[order], sign)
        k = int(np.argmax(sign * rv))
        best_v, best_x = float(rv[k]), rx[k]
        out += [best_v, _wrap(system, np.asarray(best_x))]
    return (*out, float(vals.mean()))


@dataclass
class HoferReport:
    positive: float
    negative: float
    length: float
    error_estimate: float
    normalized: bool
    spatial_mean_max: float
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"positive": self.positive, "negative": self.negative, "length": self.length,
                "error_estimate": self.error_estimate, "normalized": self.normalized,
                "spatial_mean_max": self.spatial_mean_max, "metadata": self.metadata}


def _gauss(nodes):
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


def hofer_norms(system: Hamiltonian, resolution: int = 64, nodes: int = 12) -> HoferReport:
    """||H||^+ = int max H dt and ||H||^- = int (-min H) dt on the torus.

    Spatial extrema come from a grid scan plus damped Newton refinement; time integrals
    use ``nodes``-point Gauss-Legendre, with the difference to the
    ``nodes//2``-point rule as the quadrature error estimate.
    """
    if system.domain != "torus":
        raise ConfigError("Hofer norms need a compact domain (torus)")
    grid = sample_grid(system, np.zeros(system.dim), resolution)

    def integrate(k):
        ts, ws = _gauss(k)
        mx, mn, means = [], [], []
        for t in ts:
            a, _, b, _, mean = spatial_extrema(system, float(t), grid)
            mx.append(a)
            mn.append(b)
            means.append(mean)
        return float(ws @ mx), float(-(ws @ mn)), max(abs(m) for m in means), ts, mx, mn

    pos, neg, mean_max, ts, mx, mn = integrate(nodes)
    pos2, neg2, _, _, _, _ = integrate(max(2, nodes // 2))
    err = abs(pos - pos2) + abs(neg - neg2)
    normalized = bool(getattr(system, "normalized", False)) or mean_max < 1e-9
    meta = {"resolution": resolution, "nodes": nodes, "times": [float(t) for t in ts],
            "max_values": mx, "min_values": mn}
    return HoferReport(pos, neg, pos + neg, err, normalized, mean_max, meta)


# -- hypothesis checks -----------------------------------------------------------------------------

@dataclass
class CheckResult:
    holds: bool
    details: dict

    def to_dict(self):
        return {"holds": self.holds, **self.details}


def extremum_check(system: Hamiltonian, X, kind: str = "max", resolution: int = 32,
                   times: int = 21, tol: float = 1e-12, radius: float = 0.5) -> CheckResult:
    """Is X a fixed global maximum (or minimum) of H(t, .) on a space-time grid?"""
    X = np.asarray(X, float)
    sign = 1.0 if kind == "max" else -1.0
    grid = sample_grid(system, X, resolution, radius, include_center=False)
    slack, witness = math.inf, None
    for t in time_samples(times):
        d = sign * (float(system.value(t, X)) - system.value(t, grid))
        i = int(np.argmin(d))
        slack = min(slack, float(d[i]))
        if witness is None and d[i] < -tol:
            witness = {"t": float(t), "x": grid[i].tolist(), "excess": float(-d[i])}
    return CheckResult(witness is None, {"point": X.tolist(), "kind": kind, "min_slack": slack,
                                         "witness": witness, "resolution": resolution,
                                         "times": times})


def quasi_autonomous_check(system: Hamiltonian, P, Q, resolution: int = 32, times: int = 21,
                           tol: float = 1e-12, radius: float = 0.5) -> CheckResult:
    """H(t,P) >= H(t,x) >= H(t,Q) on a space-time grid; reports the smallest
    slack off P and Q and a violating sample."""
    cP = extremum_check(system, P, "max", resolution, times, tol, radius)
    cQ = extremum_check(system, Q, "min", resolution, times, tol, radius)
    witness = None
    if not cP.holds:
        witness = {**cP.details["witness"], "which": "P"}
    elif not cQ.holds:
        witness = {**cQ.details["witness"], "which": "Q"}
    return CheckResult(cP.holds and cQ.holds, {
        "P": list(cP.details["point"]), "Q": list(cQ.details["point"]),
        "min_slack_P": cP.details["min_slack"], "min_slack_Q": cQ.details["min_slack"],
        "witness": witness, "resolution": resolution, "times": times})


def dominates_check(H: Hamiltonian, K: Hamiltonian, P, resolution: int = 32, times: int = 21,
                    tol: float = 1e-9, radius: float = 0.5) -> CheckResult:
    """H >= K on a space-time grid with |H - K| < tol along {P} x [0,1]."""
    P = np.asarray(P, float)
    grid = sample_grid(H, P, resolution, radius, include_center=False)
    worst, witness, eq_gap = math.inf, None, 0.0
    for t in time_samples(times):
        D = H.value(t, grid) - K.value(t, grid)
        i = int(np.argmin(D))
        if D[i] < worst:
            worst = float(D[i])
            if worst < -tol:
                witness = {"t": float(t), "x": grid[i].tolist(), "difference": worst}
        gap = abs(float(H.value(t, P)) - float(K.value(t, P)))
        if gap > eq_gap:
            eq_gap = gap
            if gap >= tol and witness is None:
                witness = {"t": float(t), "x": P.tolist(), "difference": gap,
                           "reason": "no equality at P"}
    holds = worst >= -tol and eq_gap < tol
    return CheckResult(holds, {"min_difference": worst, "max_gap_at_P": eq_gap,
                               "witness": None if holds else witness,
                               "resolution": resolution, "times": times})


def find_extrema(system: Hamiltonian, resolution: int = 64):
    """Candidate fixed global maximum and minimum from the t=0 slice."""
    grid = sample_grid(system, np.zeros(system.dim), resolution)
    _, P, _, Q, _ = spatial_extrema(system, 0.0, grid)
    P = np.where(np.abs(P) < 1e-9, 0.0, P)
    Q = np.where(np.abs(Q) < 1e-9, 0.0, Q)
    return P, Q


def constant_action(system: Hamiltonian, x, samples: int = DEFAULT_STEPS) -> float:
    """Action of the constant loop at x: int_0^1 H(t, x) dt."""
    times = np.linspace(0.0, 1.0, samples + 1)
    pts = np.repeat(np.asarray(x, float)[None, :], samples + 1, axis=0)
    return loop_action(system, times, pts)


# -- certificates ---------------------------------------------------------------------------------

CAVEAT = ("Numerical support, not proof: the absence of orbits is established only "
          "for the seeded Newton scan recorded in the evidence.")


@dataclass
class Certificate:
    theorem: str
    verdict: str
    checklist: list
    evidence: dict
    parameters: dict
    caveat: str = CAVEAT
    notes: list = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.verdict == CERTIFIED

    def to_dict(self) -> dict:
        return {"theorem": self.theorem, "verdict": self.verdict,
                "checklist": self.checklist, "evidence": self.evidence,
                "parameters": self.parameters, "caveat": self.caveat, "notes": self.notes}

    def summary(self) -> str:
        lines = [f"theorem {self.theorem}: {self.verdict}"]
        for item in self.checklist:
            mark = {True: "pass", False: "FAIL", None: "n/a"}[item["passed"]]
            lines.append(f"  [{mark}] {item['id']}: {item['description']}")
        lines += [f"  note: {n}" for n in self.notes]
        lines.append(f"  {self.caveat}")
        return "\n".join(lines)


def _item(cid, desc, passed, evidence):
    return {"id": cid, "description": desc, "passed": passed, "evidence": evidence}


def _same_point(system, a, b, tol=1e-6):
    d = np.asarray(a, float) - np.asarray(b, float)
    if system.domain == "torus":
        d = d - np.round(d)
    return float(np.abs(d).max()) < tol


def _twist(system, x, kw):
    try:
        return under_twisted_status(system, x, **kw).to_dict()
    except OrbitError as exc:
        return {"error": str(exc), "under_twisted": False, "generically": False}


def _scan_summary(scan, drop_samples=True):
    d = scan.to_dict(include_samples=not drop_samples)
    return d


def _run_parallel(tasks):
    """Run independent zero-argument callables; results in submission order."""
    n = min(thread_count(), len(tasks))
    if n <= 1:
        return [f() for f in tasks]
    with ThreadPoolExecutor(max_workers=n) as ex:
        futs = [ex.submit(f) for f in tasks]
        return [f.result() for f in futs]


def _scan_kwargs(resolution, tol, steps, order):
    return {"resolution": resolution, "tol": tol, "steps": steps, "order": order}


def certify_theorem_1_5(H: Hamiltonian, P=None, Q=None, resolution: int = 32,
                        tol: float = 1e-10, action_tol: float = 1e-7,
                        steps: int = DEFAULT_STEPS, order: int = DEFAULT_ORDER,
                        check_resolution: int = 32, twist_samples: int = 200) -> Certificate:
    """Quasi-autonomy, generic under-twistedness at P and Q, and all contractible
    1-periodic orbits with action in [A_H(Q), A_H(P)]."""
    if P is None or Q is None:
        fP, fQ = find_extrema(H)
        P = fP if P is None else P
        Q = fQ if Q is None else Q
    P, Q = np.asarray(P, float), np.asarray(Q, float)
    params = {"P": P.tolist(), "Q": Q.tolist(), "grid": resolution, "tol": tol,
              "action_tol": action_tol, "steps": steps, "order": order,
              "check_resolution": check_resolution, "twist_samples": twist_samples}
    tw = {"samples": twist_samples, "steps": steps, "order": order}
    qa, twP, twQ, scan = _run_parallel([
        lambda: quasi_autonomous_check(H, P, Q, check_resolution),
        lambda: _twist(H, P, tw),
        lambda: _twist(H, Q, tw),
        lambda: scan_fixed_points(H, **_scan_kwargs(resolution, tol, steps, order)),
    ])
    aP, aQ = constant_action(H, P, steps), constant_action(H, Q, steps)
    evidence = {"quasi_autonomy": qa.to_dict(), "twist_P": twP, "twist_Q": twQ,
                "scan": _scan_summary(scan), "actions": {"A_P": aP, "A_Q": aQ}}
    checklist = [
        _item("quasi_autonomous", "P is a fixed global maximum and Q a fixed global minimum",
              qa.holds, "quasi_autonomy"),
        _item("generic_twist_P", "P is generically under-twisted",
              bool(twP.get("generically")), "twist_P"),
        _item("generic_twist_Q", "Q is generically under-twisted",
              bool(twQ.get("generically")), "twist_Q"),
    ]
    notes = []
    verdict, action_ok, degenerate = None, None, []
    if scan.non_isolated:
        verdict = INCONCLUSIVE
        notes.append("fixed-point set is not isolated; orbits were not enumerated")
    else:
        degenerate = [o.start.tolist() for o in scan.orbits if o.cz_index == DEGENERATE]
        outside, coincide = [], []
        for o in scan.orbits:
            if not o.contractible:
                continue
            if o.action > aP + action_tol or o.action < aQ - action_tol:
                outside.append({"start": o.start.tolist(), "action": o.action})
            elif not (_same_point(H, o.start, P) or _same_point(H, o.start, Q)) and (
                    abs(o.action - aP) <= action_tol or abs(o.action - aQ) <= action_tol):
                coincide.append({"start": o.start.tolist(), "action": o.action})
        action_ok = not outside
        evidence["action_interval"] = {"interval": [aQ, aP], "outside": outside,
                                       "endpoint_coincidences": coincide}
        if coincide:
            notes.append(f"{len(coincide)} orbit(s) other than P, Q have action equal to "
                         "an interval endpoint; admitted by closed containment")
    checklist.append(_item("scan_nondegenerate", "scanned orbits are isolated and nondegenerate",
                           None if scan.non_isolated else not degenerate, "scan"))
    checklist.append(_item("action_interval",
                           "every contractible 1-periodic orbit has action in [A(Q), A(P)]",
                           action_ok, "action_interval" if action_ok is not None else "scan"))
    if degenerate:
        evidence["degenerate_orbits"] = degenerate
    verdict = verdict or _verdict(checklist[:3], degenerate, action_ok)
    return Certificate("1.5", verdict, checklist, evidence, params, notes=notes)


def _verdict(hypotheses, degenerate, action_ok):
    if not all(i["passed"] for i in hypotheses):
        return REFUTED
    if degenerate:
        return INCONCLUSIVE
    return CERTIFIED if action_ok else REFUTED


def _fixed(system, x, steps, order, tol=1e-8):
    y, _ = evolve(system, np.asarray(x, float), 1.0, steps=steps, order=order)
    d = y - x
    if system.domain == "torus":
        d = d - np.round(d)
    return float(np.abs(d).max()) <= tol


def certify_theorem_1_6(H: Hamiltonian, K: Hamiltonian, P, resolution: int = 32,
                        tol: float = 1e-10, action_tol: float = 1e-7,
                        steps: int = DEFAULT_STEPS, order: int = DEFAULT_ORDER,
                        check_resolution: int = 32, twist_samples: int = 200,
                        theorem: str = "1.6") -> Certificate:
    """Under-twisted fixed global maximum of H at P, domination of K at P, generic
    under-twistedness of K at P, no K-orbit with action above A_K(P) = A_H(P)."""
    P = np.asarray(P, float)
    params = {"P": P.tolist(), "grid": resolution, "tol": tol, "action_tol": action_tol,
              "steps": steps, "order": order, "check_resolution": check_resolution,
              "twist_samples": twist_samples}
    tw = {"samples": twist_samples, "steps": steps, "order": order}
    maxH, twH, dom, maxK, twK, scan = _run_parallel([
        lambda: extremum_check(H, P, "max", check_resolution),
        lambda: _twist(H, P, tw),
        lambda: dominates_check(H, K, P, check_resolution),
        lambda: extremum_check(K, P, "max", check_resolution),
        lambda: _twist(K, P, tw),
        lambda: scan_fixed_points(K, **_scan_kwargs(resolution, tol, steps, order)),
    ])
    max_H, max_K = maxH.holds, maxK.holds
    aHP, aKP = constant_action(H, P, steps), constant_action(K, P, steps)
    evidence = {
        "max_H": maxH.to_dict(),
        "twist_H": twH, "domination": dom.to_dict(),
        "max_K": maxK.to_dict(),
        "twist_K": twK, "scan_K": _scan_summary(scan),
        "actions": {"A_H(P)": aHP, "A_K(P)": aKP},
    }
    checklist = [
        _item("max_H", "P is a fixed global maximum of H", max_H, "max_H"),
        _item("twist_H", "P is under-twisted for H", bool(twH.get("under_twisted")), "twist_H"),
        _item("dominates", "H dominates K at P", dom.holds, "domination"),
        _item("max_K", "P is a fixed global maximum of K", max_K, "max_K"),
        _item("generic_twist_K", "P is generically under-twisted for K",
              bool(twK.get("generically")), "twist_K"),
        _item("actions_equal", "A_K(P) = A_H(P)", abs(aHP - aKP) <= action_tol, "actions"),
    ]
    notes = []
    if scan.non_isolated:
        checklist.append(_item("scan_nondegenerate", "K-orbits are isolated and nondegenerate",
                               None, "scan_K"))
        checklist.append(_item("no_orbit_above", "no contractible K-orbit has action > A_K(P)",
                               None, "scan_K"))
        notes.append("fixed-point set of K is not isolated; orbits were not enumerated")
        verdict = INCONCLUSIVE
    else:
        degenerate = [o.start.tolist() for o in scan.orbits if o.cz_index == DEGENERATE]
        above = [{"start": o.start.tolist(), "action": o.action} for o in scan.orbits
                 if o.contractible and o.action > aKP + action_tol]
        coincide = [{"start": o.start.tolist(), "action": o.action} for o in scan.orbits
                    if o.contractible and not _same_point(K, o.start, P)
                    and abs(o.action - aKP) <= action_tol]
        evidence["action_bound"] = {"bound": aKP, "above": above,
                                    "endpoint_coincidences": coincide}
        if degenerate:
            evidence["degenerate_orbits"] = degenerate
        if coincide:
            notes.append(f"{len(coincide)} K-orbit(s) other than P have action equal to A_K(P)")
        checklist.append(_item("scan_nondegenerate", "K-orbits are isolated and nondegenerate",
                               not degenerate, "scan_K"))
        checklist.append(_item("no_orbit_above", "no contractible K-orbit has action > A_K(P)",
                               not above, "action_bound"))
        verdict = _verdict(checklist[:6], degenerate, not above)
    return Certificate(theorem, verdict, checklist, evidence, params, notes=notes)


def certify_negative_side(H: Hamiltonian, Q=None, resolution: int = 32, tol: float = 1e-10,
                          action_tol: float = 1e-7, steps: int = DEFAULT_STEPS,
                          order: int = DEFAULT_ORDER, check_resolution: int = 32,
                          hofer_resolution: int = 32, hofer_nodes: int = 8,
                          identity_tol: float = 1e-6) -> Certificate:
    """Negative-length criterion through the reversed Hamiltonian.

    Builds H_bar(t,x) = -H(t, phi^t_H(x)), caps it at Q from below, runs the
    positive-side criterion on the pair, and checks ||H_bar||^+ = ||H||^-.
    """
    if Q is None:
        _, Q = find_extrema(H)
    Q = np.asarray(Q, float)
    params = {"Q": Q.tolist(), "grid": resolution, "tol": tol, "action_tol": action_tol,
              "steps": steps, "order": order, "check_resolution": check_resolution,
              "hofer_resolution": hofer_resolution, "hofer_nodes": hofer_nodes,
              "identity_tol": identity_tol}
    if not _fixed(H, Q, steps, order):
        item = _item("Q_fixed", "Q is a fixed point of the flow of H", False, "Q_fixed")
        return Certificate("6.1", REFUTED, [item], {"Q_fixed": {"holds": False}}, params)
    Hbar = reverse(H)
    try:
        L = dominated_cap(Hbar, Q, resolution=check_resolution)
    except (DominationError, ConfigError) as exc:
        item = _item("cap", "a cap L dominated by H_bar at Q exists", False, "cap")
        return Certificate("6.1", REFUTED, [item], {"cap": {"error": str(exc)}}, params)
    cert = certify_theorem_1_6(Hbar, L, Q, resolution, tol, action_tol, steps, order,
                               check_resolution, theorem="6.1")
    hb = hofer_norms(Hbar, hofer_resolution, hofer_nodes)
    h = hofer_norms(H, hofer_resolution, hofer_nodes)
    gap = abs(hb.positive - h.negative)
    cert.evidence["cap"] = L.verification
    cert.evidence["hofer_identity"] = {"reversed_positive": hb.positive,
                                       "negative": h.negative, "difference": gap}
    cert.checklist.append(_item("hofer_identity", "||H_bar||^+ = ||H||^-", gap <= identity_tol,
                                "hofer_identity"))
    cert.parameters = params
    if gap > identity_tol and cert.verdict == CERTIFIED:
        cert.verdict = INCONCLUSIVE
        cert.notes.append("reversed positive norm disagrees with the negative norm")
    return cert


def certify_short_time(H: Hamiltonian, P=None, eps_start: float = 0.05, eps_min: float = 1e-3,
                       resolution: int = 32, tol: float = 1e-10,
                       steps: int = DEFAULT_STEPS, order: int = DEFAULT_ORDER,
                       check_resolution: int = 32) -> Certificate:
    """Search eps = eps_start, eps_start/2, ... >= eps_min for which the rescaled
    path eps H(eps t, x) is certified against the cap eps H(eps t, P) + c f_P."""
    if P is None:
        P, _ = find_extrema(H)
    P = np.asarray(P, float)
    attempts = []
    eps = eps_start
    last = None
    while eps >= eps_min * (1 - 1e-12):
        He = rescale(H, eps)
        try:
            K = dominated_cap(He, P, resolution=check_resolution)
            cert = certify_theorem_1_6(He, K, P, resolution, tol, steps=steps, order=order,
                                       check_resolution=check_resolution, theorem="1.7")
            attempts.append({"eps": eps, "verdict": cert.verdict, "cap": K.verification})
            last = cert
            if cert.certified:
                break
        except (DominationError, ConfigError) as exc:
            attempts.append({"eps": eps, "verdict": REFUTED, "error": str(exc)})
        eps /= 2.0
    params = {"P": P.tolist(), "eps_start": eps_start, "eps_min": eps_min, "grid": resolution,
              "tol": tol, "steps": steps, "order": order, "check_resolution": check_resolution}
    if last is not None and last.certified:
        last.evidence["short_time_search"] = attempts
        last.parameters = {**params, "eps": attempts[-1]["eps"]}
        return last
    item = _item("short_time", f"some eps in [{eps_min}, {eps_start}] certifies", False,
                 "short_time_search")
    return Certificate("1.7", INCONCLUSIVE, [item], {"short_time_search": attempts}, params)
