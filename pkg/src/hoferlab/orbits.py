"""Contractible 1-periodic orbits: shooting scans, actions, Conley-Zehnder indices.

Fixed points of the time-1 map are found by Newton's method from a grid of
seeds.  A cheap low-order flow does the bulk of the iteration; one point per
cluster is then polished with the full-accuracy flow.  Completeness is
evidential only, so every scan carries its seed coverage and Newton statistics.

Index convention: for a path Phi(t) of symplectic matrices starting at the
identity, ``cz_index`` is ``n - mu`` where ``mu`` is the Maslov index of the
graph of Phi relative to the diagonal, normalised so that ``exp(t J S)`` with
small nondegenerate S has ``mu = sign(S)/2``.  This makes a nondegenerate
minimum of a C^2-small function have index 0 and an under-twisted maximum
index 2n.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar

from .dynamics.hamiltonians import Hamiltonian
from .dynamics.integrate import DEFAULT_ORDER, DEFAULT_STEPS, evolve, evolve_path

DEGENERATE = "degenerate"
GUARD_BAND = 0.25
# sigma_min(Dphi^1 - I) below this counts as degenerate; it sits above the
# integrator error of the monodromy at default steps (a few 1e-8).
DEGENERATE_TOL = 1e-6
CHUNK = 256


class OrbitError(ValueError):
    pass


def thread_count() -> int:
    env = os.environ.get("HOFERLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise OrbitError(f"HOFERLAB_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


# -- Conley-Zehnder index -------------------------------------------------------------

def _graph_unitary(Phi):
    """Unitary frame of the Lagrangian {(Rx, Phi x)}, R = diag(I, -I), for a
    batch of 2n x 2n matrices; returns det(X + iY) and U U^T."""
    Phi = np.asarray(Phi, float)
    dim = Phi.shape[-1]
    n = dim // 2
    I, Z = np.eye(n), np.zeros((n, n))
    top_x = np.broadcast_to(np.block([I, Z]), Phi.shape[:-2] + (n, dim))
    top_y = np.broadcast_to(np.block([Z, -I]), Phi.shape[:-2] + (n, dim))
    X = np.concatenate([top_x, Phi[..., :n, :]], axis=-2)
    Y = np.concatenate([top_y, Phi[..., n:, :]], axis=-2)
    F = X + 1j * Y
    # polar factor of F is the unitary U with the same Lagrangian
    u, _, vh = np.linalg.svd(F)
    U = u @ vh
    return np.linalg.det(F), U @ np.swapaxes(U, -1, -2)


_DIAG_W = None


def _diag_w(dim):
    _, W0 = _graph_unitary(np.eye(dim))
    return np.conj(W0)  # W0 is unitary and symmetric, so conj(W0) = W0^{-1}


def _floor_sum(Phi_path):
    """N(t) = sum_j floor(theta_j(t) / 2 pi) along a sampled path (integer valued,
    constant between crossings of the diagonal), plus the final angles."""
    dets, W = _graph_unitary(Phi_path)
    dim = Phi_path.shape[-1]
    W0inv = _diag_w(dim)
    ph = np.unwrap(2.0 * np.angle(dets))
    jumps = np.abs(np.diff(ph))
    if jumps.size and jumps.max() > math.pi / 2:
        raise OrbitError("monodromy path is under-sampled for index computation")
    w = ph - ph[0]
    ev = np.linalg.eigvals(W0inv @ W)
    ang = np.mod(np.angle(ev), 2 * math.pi)
    return w, ang


def maslov_count(Phi_path) -> np.ndarray:
    """Integer-valued crossing counter N(t_k) for every sample (N(0) = 0 plus
    the half-count convention applied at t=0)."""
    w, ang = _floor_sum(np.asarray(Phi_path, float))
    m = Phi_path.shape[-1]
    # eigenvalues sitting exactly at angle 0 count as 2 pi (upper end)
    return (w - ang.sum(axis=-1)) / (2 * math.pi) + m / 2.0


def cz_index(path, degenerate_tol: float = DEGENERATE_TOL):
    """Conley-Zehnder index of a sampled path Phi(t_0 = 0) = I, ..., Phi(t_N).

    Returns an int, or ``"degenerate"`` when Phi(1) has eigenvalue 1.
    """
    path = np.asarray(path, float)
    dim = path.shape[-1]
    if np.abs(path[0] - np.eye(dim)).max() > 1e-9:
        raise OrbitError("path must start at the identity")
    end = path[-1]
    if np.linalg.svd(end - np.eye(dim), compute_uv=False)[-1] <= degenerate_tol * (
            1.0 + np.abs(end).max()):
        return DEGENERATE
    w, ang = _floor_sum(path)
    mu_graph = (w[-1] - ang[-1].sum()) / (2 * math.pi) + dim / 2.0
    mu = dim // 2 + mu_graph
    r = round(mu)
    if abs(mu - r) > 1e-6:
        raise OrbitError(f"index computation did not produce an integer ({mu})")
    return int(r)


# -- linearised flows at a point ------------------------------------------------------------

def linearized_path(system: Hamiltonian, x, times, steps=DEFAULT_STEPS, order=DEFAULT_ORDER):
    """Dphi^t at ``x`` for the given sorted times (starting at 0).

    For autonomous systems at a critical point this is exactly expm(t J Hess);
    otherwise it comes from the variational equation.
    """
    x = np.asarray(x, float)
    times = np.asarray(times, float)
    dim = x.shape[-1]
    if system.autonomous and np.abs(system.gradient(0.0, x)).max() < 1e-12:
        from .dynamics.hamiltonians import symplectic_J
        A = symplectic_J(dim) @ system.hessian(0.0, x)
        return np.array([scipy.linalg.expm(t * A) for t in times])
    samples = len(times) - 1
    if np.allclose(times, np.linspace(0.0, 1.0, samples + 1)):
        st = steps if steps % samples == 0 else samples * max(1, round(steps / samples))
        _, _, mp = evolve_path(system, x, samples, monodromy=True, steps=st, order=order)
        return mp
    return np.array([evolve(system, x, float(t), monodromy=True,
                            steps=max(1, round(steps * t)), order=order)[1] for t in times])


def _lin_at(system, x, T, steps, order):
    return linearized_path(system, x, [0.0, T], steps, order)[-1] if T > 0 else np.eye(len(x))


@dataclass
class UnderTwistedStatus:
    point: list
    under_twisted: bool
    generically: bool
    margin: float
    margin_time: float
    crossing_times: list
    nonconstant_kernel_times: list
    samples: int

    def to_dict(self) -> dict:
        return {"point": self.point, "under_twisted": self.under_twisted,
                "generically": self.generically, "margin": self.margin,
                "margin_time": self.margin_time, "crossing_times": self.crossing_times,
                "nonconstant_kernel_times": self.nonconstant_kernel_times,
                "samples": self.samples}


def _displacement(system, a, b):
    d = np.asarray(a, float) - np.asarray(b, float)
    if system.domain == "torus":
        d = d - np.round(d)
    return d


def under_twisted_status(system: Hamiltonian, x, samples: int = 200, tol: float = 1e-9,
                         fixed_tol: float = 1e-8, steps: int = DEFAULT_STEPS,
                         order: int = DEFAULT_ORDER) -> UnderTwistedStatus:
    """Under-twisted status of a point fixed by every phi^t, t in [0,1].

    The margin is ``min_T sigma_min(Dphi^T - I) / T`` over (0,1]: dividing by T
    removes the trivial vanishing at T = 0, and the minimum is zero exactly
    when some Dphi^T has eigenvalue 1.  Crossings between grid times are
    detected exactly through the jump of the integer counter of
    :func:`maslov_count`; touching zeros through the refined margin.
    """
    x = np.asarray(x, float)
    dim = x.shape[-1]
    times = np.linspace(0.0, 1.0, samples + 1)
    pts = [evolve(system, x, float(t), steps=max(1, round(steps * t)), order=order)[0]
           for t in times[1::max(1, samples // 20)]]
    drift = max(float(np.abs(_displacement(system, p, x)).max()) for p in pts)
    if drift > fixed_tol:
        raise OrbitError(f"point is not fixed by the flow (drift {drift:.3g})")
    path = linearized_path(system, x, times, steps, order)
    eye = np.eye(dim)

    def margin_at(M, T):
        return float(np.linalg.svd(M - eye, compute_uv=False)[-1]) / T

    m = np.array([margin_at(path[k], times[k]) for k in range(1, samples + 1)])
    k = int(np.argmin(m))
    lo = times[max(k, 1) - 1] if k > 0 else times[1] * 1e-3
    hi = times[min(k + 2, samples)]
    res = minimize_scalar(lambda T: margin_at(_lin_at(system, x, T, steps, order), T),
                          bounds=(max(lo, 1e-9), hi), method="bounded",
                          options={"xatol": 1e-12})
    margin, mtime = float(m[k]), float(times[k + 1])
    if res.fun < margin:
        margin, mtime = float(res.fun), float(res.x)

    counts = maslov_count(path)
    crossings = [float(times[j + 1]) for j in range(1, samples)
                 if abs(counts[j + 1] - counts[j]) > 0.5]
    if margin <= tol and not any(abs(c - mtime) <= 1.0 / samples for c in crossings):
        crossings.append(mtime)
    crossings.sort()

    # kernel vectors at each crossing: do they generate nonconstant linear orbits?
    nonconstant = []
    for T in crossings:
        T = _refine_crossing(system, x, T, samples, steps, order)
        M = _lin_at(system, x, T, steps, order)
        _, s, vh = np.linalg.svd(M - eye)
        kern = vh[s <= max(1e-6, 10 * tol * max(T, 1e-12) * 1e3)]
        if not len(kern):
            kern = vh[-1:]
        sub = np.linspace(0.0, T, 33)
        sub_path = linearized_path(system, x, sub, steps, order)
        moves = max(float(np.abs(P @ v - v).max()) for P in sub_path for v in kern)
        if moves > 1e-6:
            nonconstant.append(T)

    generically = not crossings and margin > tol
    return UnderTwistedStatus(x.tolist(), not nonconstant, generically, margin, mtime,
                              crossings, nonconstant, samples)


def _refine_crossing(system, x, T, samples, steps, order):
    lo, hi = max(T - 1.0 / samples, 1e-9), min(T + 1.0 / samples, 1.0)
    eye = np.eye(len(x))
    res = minimize_scalar(
        lambda s: float(np.linalg.svd(_lin_at(system, x, s, steps, order) - eye,
                                      compute_uv=False)[-1]),
        bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return float(res.x)


# -- orbits ---------------------------------------------------------------------------------

@dataclass
class PeriodicOrbit:
    start: np.ndarray
    times: np.ndarray
    samples: np.ndarray
    lift_displacement: tuple
    residual: float
    monodromy: np.ndarray
    nondegeneracy_margin: float
    nondegenerate: bool
    cz_index: object = None
    action: float | None = None
    constant: bool = False
    basin: int = 0

    @property
    def contractible(self) -> bool:
        return not any(self.lift_displacement)

    def to_dict(self, include_samples: bool = True) -> dict:
        d = {
            "start": self.start.tolist(),
            "lift_displacement": list(self.lift_displacement),
            "contractible": self.contractible,
            "constant": self.constant,
            "residual": self.residual,
            "action": self.action,
            "cz_index": self.cz_index,
            "nondegenerate": self.nondegenerate,
            "nondegeneracy_margin": self.nondegeneracy_margin,
            "monodromy": self.monodromy.tolist(),
            "basin": self.basin,
        }
        if include_samples:
            d["samples"] = self.samples.tolist()
        return d


def loop_action(system: Hamiltonian, times, samples) -> float:
    """int H(t, x(t)) dt - int_D xbar^* omega for a closed lifted loop.

    The area term is ``(1/2) oint (p dq - q dp)`` with velocities taken from the
    vector field.  Time-periodic systems use the periodic trapezoid rule, others
    composite Simpson.
    """
    times = np.asarray(times, float)
    samples = np.asarray(samples, float)
    n = samples.shape[-1] // 2
    Hv = np.array([float(system.value(t, x)) for t, x in zip(times, samples)])
    V = np.array([system.vector_field(t, x) for t, x in zip(times, samples)])
    q, p = samples[:, :n], samples[:, n:]
    dq, dp = V[:, :n], V[:, n:]
    area_density = 0.5 * (np.sum(p * dq, axis=1) - np.sum(q * dp, axis=1))
    f = Hv - area_density
    return float(_quad(f, times, periodic=system.periodic))


def _quad(f, times, periodic):
    from scipy.integrate import simpson
    if periodic:
        h = np.diff(times)
        return float(np.sum(0.5 * h * (f[:-1] + f[1:])))
    return float(simpson(f, x=times))


def action(system: Hamiltonian, orbit: PeriodicOrbit) -> float:
    if not orbit.contractible:
        raise OrbitError("the action is defined on contractible loops only "
                         f"(lift displacement {list(orbit.lift_displacement)})")
    return loop_action(system, orbit.times, orbit.samples)


def nondegenerate(system: Hamiltonian, orbit: PeriodicOrbit, tol: float = DEGENERATE_TOL):
    """(nondegenerate?, margin) with margin = sigma_min(Dphi^1 - I)."""
    M = orbit.monodromy
    margin = float(np.linalg.svd(M - np.eye(M.shape[0]), compute_uv=False)[-1])
    return margin > tol, margin


def complete_orbit(system: Hamiltonian, x0, samples: int = DEFAULT_STEPS,
                   steps: int = DEFAULT_STEPS, order: int = DEFAULT_ORDER,
                   degenerate_tol: float = DEGENERATE_TOL) -> PeriodicOrbit:
    """Flow a fixed point of phi^1 around its loop and annotate it."""
    x0 = np.asarray(x0, float)
    dim = x0.shape[-1]
    for _ in range(4):
        times, traj, mp = evolve_path(system, x0, samples, monodromy=True, steps=steps,
                                      order=order)
        try:
            cz_path_ok = _floor_sum(mp) is not None
        except OrbitError:
            cz_path_ok = False
        if cz_path_ok:
            break
        samples *= 2
        steps = max(steps, samples)
    else:
        raise OrbitError("could not resolve the monodromy path")
    disp = traj[-1] - traj[0]
    if system.domain == "torus":
        k = np.round(disp)
        if np.abs(disp - k).max() > GUARD_BAND:
            raise OrbitError("loop does not close on the torus")
        lift = tuple(int(v) for v in k)
    else:
        k = np.zeros(dim)
        lift = tuple(0 for _ in range(dim))
    residual = float(np.abs(disp - k).max())
    M = mp[-1]
    margin = float(np.linalg.svd(M - np.eye(dim), compute_uv=False)[-1])
    orbit = PeriodicOrbit(
        start=x0, times=times, samples=traj, lift_displacement=lift, residual=residual,
        monodromy=M, nondegeneracy_margin=margin, nondegenerate=margin > degenerate_tol,
        constant=bool(np.abs(traj - traj[0]).max() < 1e-8))
    orbit.cz_index = cz_index(mp, degenerate_tol)
    if orbit.contractible:
        orbit.action = loop_action(system, times, traj)
    return orbit


# -- scanning ----------------------------------------------------------------------------------

@dataclass
class ScanResult:
    orbits: list
    non_isolated: bool
    metadata: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return "non-isolated fixed-point set" if self.non_isolated else "ok"

    def to_dict(self, include_samples: bool = True) -> dict:
        return {"status": self.status,
                "orbits": [o.to_dict(include_samples) for o in self.orbits],
                "metadata": self.metadata}


def seed_grid(system: Hamiltonian, resolution: int, center=None, radius: float = 1.0):
    dim = system.dim
    if system.domain == "torus":
        axis = (np.arange(resolution) + 0.5) / resolution
    else:
        c = 0.0
        axis = c + radius * (2.0 * (np.arange(resolution) + 0.5) / resolution - 1.0)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    if system.domain != "torus" and center is not None:
        pts = pts + np.asarray(center, float)
    return pts


def _residual(system, x, y):
    d = y - x
    if system.domain == "torus":
        d = d - np.round(d)
    return d


def _newton(system, X, steps, order, tol, maxiter, step_cap=0.1, bound=None):
    """Batched Newton on F(x) = phi^1(x) - x (mod Z^2n on the torus).

    Returns (points, converged mask, iteration counts, residual norms)."""
    X = np.array(X, float)
    m, dim = X.shape
    eye = np.eye(dim)
    conv = np.zeros(m, bool)
    iters = np.zeros(m, int)
    res = np.full(m, np.inf)
    active = np.arange(m)
    for it in range(maxiter + 1):
        if not active.size:
            break
        Y, M = evolve(system, X[active], 1.0, monodromy=True, steps=steps, order=order)
        F = _residual(system, X[active], Y)
        r = np.abs(F).max(axis=1)
        res[active] = r
        done = r <= tol
        conv[active[done]] = True
        iters[active] = it
        keep = ~done
        if bound is not None:
            keep &= np.abs(X[active] - bound[0]).max(axis=1) <= bound[1]
        active, F, M = active[keep], F[keep], M[keep]
        if not active.size or it == maxiter:
            break
        dx = -np.einsum("kij,kj->ki", np.linalg.pinv(M - eye, rcond=1e-10), F)
        big = np.abs(dx).max(axis=1)
        scale = np.where(big > step_cap, step_cap / np.maximum(big, 1e-300), 1.0)
        X[active] += dx * scale[:, None]
    return X, conv, iters, res


def _canonical(system, x):
    if system.domain == "torus":
        return x - np.floor(x + 1e-9)
    return x


def _cluster(system, pts, radius):
    """Greedy clustering in seed order; returns a label per point."""
    labels = -np.ones(len(pts), int)
    centers = []
    for i, x in enumerate(pts):
        for c, y in enumerate(centers):
            if np.abs(_residual(system, y, x)).max() < radius:
                labels[i] = c
                break
        else:
            centers.append(x)
            labels[i] = len(centers) - 1
    return labels, np.array(centers)


def scan_fixed_points(system: Hamiltonian, resolution: int = 32, tol: float = 1e-10,
                      steps: int = DEFAULT_STEPS, order: int = DEFAULT_ORDER,
                      coarse_steps: int | None = None, coarse_order: int = 4,
                      maxiter: int = 40, samples: int | None = None,
                      radius: float = 1.0, center=None, threads: int | None = None,
                      non_isolated_fraction: float = 0.5) -> ScanResult:
    """Find the 1-periodic orbits through Newton iteration from a seed grid.

    Torus systems are seeded on the cell centres of a ``resolution^2n`` grid;
    chart systems on a box of half-width ``radius``.  Solutions closer than
    ``max(10 tol, 1e-7)`` are identified.  If the coarse phase finds distinct
    solutions for at least ``non_isolated_fraction`` of the seeds the set is
    reported as non-isolated and no orbits are enumerated.
    """
    seeds = seed_grid(system, resolution, center, radius)
    coarse_steps = coarse_steps or max(10, steps // 4)
    samples = samples or steps
    threads = threads or thread_count()
    bound = None
    if system.domain != "torus":
        c = np.zeros(system.dim) if center is None else np.asarray(center, float)
        bound = (c, 4.0 * radius)

    chunks = [seeds[i:i + CHUNK] for i in range(0, len(seeds), CHUNK)]

    def work(chunk):
        return _newton(system, chunk, coarse_steps, coarse_order, 1e-7, maxiter, bound=bound)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    X = np.concatenate([p[0] for p in parts])
    conv = np.concatenate([p[1] for p in parts])
    iters = np.concatenate([p[2] for p in parts])

    meta = {
        "domain": system.domain, "resolution": resolution, "seeds": int(len(seeds)),
        "tol": tol, "steps": steps, "order": order, "coarse_steps": coarse_steps,
        "coarse_order": coarse_order, "maxiter": maxiter, "samples": samples,
        "converged_seeds": int(conv.sum()), "diverged_seeds": int((~conv).sum()),
        "newton_iterations": {"mean": float(iters[conv].mean()) if conv.any() else None,
                              "max": int(iters[conv].max()) if conv.any() else None},
    }
    if system.domain != "torus":
        meta["box_radius"] = radius
        meta["box_center"] = (np.zeros(system.dim) if center is None
                              else np.asarray(center, float)).tolist()
    good = _canonical(system, X[conv])
    if not len(good):
        meta["clusters"] = 0
        return ScanResult([], False, meta)
    labels, centers = _cluster(system, good, 1e-4)
    meta["clusters"] = int(len(centers))
    if len(centers) >= non_isolated_fraction * len(seeds):
        return ScanResult([], True, meta)

    basin = np.bincount(labels, minlength=len(centers))
    polished, pconv, _, pres = _newton(system, centers, steps, order, tol, maxiter,
                                       bound=bound)
    polished = _canonical(system, polished)
    meta["polish_failures"] = int((~pconv).sum())

    dedup = max(10 * tol, 1e-7)
    reps, counts = [], []
    for i in np.flatnonzero(pconv):
        for j, y in enumerate(reps):
            if np.abs(_residual(system, y, polished[i])).max() < dedup:
                counts[j] += int(basin[i])
                break
        else:
            reps.append(polished[i])
            counts.append(int(basin[i]))

    orbits = []
    for x0, cnt in zip(reps, counts):
        o = complete_orbit(system, x0, samples, steps, order)
        o.basin = cnt
        orbits.append(o)
    # actions equal up to rounding noise are ordered by position
    orbits.sort(key=lambda o: (-(round(o.action, 12) if o.action is not None else -np.inf),
                               tuple(np.round(o.start, 9) + 0.0)))
    meta["basins"] = [o.basin for o in orbits]
    return ScanResult(orbits, False, meta)
