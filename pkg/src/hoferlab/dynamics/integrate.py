"""Implicit-midpoint integration of Hamiltonian flows, with tangent maps.

One implicit-midpoint step solves ``x1 = x0 + h X(t + h/2, (x0 + x1)/2)`` by
Newton iteration.  Its exact derivative is the Cayley map
``(I - h/2 A)^{-1} (I + h/2 A)`` with ``A = DX`` at the midpoint, which is
symplectic whenever ``A`` is Hamiltonian; composing these gives monodromy
matrices symplectic to rounding error.

``order=4`` and ``order=6`` use the symmetric triple-jump composition of the
midpoint rule, still symplectic and time-reversible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hamiltonians import Hamiltonian

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50
DEFAULT_STEPS = 100
DEFAULT_ORDER = 6


class FlowError(RuntimeError):
    """Newton solve inside an implicit step failed."""

    def __init__(self, msg, step=None):
        super().__init__(msg)
        self.step = step


def _triple_jump(order: int) -> list[float]:
    if order == 2:
        return [1.0]
    if order % 2 or order < 2:
        raise ValueError("order must be 2, 4, 6, ...")
    inner = _triple_jump(order - 2)
    p = order - 1
    g1 = 1.0 / (2.0 - 2.0 ** (1.0 / p))
    g2 = -(2.0 ** (1.0 / p)) * g1
    return [c * g for g in (g1, g2, g1) for c in inner]


_COEFFS = {o: _triple_jump(o) for o in (2, 4, 6, 8)}


@dataclass
class FlowResult:
    endpoint: np.ndarray
    times: np.ndarray | None = None
    trajectory: np.ndarray | None = None        # (steps+1, ..., 2n)
    monodromy: np.ndarray | None = None         # (..., 2n, 2n)
    monodromy_path: np.ndarray | None = None    # (steps+1, ..., 2n, 2n)


def _midpoint_step(system: Hamiltonian, t: float, h: float, x0: np.ndarray, step: int,
                   want_tangent: bool):
    """One implicit-midpoint step for a batch ``x0`` of shape (m, 2n).

    Points are iterated independently (converged points are frozen), so the
    result for a point never depends on what else is in the batch.
    """
    tm = t + 0.5 * h
    x1 = x0 + h * system.vector_field(tm, x0)
    eye = np.eye(x0.shape[-1])
    active = np.arange(x0.shape[0])
    for _ in range(NEWTON_MAXITER):
        if not active.size:
            break
        xa, x1a = x0[active], x1[active]
        mid = 0.5 * (xa + x1a)
        X, A = system.field_and_jacobian(tm, mid)
        G = x1a - xa - h * X
        dx = np.linalg.solve(eye - 0.5 * h * A, G[..., None])[..., 0]
        x1[active] = x1a - dx
        scale = 1.0 + np.abs(x1a).max(axis=-1)
        done = np.abs(dx).max(axis=-1) <= NEWTON_TOL * scale
        active = active[~done]
    else:
        if active.size:
            raise FlowError(f"implicit midpoint Newton did not converge at step {step}", step)
    if not want_tangent:
        return x1, None
    A = system.vector_field_jacobian(tm, 0.5 * (x0 + x1))
    C = np.linalg.solve(eye - 0.5 * h * A, eye + 0.5 * h * A)
    return x1, C


def flow(system: Hamiltonian, x0, t0: float = 0.0, t1: float = 1.0,
         steps: int = DEFAULT_STEPS, monodromy: bool = False, trajectory: bool = False,
         order: int = DEFAULT_ORDER) -> FlowResult:
    """Integrate ``x' = X_H(t, x)`` from ``t0`` to ``t1`` with ``steps`` fixed steps.

    ``x0`` is a point ``(2n,)`` or a batch ``(m, 2n)``; outputs keep that shape.
    With ``trajectory`` the samples at every step are kept; with ``monodromy``
    the linearised flow is integrated alongside (and its path kept when
    ``trajectory`` is also set).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x0 = np.asarray(x0, dtype=float)
    single = x0.ndim == 1
    x = np.atleast_2d(x0).copy()
    m, dim = x.shape
    coeffs = _COEFFS[order]
    h = (t1 - t0) / steps
    M = np.broadcast_to(np.eye(dim), (m, dim, dim)).copy() if monodromy else None
    traj = [x.copy()] if trajectory else None
    mpath = [M.copy()] if (trajectory and monodromy) else None
    t = t0
    for k in range(steps):
        tk = t0 + k * h
        for c in coeffs:
            x, C = _midpoint_step(system, tk, c * h, x, k, monodromy)
            if monodromy:
                M = C @ M
            tk += c * h
        t = t0 + (k + 1) * h
        if trajectory:
            traj.append(x.copy())
            if monodromy:
                mpath.append(M.copy())
    res = FlowResult(endpoint=x[0] if single else x)
    if trajectory:
        res.times = t0 + h * np.arange(steps + 1)
        arr = np.array(traj)
        res.trajectory = arr[:, 0] if single else arr
        if monodromy:
            marr = np.array(mpath)
            res.monodromy_path = marr[:, 0] if single else marr
    if monodromy:
        res.monodromy = M[0] if single else M
    return res


def symplectic_defect(M: np.ndarray) -> float:
    """max |M^T J M - J| over a matrix or a batch."""
    M = np.asarray(M)
    dim = M.shape[-1]
    n = dim // 2
    J = np.zeros((dim, dim))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    D = np.swapaxes(M, -1, -2) @ J @ M - J
    return float(np.abs(D).max())


def energy_drift(system: Hamiltonian, x0, steps: int = DEFAULT_STEPS,
                 order: int = DEFAULT_ORDER) -> float:
    """max_t |H(x(t)) - H(x0)| over [0,1] for an autonomous system."""
    res = flow(system, x0, 0.0, 1.0, steps, trajectory=True, order=order)
    E = np.array([system.value(0.0, p) for p in res.trajectory])
    return float(np.abs(E - E[0]).max())


def step_count_for(t0: float, t1: float, steps_per_unit: int) -> int:
    return max(1, int(math.ceil(abs(t1 - t0) * steps_per_unit - 1e-9)))


def evolve(system: Hamiltonian, x0, t: float = 1.0, inverse: bool = False,
           monodromy: bool = False, steps: int = DEFAULT_STEPS, order: int = DEFAULT_ORDER):
    """Time-t map ``phi^t`` (or its inverse) and optionally its derivative.

    Systems whose flow is a known composition of other flows expose
    ``exact_flow(x, t, inverse, monodromy, steps, order)``; it is used in
    preference to integrating their (lazily evaluated) vector field.
    """
    exact = getattr(system, "exact_flow", None)
    if exact is not None:
        return exact(x0, t, inverse=inverse, monodromy=monodromy, steps=steps, order=order)
    if t == 0.0:
        x = np.array(x0, dtype=float)
        M = np.broadcast_to(np.eye(x.shape[-1]), x.shape + (x.shape[-1],)).copy()
        return x, (M if monodromy else None)
    a, b = (t, 0.0) if inverse else (0.0, t)
    r = flow(system, x0, a, b, steps, monodromy=monodromy, order=order)
    return r.endpoint, r.monodromy


def evolve_path(system: Hamiltonian, x0, samples: int = DEFAULT_STEPS,
                monodromy: bool = False, steps: int = DEFAULT_STEPS,
                order: int = DEFAULT_ORDER):
    """Trajectory (and tangent maps) of ``x0`` at ``samples + 1`` equally spaced
    times in [0, 1]."""
    times = np.linspace(0.0, 1.0, samples + 1)
    shortcut = getattr(system, "exact_path", None)
    if shortcut is not None:
        got = shortcut(x0, samples, monodromy=monodromy, steps=steps, order=order)
        if got is not None:
            return got
    if getattr(system, "exact_flow", None) is None:
        # one pass with a step count that is a multiple of ``samples``
        stride = max(1, -(-steps // samples))
        r = flow(system, x0, 0.0, 1.0, stride * samples, monodromy=monodromy,
                 trajectory=True, order=order)
        traj = r.trajectory[::stride]
        mp = r.monodromy_path[::stride] if monodromy else None
        return times, traj, mp
    pts, mats = [], []
    for t in times:
        k = max(1, int(round(steps * t)))
        y, M = evolve(system, x0, float(t), monodromy=monodromy, steps=k, order=order)
        pts.append(y)
        mats.append(M)
    return times, np.array(pts), (np.array(mats) if monodromy else None)
