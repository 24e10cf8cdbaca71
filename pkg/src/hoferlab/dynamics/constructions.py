"""Hamiltonians built from other Hamiltonians.

Several constructions (the reversed Hamiltonian, the bump perturbation) are
defined through the flow of another system.  They are evaluated lazily: each
evaluation integrates that flow with ``inner_steps`` steps, and results are
memoised per ``(t, batch)`` in a lock-protected cache.  Hessians of lazy
systems are central differences of their exact gradients, symmetrised.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .hamiltonians import (
    ConfigError,
    Hamiltonian,
    Term,
    TermHamiltonian,
    chart_morse_term,
    symplectic_J,
    torus_morse_term,
)
from .integrate import DEFAULT_ORDER, DEFAULT_STEPS, evolve, evolve_path, flow

FD_STEP = 1e-5


class DominationError(ValueError):
    """The cap fails to dominate; carries the violating sample."""

    def __init__(self, msg, sample=None):
        super().__init__(msg)
        self.sample = sample


class ChartError(ValueError):
    """A flowed ball leaves the chart; carries the exit time."""

    def __init__(self, msg, exit_time=None):
        super().__init__(msg)
        self.exit_time = exit_time


class _Memo:
    def __init__(self, size=512):
        self._d: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self._size = size

    def get(self, key, compute):
        with self._lock:
            if key in self._d:
                self._d.move_to_end(key)
                return self._d[key]
        val = compute()
        with self._lock:
            self._d[key] = val
            while len(self._d) > self._size:
                self._d.popitem(last=False)
        return val

    def put(self, key, val):
        with self._lock:
            self._d[key] = val
            while len(self._d) > self._size:
                self._d.popitem(last=False)


def _key(t, x, tag):
    x = np.ascontiguousarray(x, dtype=float)
    return (tag, float(t), x.shape, x.tobytes())


class _LazyHamiltonian(Hamiltonian):
    """Shared machinery: FD Hessian from an exact batched gradient."""

    def _fd_points(self, x):
        x = np.asarray(x, dtype=float)
        E = np.eye(self.dim) * FD_STEP
        pts = np.concatenate([x[..., None, :] + E, x[..., None, :] - E], axis=-2)
        return pts

    def _hess_from_grads(self, g):
        d = self.dim
        gp, gm = g[..., :d, :], g[..., d:, :]
        Hs = (gp - gm) / (2 * FD_STEP)
        return 0.5 * (Hs + np.swapaxes(Hs, -1, -2))

    def hessian(self, t, x):
        pts = self._fd_points(x)
        return self._hess_from_grads(self.gradient(t, pts))

    def field_and_jacobian(self, t, x):
        x = np.asarray(x, dtype=float)
        pts = np.concatenate([x[..., None, :], self._fd_points(x)], axis=-2)
        g = self.gradient(t, pts)
        g0, S = g[..., 0, :], self._hess_from_grads(g[..., 1:, :])
        n = self.n
        X = np.concatenate([g0[..., n:], -g0[..., :n]], axis=-1)
        A = np.concatenate([S[..., n:, :], -S[..., :n, :]], axis=-2)
        return X, A


# -- reversal ----------------------------------------------------------------------------

class Reversed(_LazyHamiltonian):
    """H_bar(t, x) = -H(t, phi^t_H(x)); generates the inverse path (phi^t_H)^{-1}.

    :meth:`exact_flow` applies (phi^t_H)^{-1} directly; integrating the lazy
    vector field instead is possible but costs an inner flow per evaluation.
    """

    def __init__(self, base: Hamiltonian, inner_steps: int = 60, inner_order: int = 4):
        self.base = base
        self.dim, self.domain = base.dim, base.domain
        self.autonomous = False
        self.periodic = base.periodic
        self.inner_steps, self.inner_order = inner_steps, inner_order
        self._memo = _Memo()

    def _forward(self, t, x, tangent):
        def compute():
            xx = np.reshape(np.asarray(x, float), (-1, self.dim))
            y, M = evolve(self.base, xx, t, monodromy=tangent, steps=self.inner_steps,
                          order=self.inner_order)
            shape = np.shape(x)
            return y.reshape(shape), (M.reshape(shape + (self.dim,)) if tangent else None)
        return self._memo.get(_key(t, x, "T" if tangent else "F"), compute)

    def value(self, t, x):
        y, _ = self._forward(t, x, False)
        return -self.base.value(t, y)

    def gradient(self, t, x):
        return self.value_and_gradient(t, x)[1]

    def value_and_gradient(self, t, x):
        y, M = self._forward(t, x, True)
        v, g = self.base.value_and_gradient(t, y)
        return -v, -np.einsum("...ji,...j->...i", M, g)

    def exact_path(self, x0, samples, monodromy=False, steps=DEFAULT_STEPS,
                   order=DEFAULT_ORDER):
        """Path of a point fixed by every phi^t_H: constant, with tangent maps
        (Dphi^t_H)^{-1}.  ``None`` for other points."""
        times, traj, mp = evolve_path(self.base, x0, samples, monodromy=True, steps=steps,
                                      order=order)
        if np.abs(traj - traj[0]).max() > 1e-12:
            return None
        mats = np.linalg.inv(mp) if monodromy else None
        return times, traj, mats

    def exact_flow(self, x, t=1.0, inverse=False, monodromy=False, steps=DEFAULT_STEPS,
                   order=DEFAULT_ORDER):
        return evolve(self.base, x, t, inverse=not inverse, monodromy=monodromy,
                      steps=steps, order=order)

    def describe(self):
        return {"kind": "reversed", "base": self.base.describe(),
                "inner_steps": self.inner_steps, "inner_order": self.inner_order}


def reverse(system: Hamiltonian, inner_steps: int = 60, inner_order: int = 4) -> Hamiltonian:
    return Reversed(system, inner_steps, inner_order)


# -- time reparameterisation -----------------------------------------------------------------

@dataclass(frozen=True)
class TimeMap:
    """Monotone map alpha: [0,1] -> [0,1] with its derivative."""

    name: str
    func: Callable[[float], float]
    deriv: Callable[[float], float]

    def __call__(self, t):
        return self.func(t)


def identity_map() -> TimeMap:
    return TimeMap("identity", lambda t: t, lambda t: 1.0)


def smoothstep_map(flatten: bool = True) -> TimeMap:
    """3t^2 - 2t^3, composed with itself when ``flatten`` so that alpha' vanishes
    to higher order at both ends."""
    s = lambda t: t * t * (3.0 - 2.0 * t)
    ds = lambda t: 6.0 * t * (1.0 - t)
    if not flatten:
        return TimeMap("smoothstep", s, ds)
    return TimeMap("smoothstep2", lambda t: s(s(t)), lambda t: ds(s(t)) * ds(t))


def polynomial_map(coefficients) -> TimeMap:
    c = np.asarray(coefficients, dtype=float)
    dc = np.polynomial.polynomial.polyder(c)
    P = np.polynomial.polynomial.polyval
    return TimeMap(f"poly{list(c)}", lambda t: float(P(t, c)), lambda t: float(P(t, dc)))


def check_time_map(alpha: TimeMap, flatten: bool = False, samples: int = 2001) -> None:
    ts = np.linspace(0.0, 1.0, samples)
    a = np.array([alpha(t) for t in ts])
    da = np.array([alpha.deriv(t) for t in ts])
    if abs(a[0]) > 1e-12 or abs(a[-1] - 1.0) > 1e-12:
        raise ConfigError("time map must satisfy alpha(0)=0 and alpha(1)=1")
    if (da < -1e-12).any() or (np.diff(a) < -1e-12).any():
        bad = float(ts[np.argmin(da)])
        raise ConfigError(f"time map is not monotone (alpha' < 0 near t={bad:.4g})")
    if flatten and (abs(da[0]) > 1e-12 or abs(da[-1]) > 1e-12):
        raise ConfigError("flatten requested but alpha' does not vanish at the endpoints")


class Reparameterized(Hamiltonian):
    """H_alpha(t, x) = alpha'(t) H(alpha(t), x); phi^t_{H_alpha} = phi^{alpha(t)}_H."""

    def __init__(self, base: Hamiltonian, alpha: TimeMap):
        self.base, self.alpha = base, alpha
        self.dim, self.domain = base.dim, base.domain
        self.autonomous = alpha.name == "identity" and base.autonomous
        self.periodic = abs(alpha.deriv(0.0) - alpha.deriv(1.0)) < 1e-12 and (
            base.periodic or abs(alpha.deriv(0.0)) < 1e-12)
        if getattr(base, "exact_flow", None) is not None:
            self.exact_flow = self._exact_flow

    def _exact_flow(self, x, t=1.0, inverse=False, **kw):
        return evolve(self.base, x, self.alpha(t), inverse=inverse, **kw)

    def value(self, t, x):
        return self.alpha.deriv(t) * self.base.value(self.alpha(t), x)

    def gradient(self, t, x):
        return self.alpha.deriv(t) * self.base.gradient(self.alpha(t), x)

    def hessian(self, t, x):
        return self.alpha.deriv(t) * self.base.hessian(self.alpha(t), x)

    def field_and_jacobian(self, t, x):
        X, A = self.base.field_and_jacobian(self.alpha(t), x)
        c = self.alpha.deriv(t)
        return c * X, c * A

    def describe(self):
        return {"kind": "reparameterized", "alpha": self.alpha.name, "base": self.base.describe()}


def reparameterize(system: Hamiltonian, alpha: TimeMap | None = None,
                   flatten: bool = True) -> Hamiltonian:
    alpha = alpha or smoothstep_map(flatten)
    check_time_map(alpha, flatten=flatten and alpha.name != "identity")
    if alpha.name == "identity":
        return system
    return Reparameterized(system, alpha)


# -- rescaling ---------------------------------------------------------------------------------

class Rescaled(Hamiltonian):
    """eps H(eps t, x): runs the first eps time units of the flow in unit time."""

    def __init__(self, base: Hamiltonian, eps: float):
        self.base, self.eps = base, float(eps)
        self.dim, self.domain = base.dim, base.domain
        self.autonomous = base.autonomous
        self.periodic = base.autonomous
        if getattr(base, "exact_flow", None) is not None:
            self.exact_flow = self._exact_flow

    def _exact_flow(self, x, t=1.0, inverse=False, **kw):
        return evolve(self.base, x, self.eps * t, inverse=inverse, **kw)

    def value(self, t, x):
        return self.eps * self.base.value(self.eps * t, x)

    def gradient(self, t, x):
        return self.eps * self.base.gradient(self.eps * t, x)

    def hessian(self, t, x):
        return self.eps * self.base.hessian(self.eps * t, x)

    def field_and_jacobian(self, t, x):
        X, A = self.base.field_and_jacobian(self.eps * t, x)
        return self.eps * X, self.eps * A

    def describe(self):
        return {"kind": "rescaled", "eps": self.eps, "base": self.base.describe()}


def rescale(system: Hamiltonian, eps: float) -> Hamiltonian:
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    if eps == 1.0:
        return system
    return Rescaled(system, eps)


# -- caps ------------------------------------------------------------------------------------------

class Cap(Hamiltonian):
    """G(t, x) = H(t, P) + eps f_P(x).  Only f_P moves points."""

    def __init__(self, base: Hamiltonian, P, morse: Hamiltonian, eps: float):
        self.base, self.P, self.morse, self.eps = base, np.asarray(P, float), morse, float(eps)
        self.dim, self.domain = base.dim, base.domain
        self.autonomous = base.autonomous
        self.periodic = base.periodic
        self.threshold: float | None = None
        self.verification: dict = {}
        self._memo = _Memo(4096)

    def base_at_P(self, t):
        return self._memo.get(("P", float(t)), lambda: float(self.base.value(t, self.P)))

    def value(self, t, x):
        return self.base_at_P(t) + self.eps * self.morse.value(t, x)

    def gradient(self, t, x):
        return self.eps * self.morse.gradient(t, x)

    def hessian(self, t, x):
        return self.eps * self.morse.hessian(t, x)

    def field_and_jacobian(self, t, x):
        X, A = self.morse.field_and_jacobian(t, x)
        return self.eps * X, self.eps * A

    def describe(self):
        return {"kind": "cap", "P": self.P.tolist(), "eps": self.eps,
                "base": self.base.describe(), "morse": self.morse.describe()}


def default_morse_term(system: Hamiltonian, P) -> TermHamiltonian:
    if system.domain == "torus":
        return torus_morse_term(P, system.n)
    return chart_morse_term(P, system.n)


def sample_grid(system: Hamiltonian, center, resolution: int, radius: float = 0.5,
                include_center: bool = True) -> np.ndarray:
    """Regular grid on the torus (through ``center``) or on a chart box."""
    center = np.asarray(center, float)
    if system.domain == "torus":
        axis = np.arange(resolution) / resolution
    else:
        axis = np.linspace(-radius, radius, resolution)
        if not include_center or 0.0 not in axis:
            axis = np.union1d(axis, [0.0])
    mesh = np.meshgrid(*([axis] * system.dim), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1) + center
    if not include_center:
        pts = pts[np.abs(pts - center).max(axis=1) > 0]
    return pts


def time_samples(count: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, count)


def dominating_cap(system: Hamiltonian, P, f_P: Hamiltonian | None = None,
                   eps: float | None = None, resolution: int = 32, times: int = 11,
                   safety: float = 0.5, radius: float = 0.5) -> Cap:
    """Cap G(t,x) = H(t,P) + eps f_P(x) dominating ``system`` at ``P``.

    The largest admissible eps on the sample grid is
    ``min (H(t,P) - H(t,x)) / (-f_P(x))`` over samples x != P; it is stored as
    ``cap.threshold``.  With ``eps=None`` the cap uses ``safety * threshold``.
    """
    P = np.asarray(P, float)
    f_P = f_P or default_morse_term(system, P)
    if abs(float(f_P.value(0.0, P))) > 1e-12:
        raise ConfigError("f_P must vanish at P")
    pts = sample_grid(system, P, resolution, radius, include_center=False)
    fv = f_P.value(0.0, pts)
    if (fv >= 0).any():
        i = int(np.argmax(fv))
        raise ConfigError(f"f_P is not negative away from P (sample {pts[i].tolist()})")
    best, where = math.inf, None
    for t in time_samples(times):
        gap = float(system.value(t, P)) - system.value(t, pts)
        if (gap < 0).any():
            i = int(np.argmin(gap))
            raise DominationError(
                f"P is not a global maximum at t={t:.4g}: H(t,x) exceeds H(t,P) at {pts[i].tolist()}",
                {"t": float(t), "x": pts[i].tolist(), "gap": float(gap[i])})
        ratio = gap / (-fv)
        i = int(np.argmin(ratio))
        if ratio[i] < best:
            best, where = float(ratio[i]), {"t": float(t), "x": pts[i].tolist()}
    if eps is None:
        eps = safety * best
    elif eps >= best:
        raise DominationError(
            f"eps={eps:.6g} exceeds the verified threshold {best:.6g}; "
            f"violation at t={where['t']:.4g}, x={where['x']}", {**where, "threshold": best})
    cap = Cap(system, P, f_P, eps)
    cap.threshold = best
    cap.verification = {"threshold": best, "binding_sample": where, "eps": eps,
                        "resolution": resolution, "times": times}
    return cap


def dominated_cap(system: Hamiltonian, P, f_P: Hamiltonian | None = None,
                  scale: float | None = None, resolution: int = 32, times: int = 11,
                  safety: float = 2.0, radius: float = 0.5) -> Cap:
    """Cap K(t,x) = H(t,P) + c f_P(x) that ``system`` dominates at ``P``.

    Domination needs ``c >= (H(t,P) - H(t,x)) / (-f_P(x))`` for all samples;
    the largest such ratio is stored as ``cap.threshold``.  With ``scale=None``
    the cap uses ``safety * threshold``.  ``c`` must stay small enough for the
    flow of ``c f_P`` to have no nonconstant 1-periodic orbits; that is left to
    the orbit scan of the result.
    """
    P = np.asarray(P, float)
    f_P = f_P or default_morse_term(system, P)
    if abs(float(f_P.value(0.0, P))) > 1e-12:
        raise ConfigError("f_P must vanish at P")
    pts = sample_grid(system, P, resolution, radius, include_center=False)
    fv = f_P.value(0.0, pts)
    if (fv >= 0).any():
        i = int(np.argmax(fv))
        raise ConfigError(f"f_P is not negative away from P (sample {pts[i].tolist()})")
    worst, where = -math.inf, None
    for t in time_samples(times):
        gap = float(system.value(t, P)) - system.value(t, pts)
        ratio = gap / (-fv)
        i = int(np.argmax(ratio))
        if ratio[i] > worst:
            worst, where = float(ratio[i]), {"t": float(t), "x": pts[i].tolist()}
    required = max(worst, 0.0)
    if scale is None:
        scale = safety * required if required > 0 else 1e-3
    elif scale < required:
        raise DominationError(
            f"scale={scale:.6g} is below the required {required:.6g}; "
            f"violation at t={where['t']:.4g}, x={where['x']}", {**where, "threshold": required})
    cap = Cap(system, P, f_P, scale)
    cap.threshold = required
    cap.verification = {"threshold": required, "binding_sample": where, "scale": scale,
                        "resolution": resolution, "times": times}
    return cap


# -- bump perturbation --------------------------------------------------------------------------------

@dataclass(frozen=True)
class BumpProfile:
    """g(s) = amplitude * exp(1 - 1/(1 - s/rho^2)) on [0, rho^2), zero beyond.

    Smooth, nonnegative, strictly decreasing on [0, rho^2].
    """

    amplitude: float
    rho: float

    def _u(self, s):
        return np.clip(np.asarray(s, float) / self.rho ** 2, 0.0, 1.0)

    def __call__(self, s):
        u = self._u(s)
        inside = u < 1.0
        w = np.where(inside, 1.0 - u, 1.0)
        return np.where(inside, self.amplitude * np.exp(1.0 - 1.0 / w), 0.0)

    def deriv(self, s):
        u = self._u(s)
        inside = u < 1.0
        w = np.where(inside, 1.0 - u, 1.0)
        g = self.amplitude * np.exp(1.0 - 1.0 / w)
        return np.where(inside, -g / w ** 2 / self.rho ** 2, 0.0)

    def deriv2(self, s):
        u = self._u(s)
        inside = u < 1.0
        w = np.where(inside, 1.0 - u, 1.0)
        g = self.amplitude * np.exp(1.0 - 1.0 / w)
        # d/du [-g/w^2] = g/w^4 - 2 g / w^3
        return np.where(inside, (g / w ** 4 - 2.0 * g / w ** 3) / self.rho ** 4, 0.0)


def _chart_offset(domain, y, P):
    d = y - P
    if domain == "torus":
        d = d - np.round(d)
    return d


def rotation(t, s, bump: BumpProfile, dim: int) -> np.ndarray:
    """R(t, s) = exp(2 g'(s) t J): the time-t flow of g(|x|^2) on the sphere |x|^2 = s."""
    theta = 2.0 * np.asarray(bump.deriv(s)) * t
    n = dim // 2
    c, sn = np.cos(theta), np.sin(theta)
    R = np.zeros(np.shape(theta) + (dim, dim))
    for i in range(n):
        R[..., i, i] = c
        R[..., n + i, n + i] = c
        R[..., i, n + i] = sn
        R[..., n + i, i] = -sn
    return R


class BumpPerturbed(_LazyHamiltonian):
    """K'(t, x) = K(t, x) + g(|phi_K^{-t}(x) - P|^2) in the unit-scale chart at P.

    Its flow is phi^t_K o phi^t_g with phi^t_g(x) = P + R(t, |x-P|^2)(x-P);
    :meth:`exact_flow` evaluates that composition directly.
    """

    def __init__(self, base: Hamiltonian, bump: BumpProfile, P, inner_steps: int = 60,
                 inner_order: int = 4):
        self.base, self.bump, self.P = base, bump, np.asarray(P, float)
        self.dim, self.domain = base.dim, base.domain
        self.autonomous = False
        self.periodic = base.periodic
        self.inner_steps, self.inner_order = inner_steps, inner_order
        self._memo = _Memo()

    def _pullback(self, t, x, tangent):
        def compute():
            xx = np.reshape(np.asarray(x, float), (-1, self.dim))
            y, M = evolve(self.base, xx, t, inverse=True, monodromy=tangent,
                          steps=self.inner_steps, order=self.inner_order)
            shape = np.shape(x)
            return y.reshape(shape), (M.reshape(shape + (self.dim,)) if tangent else None)
        return self._memo.get(_key(t, x, "T" if tangent else "F"), compute)

    def bump_value(self, t, x):
        y, _ = self._pullback(t, x, False)
        d = _chart_offset(self.domain, y, self.P)
        return self.bump(np.sum(d * d, axis=-1))

    def value(self, t, x):
        return self.base.value(t, x) + self.bump_value(t, x)

    def gradient(self, t, x):
        y, M = self._pullback(t, x, True)
        d = _chart_offset(self.domain, y, self.P)
        s = np.sum(d * d, axis=-1)
        gb = (2.0 * self.bump.deriv(s))[..., None] * np.einsum("...ji,...j->...i", M, d)
        return self.base.gradient(t, x) + gb

    def inner_flow(self, x, t):
        """phi^t_g(x) and its derivative."""
        x = np.asarray(x, float)
        d = _chart_offset(self.domain, x, self.P)
        s = np.sum(d * d, axis=-1)
        R = rotation(t, s, self.bump, self.dim)
        Rd = np.einsum("...ij,...j->...i", R, d)
        J = symplectic_J(self.dim)
        JRd = Rd @ J.T
        coef = 4.0 * t * np.asarray(self.bump.deriv2(s))
        D = R + coef[..., None, None] * np.einsum("...i,...j->...ij", JRd, d)
        return x - d + Rd, D

    def exact_flow(self, x, t=1.0, inverse=False, monodromy=False, steps=DEFAULT_STEPS,
                   order=DEFAULT_ORDER):
        """phi^t_K o phi^t_g (or its inverse), optionally with the derivative."""
        if inverse:
            y, DK = evolve(self.base, x, t, inverse=True, monodromy=monodromy,
                           steps=steps, order=order)
            z, Dg = self.inner_flow(y, -t)
            return z, (Dg @ DK if monodromy else None)
        z, Dg = self.inner_flow(x, t)
        y, DK = evolve(self.base, z, t, monodromy=monodromy, steps=steps, order=order)
        return y, (DK @ Dg if monodromy else None)

    def exact_path(self, x0, samples, monodromy=False, steps=DEFAULT_STEPS,
                   order=DEFAULT_ORDER):
        """Path of a point that every phi^t_g fixes (P itself, or a point outside
        the bump): the K-trajectory, with tangent maps DK(t) R(t, s).  The
        pullbacks along the path are known exactly and are cached for the
        action quadrature.  ``None`` for other points."""
        x0 = np.asarray(x0, float)
        d = _chart_offset(self.domain, x0, self.P)
        s = float(d @ d)
        if not (s == 0.0 or s >= self.bump.rho ** 2):
            return None
        times, traj, mp = evolve_path(self.base, x0, samples, monodromy=True, steps=steps,
                                      order=order)
        for t, y, M in zip(times, traj, mp):
            self._memo.put(_key(t, y, "F"), (x0.copy(), None))
            self._memo.put(_key(t, y, "T"), (x0.copy(), np.linalg.inv(M)))
        mats = None
        if monodromy:
            mats = mp @ np.array([self.inner_flow(x0, float(t))[1] for t in times])
        return times, traj, mats

    def action_shift(self) -> float:
        """Increase of the action of P: the integral of g(0) over [0,1]."""
        return float(self.bump(0.0))

    def describe(self):
        return {"kind": "bump_perturbed", "P": self.P.tolist(),
                "amplitude": self.bump.amplitude, "rho": self.bump.rho,
                "base": self.base.describe()}


def bump_perturb(K: Hamiltonian, P, rho: float, amplitude: float = 1e-3,
                 chart_radius: float = 0.25, check_samples: int = 16,
                 check_times: int = 11, inner_steps: int = 60) -> BumpPerturbed:
    """K + g(|phi_K^{-t}(x) - P|^2) after checking phi_K^{-t}(B_rho(P)) stays in the chart."""
    P = np.asarray(P, float)
    bump = BumpProfile(amplitude, rho)
    dim = K.dim
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(check_samples, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    ball = P + rho * dirs
    for t in time_samples(check_times)[1:]:
        y, _ = evolve(K, ball, t, inverse=True, steps=inner_steps)
        d = _chart_offset(K.domain, y, P) if K.domain == "torus" else y - P
        if np.linalg.norm(d, axis=1).max() >= chart_radius:
            raise ChartError(f"phi_K^-t(B_rho(P)) leaves the chart of radius {chart_radius} "
                             f"by t={t:.4g}", float(t))
    return BumpPerturbed(K, bump, P, inner_steps)


# -- normalized distance -------------------------------------------------------------------------------

def normalized_distance(K: Hamiltonian, x, P=None, steps: int | None = None,
                        rtol: float = 1e-9) -> np.ndarray:
    """D_K at chart point(s) ``x`` (offsets from ``P``).

    Great-circle distance between x/|x| and phi^1_K(x)/|phi^1_K(x)| divided by
    pi, when the time-1 map preserves |x| to ``rtol``; 1 otherwise.
    """
    P = np.zeros(K.dim) if P is None else np.asarray(P, float)
    x = np.asarray(x, float)
    y, _ = evolve(K, P + x, 1.0, steps=steps or DEFAULT_STEPS)
    d = _chart_offset(K.domain, y, P) if K.domain == "torus" else y - P
    rx = np.linalg.norm(x, axis=-1)
    ry = np.linalg.norm(d, axis=-1)
    same = np.abs(rx - ry) <= rtol * np.maximum(rx, 1e-300)
    cosang = np.sum(x * d, axis=-1) / np.maximum(rx * ry, 1e-300)
    ang = np.arccos(np.clip(cosang, -1.0, 1.0)) / math.pi
    return np.where(same, ang, 1.0)


def distance_scan(K: Hamiltonian, rho: float, P=None, resolution: int = 9,
                  steps: int | None = None, floor: float = 1e-8) -> dict:
    """Infimum of D_K over a grid in B_rho(P) minus the centre."""
    dim = K.dim
    axis = np.linspace(-rho, rho, resolution)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    r = np.linalg.norm(pts, axis=1)
    pts = pts[(r > 0) & (r <= rho)]
    D = normalized_distance(K, pts, P, steps)
    i = int(np.argmin(D))
    inf = float(D[i])
    return {"infimum": inf, "argmin": pts[i].tolist(), "samples": int(len(pts)),
            "bounded_away_from_zero": inf > floor}


# -- normalisation -------------------------------------------------------------------------------------

class MeanSubtracted(Hamiltonian):
    """H minus its spatial mean at each time (periodic trapezoid on a grid)."""

    def __init__(self, base: Hamiltonian, resolution: int = 64):
        self.base, self.resolution = base, resolution
        self.dim, self.domain = base.dim, base.domain
        self.autonomous, self.periodic = base.autonomous, base.periodic
        self.normalized = True
        self._grid = sample_grid(base, np.zeros(base.dim), resolution)
        if getattr(base, "exact_flow", None) is not None:
            self.exact_flow = base.exact_flow
        self._memo = _Memo(4096)

    def mean(self, t):
        return self._memo.get(("mean", float(t)),
                              lambda: float(np.mean(self.base.value(t, self._grid))))

    def value(self, t, x):
        return self.base.value(t, x) - self.mean(t)

    def gradient(self, t, x):
        return self.base.gradient(t, x)

    def hessian(self, t, x):
        return self.base.hessian(t, x)

    def field_and_jacobian(self, t, x):
        return self.base.field_and_jacobian(t, x)

    def describe(self):
        return {"kind": "mean_subtracted", "resolution": self.resolution,
                "base": self.base.describe()}


def normalize(system: Hamiltonian, resolution: int = 64) -> Hamiltonian:
    """Subtract the spatial mean per time slice (closed form for term systems)."""
    if system.domain != "torus":
        raise ConfigError("normalisation needs the torus (a chart has infinite volume)")
    if isinstance(system, TermHamiltonian):
        keep = [t for t in system.terms
                if t.kind != "constant" and not (t.kind == "cos" and not any(t.k))]
        return system.with_terms(keep, normalized=True)
    return MeanSubtracted(system, resolution)


def spatial_mean(system: Hamiltonian, t: float, resolution: int = 64) -> float:
    grid = sample_grid(system, np.zeros(system.dim), resolution)
    return float(np.mean(system.value(t, grid)))
