"""Time-dependent Hamiltonians on flat tori and on R^2n charts.

Coordinates are ``x = (q_1..q_n, p_1..p_n)`` with ``omega = sum dp_i ^ dq_i``.
The vector field solves ``i_X omega = -dH``, which gives Hamilton's equations
``q' = H_p, p' = -H_q``, i.e. ``X = J grad H`` with ``J = [[0, I], [-I, 0]]``.  The torus is ``R^2n / Z^2n``; functions are
evaluated on the universal cover so trajectories can be lifted.

Every Hamiltonian evaluates on batches: ``x`` has shape ``(..., 2n)`` and
``t`` is a scalar.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    """Malformed Hamiltonian description."""


def symplectic_J(dim: int) -> np.ndarray:
    n = dim // 2
    J = np.zeros((dim, dim))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    return J


# -- time profiles ---------------------------------------------------------------

def _smoothstep(t):
    return t * t * (3.0 - 2.0 * t)


@dataclass(frozen=True)
class TimeProfile:
    """Scalar coefficient c(t).

    kinds: ``constant`` (value), ``polynomial`` (coefficients, low order first),
    ``fourier`` (a0, cos, sin: a0 + sum a_k cos 2 pi k t + b_k sin 2 pi k t),
    ``smoothstep`` (start, end: start + (end-start)(3t^2 - 2t^3) on [0,1]),
    ``piecewise_linear`` (knots: [[t, v], ...], constant outside).
    """

    kind: str = "constant"
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        p = dict(self.params)
        if self.kind == "constant":
            p.setdefault("value", 1.0)
        elif self.kind == "polynomial":
            p["coefficients"] = tuple(float(c) for c in p.get("coefficients", (0.0,)))
        elif self.kind == "fourier":
            p.setdefault("a0", 0.0)
            p["cos"] = tuple(float(c) for c in p.get("cos", ()))
            p["sin"] = tuple(float(c) for c in p.get("sin", ()))
        elif self.kind == "smoothstep":
            p.setdefault("start", 0.0)
            p.setdefault("end", 1.0)
        elif self.kind == "piecewise_linear":
            knots = tuple((float(a), float(b)) for a, b in p.get("knots", ()))
            if len(knots) < 1 or any(k1[0] >= k2[0] for k1, k2 in zip(knots, knots[1:])):
                raise ConfigError("piecewise_linear needs strictly increasing knot times")
            p["knots"] = knots
        else:
            raise ConfigError(f"unknown time profile {self.kind!r}")
        object.__setattr__(self, "params", p)

    def __call__(self, t: float) -> float:
        p = self.params
        if self.kind == "constant":
            return float(p["value"])
        if self.kind == "polynomial":
            return float(np.polynomial.polynomial.polyval(t, p["coefficients"]))
        if self.kind == "fourier":
            v = float(p["a0"])
            for k, a in enumerate(p["cos"], 1):
                v += a * math.cos(TWO_PI * k * t)
            for k, b in enumerate(p["sin"], 1):
                v += b * math.sin(TWO_PI * k * t)
            return v
        if self.kind == "smoothstep":
            s = min(max(t, 0.0), 1.0)
            return p["start"] + (p["end"] - p["start"]) * _smoothstep(s)
        knots = p["knots"]
        ts = [k[0] for k in knots]
        vs = [k[1] for k in knots]
        return float(np.interp(t, ts, vs))

    @property
    def is_constant(self) -> bool:
        if self.kind == "constant":
            return True
        if self.kind == "polynomial":
            return all(c == 0 for c in self.params["coefficients"][1:])
        if self.kind == "fourier":
            return not any(self.params["cos"]) and not any(self.params["sin"])
        if self.kind == "smoothstep":
            return self.params["start"] == self.params["end"]
        return len({v for _, v in self.params["knots"]}) == 1

    def scaled(self, factor: float) -> "TimeProfile":
        p = dict(self.params)
        if self.kind == "constant":
            p["value"] = p["value"] * factor
        elif self.kind == "polynomial":
            p["coefficients"] = [c * factor for c in p["coefficients"]]
        elif self.kind == "fourier":
            p["a0"] *= factor
            p["cos"] = [c * factor for c in p["cos"]]
            p["sin"] = [c * factor for c in p["sin"]]
        elif self.kind == "smoothstep":
            p["start"] *= factor
            p["end"] *= factor
        else:
            p["knots"] = [(a, b * factor) for a, b in p["knots"]]
        return TimeProfile(self.kind, p)

    def to_dict(self) -> dict:
        d = {"type": self.kind}
        for k, v in self.params.items():
            if isinstance(v, tuple):
                v = [list(x) if isinstance(x, tuple) else x for x in v]
            d[k] = v
        return d

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "TimeProfile":
        if d is None:
            return cls()
        d = dict(d)
        kind = d.pop("type", "constant")
        return cls(kind, d)


CONSTANT_ONE = TimeProfile()


# -- base class ------------------------------------------------------------------------

class Hamiltonian:
    """Interface shared by every Hamiltonian.

    Subclasses implement ``value``, ``gradient`` and ``hessian``.
    """

    dim: int
    domain: str  # "torus" | "chart"
    autonomous: bool = False
    periodic: bool = True

    @property
    def n(self) -> int:
        return self.dim // 2

    def value(self, t: float, x) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, t: float, x) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, t: float, x) -> np.ndarray:
        raise NotImplementedError

    def vector_field(self, t: float, x) -> np.ndarray:
        g = self.gradient(t, x)
        n = self.n
        return np.concatenate([g[..., n:], -g[..., :n]], axis=-1)

    def vector_field_jacobian(self, t: float, x) -> np.ndarray:
        S = self.hessian(t, x)
        n = self.n
        return np.concatenate([S[..., n:, :], -S[..., :n, :]], axis=-2)

    def field_and_jacobian(self, t: float, x):
        return self.vector_field(t, x), self.vector_field_jacobian(t, x)

    def value_and_gradient(self, t: float, x):
        return self.value(t, x), self.gradient(t, x)

    def describe(self) -> dict:
        return {"kind": type(self).__name__}


# -- term Hamiltonians ------------------------------------------------------------------

@dataclass(frozen=True)
class Term:
    """One summand.

    ``cos``: amplitude * cos(2 pi k.x + phase) (torus and chart);
    ``constant``: amplitude;
    ``quadratic``: amplitude * 0.5 x^T S x (chart only);
    ``linear``: amplitude * b.x (chart only).
    Each term is multiplied by its time profile.
    """

    kind: str
    amplitude: float = 1.0
    k: tuple[float, ...] = ()
    phase: float = 0.0
    matrix: tuple[tuple[float, ...], ...] = ()
    vector: tuple[float, ...] = ()
    profile: TimeProfile | None = None

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"type": self.kind, "amplitude": self.amplitude}
        if self.kind == "cos":
            d["k"] = list(self.k)
            d["phase"] = self.phase
        elif self.kind == "quadratic":
            d["matrix"] = [list(r) for r in self.matrix]
        elif self.kind == "linear":
            d["vector"] = list(self.vector)
        if self.profile is not None:
            d["profile"] = self.profile.to_dict()
        return d


def _term_from_dict(d: Mapping, dim: int) -> Term:
    d = dict(d)
    kind = d.get("type")
    prof = TimeProfile.from_dict(d["profile"]) if "profile" in d else None
    amp = float(d.get("amplitude", 1.0))
    if kind in ("cos", "sin"):
        k = tuple(float(v) for v in d.get("k", ()))
        if len(k) != dim:
            raise ConfigError(f"trig term wave vector must have length {dim}")
        phase = float(d.get("phase", 0.0)) - (math.pi / 2 if kind == "sin" else 0.0)
        return Term("cos", amp, k=k, phase=phase, profile=prof)
    if kind == "constant":
        return Term("constant", float(d.get("value", amp)), profile=prof)
    if kind == "rotation":
        speed = float(d.get("speed", 1.0))
        return Term("quadratic", speed, matrix=tuple(tuple(r) for r in np.eye(dim)), profile=prof)
    if kind == "quadratic":
        S = np.asarray(d.get("matrix"), dtype=float)
        if S.shape != (dim, dim):
            raise ConfigError(f"quadratic term needs a {dim}x{dim} matrix")
        S = 0.5 * (S + S.T)
        return Term("quadratic", amp, matrix=tuple(tuple(r) for r in S), profile=prof)
    if kind == "linear":
        b = tuple(float(v) for v in d.get("vector", ()))
        if len(b) != dim:
            raise ConfigError(f"linear term needs a vector of length {dim}")
        return Term("linear", amp, vector=b, profile=prof)
    raise ConfigError(f"unknown term type {kind!r}")


class TermHamiltonian(Hamiltonian):
    """Finite sum of closed-form terms with time-profile coefficients."""

    def __init__(self, terms: Sequence[Term], n: int = 1, domain: str = "torus",
                 time_profile: TimeProfile | None = None, normalized: bool = False,
                 periodic: bool | None = None):
        if domain not in ("torus", "chart"):
            raise ConfigError(f"unknown domain {domain!r}")
        self.dim = 2 * int(n)
        self.domain = domain
        self.terms = tuple(terms)
        self.time_profile = time_profile or CONSTANT_ONE
        self.normalized = bool(normalized)
        for t in self.terms:
            if domain == "torus" and t.kind in ("quadratic", "linear"):
                raise ConfigError(f"{t.kind} terms are not periodic; use a chart domain")
            if t.kind == "cos" and domain == "torus":
                if any(abs(v - round(v)) > 0 for v in t.k):
                    raise ConfigError("torus wave vectors must be integers")
        profs = [self.time_profile] + [t.profile for t in self.terms if t.profile is not None]
        self.autonomous = all(p.is_constant for p in profs)
        if periodic is None:
            periodic = all(abs(p(0.0) - p(1.0)) < 1e-12 for p in profs)
        elif periodic:
            for p in profs:
                if abs(p(0.0) - p(1.0)) > 1e-12:
                    raise ConfigError("periodic flag set but a time profile differs at t=0 and t=1")
        self.periodic = bool(periodic)
        self._pack()

    def _pack(self):
        cos = [t for t in self.terms if t.kind == "cos"]
        self._cos_K = np.array([t.k for t in cos], dtype=float).reshape(len(cos), self.dim)
        self._cos_phase = np.array([t.phase for t in cos])
        self._cos_amp = np.array([t.amplitude for t in cos])
        self._cos_prof = [t.profile for t in cos]
        self._const = [(t.amplitude, t.profile) for t in self.terms if t.kind == "constant"]
        quad = [t for t in self.terms if t.kind == "quadratic"]
        self._quad_S = np.array([np.array(t.matrix) * t.amplitude for t in quad]).reshape(
            len(quad), self.dim, self.dim)
        self._quad_prof = [t.profile for t in quad]
        lin = [t for t in self.terms if t.kind == "linear"]
        self._lin_b = np.array([np.array(t.vector) * t.amplitude for t in lin]).reshape(
            len(lin), self.dim)
        self._lin_prof = [t.profile for t in lin]

    def _coef(self, profs, t):
        g = self.time_profile(t)
        return np.array([g * (1.0 if p is None else p(t)) for p in profs])

    def value(self, t, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        if len(self._cos_amp):
            arg = TWO_PI * (x @ self._cos_K.T) + self._cos_phase
            out = out + np.cos(arg) @ (self._cos_amp * self._coef(self._cos_prof, t))
        g = self.time_profile(t)
        for a, p in self._const:
            out = out + a * g * (1.0 if p is None else p(t))
        if len(self._quad_S):
            S = np.einsum("k,kij->ij", self._coef(self._quad_prof, t), self._quad_S)
            out = out + 0.5 * np.einsum("...i,ij,...j->...", x, S, x)
        if len(self._lin_b):
            b = self._coef(self._lin_prof, t) @ self._lin_b
            out = out + x @ b
        return out

    def gradient(self, t, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        if len(self._cos_amp):
            arg = TWO_PI * (x @ self._cos_K.T) + self._cos_phase
            w = -np.sin(arg) * (self._cos_amp * self._coef(self._cos_prof, t))
            out = out + TWO_PI * (w @ self._cos_K)
        if len(self._quad_S):
            S = np.einsum("k,kij->ij", self._coef(self._quad_prof, t), self._quad_S)
            out = out + x @ S
        if len(self._lin_b):
            out = out + self._coef(self._lin_prof, t) @ self._lin_b
        return out

    def hessian(self, t, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (self.dim,))
        if len(self._cos_amp):
            arg = TWO_PI * (x @ self._cos_K.T) + self._cos_phase
            w = -np.cos(arg) * (self._cos_amp * self._coef(self._cos_prof, t))
            KK = np.einsum("ki,kj->kij", self._cos_K, self._cos_K) * TWO_PI ** 2
            out = out + np.einsum("...k,kij->...ij", w, KK)
        if len(self._quad_S):
            S = np.einsum("k,kij->ij", self._coef(self._quad_prof, t), self._quad_S)
            out = out + S
        return out

    def field_and_jacobian(self, t, x):
        x = np.asarray(x, dtype=float)
        g = np.zeros(x.shape)
        S = np.zeros(x.shape + (self.dim,))
        if len(self._cos_amp):
            arg = TWO_PI * (x @ self._cos_K.T) + self._cos_phase
            c = self._cos_amp * self._coef(self._cos_prof, t)
            g = g + TWO_PI * ((-np.sin(arg) * c) @ self._cos_K)
            KK = np.einsum("ki,kj->kij", self._cos_K, self._cos_K) * TWO_PI ** 2
            S = S + np.einsum("...k,kij->...ij", -np.cos(arg) * c, KK)
        if len(self._quad_S):
            Q = np.einsum("k,kij->ij", self._coef(self._quad_prof, t), self._quad_S)
            g = g + x @ Q
            S = S + Q
        if len(self._lin_b):
            g = g + self._coef(self._lin_prof, t) @ self._lin_b
        n = self.n
        X = np.concatenate([g[..., n:], -g[..., :n]], axis=-1)
        A = np.concatenate([S[..., n:, :], -S[..., :n, :]], axis=-2)
        return X, A

    # -- config -------------------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "domain": {"type": self.domain, "n": self.n},
            "terms": [t.to_dict() for t in self.terms],
            "time_profile": self.time_profile.to_dict(),
            "normalized": self.normalized,
            "periodic": self.periodic,
        }

    def describe(self) -> dict:
        return {"kind": "terms", **self.to_dict()}

    def with_terms(self, terms, normalized=None) -> "TermHamiltonian":
        return TermHamiltonian(terms, self.n, self.domain, self.time_profile,
                               self.normalized if normalized is None else normalized)


def hamiltonian_from_dict(data: Mapping) -> TermHamiltonian:
    try:
        dom = data["domain"]
        n = int(dom.get("n", 1))
        dtype = dom.get("type", "torus")
        terms_raw = data["terms"]
    except (KeyError, TypeError, AttributeError) as exc:
        raise ConfigError(f"malformed Hamiltonian config: {exc}") from None
    if n < 1:
        raise ConfigError("n must be positive")
    terms = []
    for pos, td in enumerate(terms_raw):
        try:
            terms.append(_term_from_dict(td, 2 * n))
        except ConfigError as exc:
            raise ConfigError(f"terms[{pos}]: {exc}") from None
    prof = TimeProfile.from_dict(data.get("time_profile"))
    return TermHamiltonian(terms, n, dtype, prof, bool(data.get("normalized", False)),
                           data.get("periodic"))


def load_hamiltonian(path) -> TermHamiltonian:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return hamiltonian_from_dict(data)


# -- convenience constructors ------------------------------------------------------------

def cos_sum(eps: float = 1.0, n: int = 1, weights: Sequence[float] | None = None,
            profile: TimeProfile | None = None) -> TermHamiltonian:
    """eps * sum_i w_i (cos 2 pi q_i + cos 2 pi p_i) on T^2n (weights per coordinate)."""
    dim = 2 * n
    weights = list(weights) if weights is not None else [1.0] * dim
    terms = []
    for i in range(dim):
        k = [0.0] * dim
        k[i] = 1.0
        terms.append(Term("cos", eps * weights[i], k=tuple(k)))
    return TermHamiltonian(terms, n, "torus", profile)


def planar_rotation(speed: float, n: int = 1) -> TermHamiltonian:
    """(a/2)|x|^2 on the R^2n chart."""
    return TermHamiltonian([Term("quadratic", speed, matrix=tuple(tuple(r) for r in np.eye(2 * n)))],
                           n, "chart")


def zero_hamiltonian(n: int = 1, domain: str = "torus") -> TermHamiltonian:
    return TermHamiltonian([], n, domain)


def torus_morse_term(P, n: int = 1) -> TermHamiltonian:
    """sum_i cos 2 pi (x_i - P_i) - 2n: unique maximum 0 at P, Morse on T^2n."""
    P = np.asarray(P, dtype=float)
    dim = 2 * n
    terms = []
    for i in range(dim):
        k = [0.0] * dim
        k[i] = 1.0
        terms.append(Term("cos", 1.0, k=tuple(k), phase=-TWO_PI * P[i]))
    terms.append(Term("constant", -float(dim)))
    return TermHamiltonian(terms, n, "torus")


def chart_morse_term(P, n: int = 1) -> TermHamiltonian:
    """-|x - P|^2 / 2 on a chart."""
    P = np.asarray(P, dtype=float)
    dim = 2 * n
    return TermHamiltonian([
        Term("quadratic", -1.0, matrix=tuple(tuple(r) for r in np.eye(dim))),
        Term("linear", 1.0, vector=tuple(P)),
        Term("constant", -0.5 * float(P @ P)),
    ], n, "chart")
