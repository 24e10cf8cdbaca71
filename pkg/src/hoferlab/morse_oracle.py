"""Filtered Morse complexes of sampled functions on the 2-torus.

The periodic N x N grid is treated as a cubical complex (vertices, edges,
squares).  A discrete gradient is built one lower star at a time
(Robins-Wood-Sheppard), with ties in the sampled values broken by the
lexicographic grid index.  Critical cells generate the complex; the boundary
counts gradient paths mod 2 and each generator is filtered by its value.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .complex_core import Chain, ChainError, ComplexError, GradedComplex, classify_chain, require_valid
from .dynamics.hamiltonians import Hamiltonian, load_hamiltonian
from .filtration import FiltrationMap, validate_filtration


class MorseError(ValueError):
    """The sampled function does not give isolated critical cells."""


@dataclass(frozen=True)
class SampledFunction:
    """Values f[i, j] = f(i/N, j/N) on the periodic grid (q along axis 0)."""

    values: np.ndarray
    source: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise MorseError(f"expected a square grid, got shape {v.shape}")
        if v.shape[0] < 8:
            raise MorseError("resolution must be at least 8")
        if not np.isfinite(v).all():
            raise MorseError("grid contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    @classmethod
    def from_hamiltonian(cls, H: Hamiltonian, resolution: int = 64) -> "SampledFunction":
        if H.domain != "torus" or H.n != 1:
            raise MorseError("the Morse oracle needs a function on the 2-torus")
        if not H.autonomous:
            raise MorseError("the Morse oracle needs an autonomous function")
        ax = np.arange(resolution) / resolution
        Q, P = np.meshgrid(ax, ax, indexing="ij")
        vals = H.value(0.0, np.stack([Q, P], axis=-1))
        return cls(vals, {"hamiltonian": H.describe(), "resolution": resolution})

    @classmethod
    def from_file(cls, path, resolution: int = 64) -> "SampledFunction":
        """A Hamiltonian config, a raw grid JSON ``{"values": [[...], ...]}``, or
        a ``.npy`` array."""
        path = str(path)
        if path.endswith(".npy"):
            return cls(np.load(path), {"file": path})
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ComplexError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        if "values" in data and "terms" not in data:
            return cls(np.asarray(data["values"], float), {"file": path})
        return cls.from_hamiltonian(load_hamiltonian(path), resolution)


# -- cubical cells -------------------------------------------------------------------------
# vertex ('v', i, j); edge ('h', i, j) = (i,j)-(i+1,j), ('e', i, j) = (i,j)-(i,j+1);
# square ('s', i, j) spanned by (i,j), (i+1,j+1).

def _cell_id(cell) -> str:
    kind, i, j = cell
    return {"v": "v", "h": "eq", "e": "ep", "s": "s"}[kind] + f"_{i}_{j}"


def _dim(cell) -> int:
    return {"v": 0, "h": 1, "e": 1, "s": 2}[cell[0]]


class _Grid:
    def __init__(self, f: SampledFunction):
        self.N = f.resolution
        self.f = f.values
        N = self.N
        flat = self.f.ravel()
        # rank of every vertex in the total order (value, lexicographic index)
        order = np.lexsort((np.arange(N * N), flat))
        rank = np.empty(N * N, int)
        rank[order] = np.arange(N * N)
        self.rank = rank.reshape(N, N)

    def verts(self, cell):
        kind, i, j = cell
        N = self.N
        if kind == "v":
            return ((i, j),)
        if kind == "h":
            return ((i, j), ((i + 1) % N, j))
        if kind == "e":
            return ((i, j), (i, (j + 1) % N))
        return ((i, j), ((i + 1) % N, j), (i, (j + 1) % N), ((i + 1) % N, (j + 1) % N))

    def key(self, cell):
        """Lower-star comparison key: vertex ranks sorted decreasingly."""
        return tuple(sorted((self.rank[v] for v in self.verts(cell)), reverse=True))

    def value(self, cell):
        return max(float(self.f[v]) for v in self.verts(cell))

    def faces(self, cell):
        kind, i, j = cell
        N = self.N
        if kind == "h":
            return [("v", i, j), ("v", (i + 1) % N, j)]
        if kind == "e":
            return [("v", i, j), ("v", i, (j + 1) % N)]
        if kind == "s":
            return [("h", i, j), ("h", i, (j + 1) % N), ("e", i, j), ("e", (i + 1) % N, j)]
        return []

    def lower_star(self, v):
        i, j = v
        N = self.N
        r = self.rank[v]
        edges = [("h", i, j), ("h", (i - 1) % N, j), ("e", i, j), ("e", i, (j - 1) % N)]
        squares = [("s", i, j), ("s", (i - 1) % N, j), ("s", i, (j - 1) % N),
                   ("s", (i - 1) % N, (j - 1) % N)]
        out = [("v", i, j)]
        for c in edges + squares:
            if all(self.rank[u] <= r for u in self.verts(c)):
                out.append(c)
        return out


def _discrete_gradient(g: _Grid):
    """ProcessLowerStars: returns (pairs dict cell -> partner, critical cells)."""
    pair: dict = {}
    critical: list = []
    N = g.N
    for i in range(N):
        for j in range(N):
            v = ("v", i, j)
            L = g.lower_star((i, j))
            if len(L) == 1:
                critical.append(v)
                continue
            Lset = set(L)
            classified = {v}
            edges = [c for c in L if _dim(c) == 1]
            delta = min(edges, key=g.key)
            pair[v], pair[delta] = delta, v
            classified.add(delta)

            def unpaired(c):
                return [fc for fc in g.faces(c) if fc in Lset and fc not in classified]

            def cofaces(c):
                return [s for s in L if _dim(s) == _dim(c) + 1 and c in g.faces(s)]

            pq0, pq1 = [], []
            for c in L:
                if c in classified:
                    continue
                if _dim(c) == 1:
                    heapq.heappush(pq0, (g.key(c), c))
            for s in cofaces(delta):
                if len(unpaired(s)) == 1:
                    heapq.heappush(pq1, (g.key(s), s))
            while pq0 or pq1:
                while pq1:
                    _, a = heapq.heappop(pq1)
                    if a in classified:
                        continue
                    free = unpaired(a)
                    if not free:
                        heapq.heappush(pq0, (g.key(a), a))
                        continue
                    b = free[0]
                    pair[a], pair[b] = b, a
                    classified.update((a, b))
                    for c in cofaces(a) + cofaces(b):
                        if c not in classified and len(unpaired(c)) == 1:
                            heapq.heappush(pq1, (g.key(c), c))
                if pq0:
                    _, c = heapq.heappop(pq0)
                    if c in classified:
                        continue
                    critical.append(c)
                    classified.add(c)
                    for s in cofaces(c):
                        if s not in classified and len(unpaired(s)) == 1:
                            heapq.heappush(pq1, (g.key(s), s))
            if len(classified) != len(L):  # pragma: no cover - algorithmic invariant
                raise MorseError(f"lower star of vertex {(i, j)} left unclassified cells")
    return pair, critical


def _boundary(g: _Grid, pair, critical):
    crit = set(critical)

    @lru_cache(maxsize=None)
    def flow_from(cell, came_from):
        """Critical faces reached (mod 2) by gradient paths leaving ``cell``
        through its faces other than ``came_from``."""
        acc: dict = {}
        for fc in g.faces(cell):
            if fc == came_from:
                continue
            if fc in crit:
                acc[fc] = acc.get(fc, 0) ^ 1
                continue
            up = pair.get(fc)
            if up is None or _dim(up) < _dim(fc) or up == cell:
                continue
            for c, m in flow_from(up, fc).items():
                acc[c] = acc.get(c, 0) ^ m
        return {c: 1 for c, m in acc.items() if m}

    out = {}
    for c in critical:
        if _dim(c) > 0:
            out[c] = sorted(flow_from(c, None))
    return out


@dataclass
class MorseComplex:
    complex: GradedComplex
    filtration: FiltrationMap
    cells: dict  # id -> {"dim", "vertex", "value"}

    def to_dict(self) -> dict:
        return {"complex": self.complex.to_dict(), "filtration": self.filtration.to_dict(),
                "cells": self.cells}


def build_morse_complex(f: SampledFunction) -> MorseComplex:
    """Discrete Morse complex and action-like filtration of a sampled torus function."""
    g = _Grid(f)
    pair, critical = _discrete_gradient(g)
    N = g.N
    for c in critical:
        top = max(g.verts(c), key=lambda u: g.rank[u])
        i, j = top
        val = g.f[top]
        for u in (((i + 1) % N, j), ((i - 1) % N, j), (i, (j + 1) % N), (i, (j - 1) % N)):
            if g.f[u] == val:
                raise MorseError(
                    f"critical cell {_cell_id(c)} sits on a plateau (grid point {top} ties with "
                    f"{u}); critical points are not isolated at resolution {N}, try a finer "
                    "grid or a Morse function")
    bnd = _boundary(g, pair, critical)
    cells = sorted(critical, key=_cell_id)
    basis = [(_cell_id(c), _dim(c)) for c in cells]
    boundary = {_cell_id(c): [_cell_id(x) for x in bnd[c]] for c in cells if bnd.get(c)}
    cx = GradedComplex.build(basis, boundary)
    filt = FiltrationMap({_cell_id(c): g.value(c) for c in cells})
    require_valid(cx)
    bad = validate_filtration(cx, filt)
    if bad:
        raise MorseError(f"critical values do not strictly decrease along the boundary "
                         f"({bad[0]}); refine the grid")
    info = {_cell_id(c): {"dim": _dim(c),
                          "vertex": list(max(g.verts(c), key=lambda u: g.rank[u])),
                          "value": g.value(c)} for c in cells}
    return MorseComplex(cx, filt, info)


def fundamental_cycle(cx: GradedComplex) -> Chain:
    """Sum of all top-degree generators, checked to be a nontrivial cycle."""
    top = max(cx.degrees())
    ids = [b for b, d in cx.basis if d == top]
    chain = Chain.of(cx, ids)
    kind = classify_chain(cx, chain).kind
    if kind == "not-cycle":
        raise ChainError("sum of top-degree generators is not a cycle; the complex is corrupt")
    if kind == "boundary":
        raise ChainError("sum of top-degree generators is a boundary")
    return chain
