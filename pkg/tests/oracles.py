"""Brute-force reference computations for small filtered complexes.

Everything here works on plain Python sets of basis ids and enumerates whole
subspaces, so it shares no code with the bitset eliminations under test.
"""

from __future__ import annotations

import itertools
import random

BOTTOM = float("-inf")  # value of the zero chain, below every real


def boundary_of(boundary: dict, chain) -> frozenset:
    out = set()
    for b in chain:
        out ^= set(boundary.get(b, ()))
    return frozenset(out)


def chains(ids):
    for r in range(len(ids) + 1):
        for combo in itertools.combinations(ids, r):
            yield frozenset(combo)


def in_degree(basis, k):
    return [b for b, d in basis if d == k]


def boundary_space(basis, boundary, k) -> set:
    """All boundaries of degree k (images of every degree k+1 chain)."""
    return {boundary_of(boundary, c) for c in chains(in_degree(basis, k + 1))}


def cycle_space(basis, boundary, k) -> set:
    return {c for c in chains(in_degree(basis, k)) if not boundary_of(boundary, c)}


def squares_to_zero(basis, boundary) -> bool:
    return all(not boundary_of(boundary, boundary.get(b, ())) for b, _ in basis)


def homology_ranks(basis, boundary) -> dict:
    out = {}
    for k in sorted({d for _, d in basis}):
        z = len(cycle_space(basis, boundary, k))
        b = len(boundary_space(basis, boundary, k))
        out[k] = (z // b).bit_length() - 1
    return out


def value(chain, values):
    return max((values[b] for b in chain), default=BOTTOM)


def representatives(basis, boundary, z, k):
    return [frozenset(z) ^ beta for beta in boundary_space(basis, boundary, k)]


def spectral_value(basis, boundary, values, z, k):
    return min(value(r, values) for r in representatives(basis, boundary, z, k))


def is_essential(basis, boundary, element, z, k):
    return all(element in r for r in representatives(basis, boundary, z, k))


def essential_filtered(basis, boundary, values, element, z, k):
    """(condition1, condition2) by direct enumeration of both quantifiers."""
    vb = values[element]
    cond1 = any(element in r and value(r - {element}, values) < vb
                for r in representatives(basis, boundary, z, k))
    cond2 = True
    for d in chains(in_degree(basis, k + 1)):
        beta = boundary_of(boundary, d)
        if element in beta and value(beta ^ {element}, values) < vb:
            cond2 = False
            break
    return cond1, cond2


def random_filtered_complex(rng: random.Random, max_size: int = 12, max_degree: int = 3):
    """A random valid complex (d^2 = 0) with a valid filtration.

    Each new generator of degree k gets a boundary drawn uniformly from the
    cycles of degree k-1 built so far; values are integers to force ties, and
    exceed the values of all faces.
    """
    size = rng.randint(1, max_size)
    degrees = sorted(rng.randint(0, max_degree) for _ in range(size))
    basis, boundary, values = [], {}, {}
    for pos, k in enumerate(degrees):
        bid = f"g{pos}"
        faces = frozenset()
        if k > 0:
            cyc = sorted(cycle_space(basis, boundary, k - 1), key=sorted)
            if cyc and rng.random() < 0.85:
                faces = rng.choice(cyc)
        base = max((values[f] for f in faces), default=-1)
        values[bid] = base + rng.randint(1, 3) if faces else rng.randint(0, 6)
        basis.append((bid, k))
        if faces:
            boundary[bid] = sorted(faces)
    rng.shuffle(basis)  # basis order must not matter
    return basis, boundary, values


def crossing_form_cz(S, t_samples: int = 4001) -> int:
    """Conley-Zehnder index of Phi(t) = exp(t J S), t in [0, 1], by dense
    crossing enumeration.

    Crossings are the t with ker(Phi(t) - I) != 0; on that kernel the
    crossing form is v -> <v, S v>.  The Robbin-Salamon count takes half the
    signature at t = 0 plus full signatures at interior crossings; the index
    normalized to the Morse index of a small function is n - count.
    """
    import numpy as np
    from scipy.linalg import expm
    from scipy.optimize import minimize_scalar

    S = np.asarray(S, float)
    dim = S.shape[0]
    n = dim // 2
    J = np.zeros((dim, dim))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    A = J @ S

    def smin(t):
        return np.linalg.svd(expm(t * A) - np.eye(dim), compute_uv=False)[-1]

    def sig(t):
        M = expm(t * A) - np.eye(dim)
        _, s, vt = np.linalg.svd(M)
        K = vt[s < 1e-6 * max(1.0, s[0])].T
        ev = np.linalg.eigvalsh(K.T @ S @ K)
        return int((ev > 0).sum() - (ev < 0).sum())

    ts = np.linspace(0.0, 1.0, t_samples)
    vals = np.array([smin(t) for t in ts])
    count = 0.5 * np.sign(np.linalg.eigvalsh(S)).sum()
    for i in range(1, t_samples - 1):
        if vals[i] <= vals[i - 1] and vals[i] <= vals[i + 1]:
            r = minimize_scalar(smin, bounds=(ts[i - 1], ts[i + 1]), method="bounded",
                                options={"xatol": 1e-12})
            if r.fun < 1e-7:
                count += sig(r.x)
    if vals[-1] < 1e-7:
        raise ValueError("degenerate endpoint")
    return int(round(n - count))
