"""Finite graded chain complexes over Z/2.

Chains are stored as Python ``int`` bitsets over the global basis order, so
addition is XOR and every elimination below is exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence


class ComplexError(ValueError):
    """Structural problem with a complex (duplicate ids, unknown ids, bad JSON)."""


class ChainError(ValueError):
    """A chain that does not make sense for the requested operation."""


@dataclass(frozen=True)
class GradedComplex:
    """A finite Z/2 chain complex with integer grading.

    ``basis`` lists ``(id, degree)`` pairs; the list order is the canonical
    basis order used for pivoting.  ``boundary`` maps an id to the ids that
    appear with coefficient 1 in its boundary (missing ids have zero boundary).
    """

    basis: tuple[tuple[str, int], ...]
    boundary: Mapping[str, frozenset[str]]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)
    _bmask: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        basis = tuple((str(i), int(d)) for i, d in self.basis)
        index: dict[str, int] = {}
        for pos, (bid, _) in enumerate(basis):
            if bid in index:
                raise ComplexError(f"duplicate basis id {bid!r}")
            index[bid] = pos
        bnd = {}
        for bid, faces in self.boundary.items():
            if bid not in index:
                raise ComplexError(f"boundary given for unknown id {bid!r}")
            faces = frozenset(str(f) for f in faces)
            for f in faces:
                if f not in index:
                    raise ComplexError(f"boundary of {bid!r} mentions unknown id {f!r}")
            if faces:
                bnd[bid] = faces
        masks = []
        for bid, _ in basis:
            m = 0
            for f in bnd.get(bid, ()):
                m |= 1 << index[f]
            masks.append(m)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "boundary", bnd)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_bmask", tuple(masks))

    @classmethod
    def build(cls, basis: Iterable[tuple[str, int]],
              boundary: Mapping[str, Iterable[str]] | None = None) -> "GradedComplex":
        return cls(tuple(basis), {k: frozenset(v) for k, v in (boundary or {}).items()})

    # -- basic accessors -------------------------------------------------
    def __len__(self):
        return len(self.basis)

    @property
    def ids(self) -> list[str]:
        return [b for b, _ in self.basis]

    def index(self, bid: str) -> int:
        try:
            return self._index[bid]
        except KeyError:
            raise ComplexError(f"unknown basis id {bid!r}") from None

    def degree(self, bid: str) -> int:
        return self.basis[self.index(bid)][1]

    def degrees(self) -> list[int]:
        return sorted({d for _, d in self.basis})

    def indices_in_degree(self, k: int) -> list[int]:
        return [i for i, (_, d) in enumerate(self.basis) if d == k]

    def mask_of(self, ids: Iterable[str]) -> int:
        m = 0
        for bid in ids:
            m ^= 1 << self.index(bid)
        return m

    def ids_of(self, mask: int) -> list[str]:
        out = []
        i = 0
        while mask:
            if mask & 1:
                out.append(self.basis[i][0])
            mask >>= 1
            i += 1
        return out

    def boundary_mask(self, mask: int) -> int:
        out = 0
        i = 0
        while mask:
            if mask & 1:
                out ^= self._bmask[i]
            mask >>= 1
            i += 1
        return out

    def boundary_of(self, chain: "Chain") -> "Chain":
        m = self.boundary_mask(self.mask_of(chain.support))
        deg = None if chain.degree is None else chain.degree - 1
        return Chain(frozenset(self.ids_of(m)), deg if m else None)

    # -- serialisation ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "basis": [{"id": b, "degree": d} for b, d in self.basis],
            "boundary": {b: sorted(self.boundary[b], key=self.index)
                         for b, _ in self.basis if b in self.boundary},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: Mapping) -> "GradedComplex":
        try:
            basis = [(entry["id"], entry["degree"]) for entry in data["basis"]]
            boundary = data.get("boundary", {})
        except (KeyError, TypeError) as exc:
            raise ComplexError(f"malformed complex description: missing {exc}") from None
        for bid, d in basis:
            if not isinstance(d, int) or isinstance(d, bool):
                raise ComplexError(f"degree of {bid!r} must be an integer, got {d!r}")
        return cls.build(basis, boundary)

    @classmethod
    def from_json(cls, text: str) -> "GradedComplex":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Chain:
    """A Z/2 chain: a finite set of basis ids, homogeneous of one degree.

    The zero chain has empty support and ``degree=None``.
    """

    support: frozenset[str]
    degree: int | None = None

    @classmethod
    def of(cls, complex_: GradedComplex, ids: Iterable[str]) -> "Chain":
        ids = frozenset(ids)
        degs = {complex_.degree(i) for i in ids}
        if len(degs) > 1:
            raise ChainError(f"chain mixes degrees {sorted(degs)}")
        return cls(ids, degs.pop() if degs else None)

    @classmethod
    def from_mask(cls, complex_: GradedComplex, mask: int) -> "Chain":
        return cls.of(complex_, complex_.ids_of(mask))

    def is_zero(self) -> bool:
        return not self.support

    def __add__(self, other: "Chain") -> "Chain":
        sup = self.support ^ other.support
        if not sup:
            return Chain(frozenset())
        if self.degree is not None and other.degree is not None and self.degree != other.degree:
            raise ChainError("cannot add chains of different degree")
        return Chain(sup, self.degree if self.degree is not None else other.degree)

    def sorted_ids(self, complex_: GradedComplex | None = None) -> list[str]:
        if complex_ is None:
            return sorted(self.support)
        return sorted(self.support, key=complex_.index)


# -- elimination ---------------------------------------------------------------

class Reducer:
    """Incremental Z/2 echelon basis with preimage tracking.

    ``order`` maps a bit position to a sort key; the pivot of a vector is its
    bit with the largest key.  Each stored row carries a ``tag`` bitset, the
    combination of inserted tags that produced it.
    """

    def __init__(self, order: Sequence | None = None):
        self._key = order
        self.rows: dict[int, tuple[int, int]] = {}

    def _lead(self, v: int) -> int:
        if self._key is None:
            return v.bit_length() - 1
        best, bkey = -1, None
        i = 0
        while v:
            if v & 1:
                k = self._key[i]
                if bkey is None or k > bkey:
                    best, bkey = i, k
            v >>= 1
            i += 1
        return best

    def reduce(self, v: int, tag: int = 0) -> tuple[int, int]:
        """Reduce ``v`` until its pivot is free; returns (residue, tag)."""
        while v:
            p = self._lead(v)
            row = self.rows.get(p)
            if row is None:
                break
            v ^= row[0]
            tag ^= row[1]
        return v, tag

    def add(self, v: int, tag: int = 0) -> bool:
        v, tag = self.reduce(v, tag)
        if not v:
            return False
        self.rows[self._lead(v)] = (v, tag)
        return True

    def rank(self) -> int:
        return len(self.rows)

    def vectors(self) -> list[tuple[int, int]]:
        return list(self.rows.values())


def _boundary_reducer(cx: GradedComplex, k: int, order=None) -> Reducer:
    """Echelon basis of im(d_{k+1}) with tags recording preimages."""
    red = Reducer(order)
    for i in cx.indices_in_degree(k + 1):
        red.add(cx._bmask[i], 1 << i)
    return red


# -- operations ------------------------------------------------------------------

def validate_complex(cx: GradedComplex) -> list[dict]:
    """Grading and d∘d=0 violations, one entry per offending basis id."""
    out = []
    for i, (bid, deg) in enumerate(cx.basis):
        bad = [f for f in cx.ids_of(cx._bmask[i]) if cx.degree(f) != deg - 1]
        if bad:
            out.append({"id": bid, "kind": "grading", "faces": bad})
            continue
        dd = cx.boundary_mask(cx._bmask[i])
        if dd:
            out.append({"id": bid, "kind": "boundary_squared", "residue": cx.ids_of(dd)})
    return out


def require_valid(cx: GradedComplex) -> None:
    bad = validate_complex(cx)
    if bad:
        raise ComplexError(f"invalid complex: {bad[0]}")


def boundary_rank(cx: GradedComplex, k: int) -> int:
    """Rank of d_k : C_k -> C_{k-1}."""
    return _boundary_reducer(cx, k - 1).rank()


def homology_ranks(cx: GradedComplex) -> dict[int, int]:
    require_valid(cx)
    out = {}
    for k in cx.degrees():
        n_k = len(cx.indices_in_degree(k))
        out[k] = n_k - boundary_rank(cx, k) - boundary_rank(cx, k + 1)
    return out


def euler_characteristic(cx: GradedComplex) -> int:
    return sum((-1) ** (d % 2) for _, d in cx.basis)


@dataclass(frozen=True)
class Classification:
    kind: str  # "not-cycle" | "boundary" | "nontrivial-cycle"
    witness: Chain | None = None

    def to_dict(self, cx: GradedComplex) -> dict:
        d = {"kind": self.kind}
        if self.witness is not None:
            d["witness"] = self.witness.sorted_ids(cx)
        return d


def classify_chain(cx: GradedComplex, chain: Chain) -> Classification:
    """Decide whether ``chain`` is a non-cycle, a boundary (with preimage), or a
    nontrivial cycle.  Preimages are reproducible: pivots follow basis order."""
    require_valid(cx)
    if chain.is_zero():
        return Classification("boundary", Chain(frozenset()))
    chain = Chain.of(cx, chain.support)
    mask = cx.mask_of(chain.support)
    if cx.boundary_mask(mask):
        return Classification("not-cycle")
    res, tag = _boundary_reducer(cx, chain.degree).reduce(mask)
    if res:
        return Classification("nontrivial-cycle")
    return Classification("boundary", Chain.from_mask(cx, tag))


def cycle_basis(cx: GradedComplex, k: int) -> list[int]:
    """Basis of ker d_k as bitsets, in canonical (basis-order) reduced form."""
    idx = cx.indices_in_degree(k)
    red = Reducer()
    kernel = []
    for i in idx:
        res, tag = red.reduce(cx._bmask[i], 1 << i)
        if res:
            red.rows[red._lead(res)] = (res, tag)
        else:
            kernel.append(tag)
    return kernel


def representatives(cx: GradedComplex, degree: int, class_index: int | None = None):
    """Cycles whose classes form a basis of H_degree.

    Cycles of the kernel basis are taken greedily in basis order, keeping those
    independent modulo boundaries.  With ``class_index`` only that cycle is
    returned (``None`` if the rank is too small).
    """
    require_valid(cx)
    red = _boundary_reducer(cx, degree)
    reps = []
    for z in cycle_basis(cx, degree):
        if red.add(z):
            reps.append(Chain.from_mask(cx, z))
    if class_index is None:
        return reps
    return reps[class_index] if 0 <= class_index < len(reps) else None


def load_complex(path) -> GradedComplex:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ComplexError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return GradedComplex.from_dict(data)
