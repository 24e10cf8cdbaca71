"""Filtrations on Z/2 complexes, spectral values and filtered essentiality.

A filtration assigns a real value to every basis element, strictly
decreasing along boundary incidences.  The value of a chain is the maximum
over its support; the zero chain gets :data:`BOTTOM`.

Every minimisation over an affine set ``c + B`` (B a space of boundaries) is
done by reducing ``B`` to echelon form with pivots at the highest-filtered
element, then clearing pivots from ``c``.  The leading element of the result
cannot be lowered by any further boundary, so its value is the minimum.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from typing import Mapping

from .complex_core import (
    Chain,
    ChainError,
    ComplexError,
    GradedComplex,
    Reducer,
    classify_chain,
    require_valid,
)


@functools.total_ordering
class _Bottom:
    """Chain value of the zero chain; compares below every real number."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __lt__(self, other):
        return not isinstance(other, _Bottom)

    def __eq__(self, other):
        return isinstance(other, _Bottom)

    def __hash__(self):
        return hash("hoferlab.BOTTOM")

    def __repr__(self):
        return "BOTTOM"

    def __reduce__(self):
        return (_Bottom, ())


BOTTOM = _Bottom()


def value_to_json(v):
    return None if v is BOTTOM else v


@dataclass(frozen=True)
class FiltrationMap:
    values: Mapping[str, float]

    def __post_init__(self):
        vals = {}
        for k, v in self.values.items():
            v = float(v)
            if not math.isfinite(v):
                raise ComplexError(f"filtration value of {k!r} is not finite")
            vals[str(k)] = v
        object.__setattr__(self, "values", vals)

    def __getitem__(self, bid: str) -> float:
        return self.values[bid]

    def to_dict(self) -> dict:
        return {"values": dict(self.values)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: Mapping) -> "FiltrationMap":
        if "values" not in data or not isinstance(data["values"], Mapping):
            raise ComplexError("filtration file needs a 'values' object")
        return cls(data["values"])

    @classmethod
    def from_json(cls, text: str) -> "FiltrationMap":
        return cls.from_dict(json.loads(text))


def load_filtration(path) -> FiltrationMap:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ComplexError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return FiltrationMap.from_dict(data)


def _check_defined(cx: GradedComplex, filt: FiltrationMap) -> None:
    missing = [b for b in cx.ids if b not in filt.values]
    if missing:
        raise ComplexError(f"filtration has no value for {missing[:5]}")


def validate_filtration(cx: GradedComplex, filt: FiltrationMap) -> list[dict]:
    """Incidences ``b' in d b`` that break the strict decrease V(b) > V(b')."""
    require_valid(cx)
    _check_defined(cx, filt)
    out = []
    for bid, _ in cx.basis:
        for face in sorted(cx.boundary.get(bid, ()), key=cx.index):
            if not filt[bid] > filt[face]:
                out.append({"id": bid, "face": face,
                            "value": filt[bid], "face_value": filt[face]})
    return out


def chain_value(chain: Chain, filt: FiltrationMap):
    if chain.is_zero():
        return BOTTOM
    return max(filt[b] for b in chain.support)


# -- filtration-ordered elimination ------------------------------------------------

def _order(cx: GradedComplex, filt: FiltrationMap) -> list[tuple[float, int]]:
    # total order: by value, ties broken by basis position
    return [(filt[b], i) for i, (b, _) in enumerate(cx.basis)]


def _mask_value(cx, filt, mask):
    return chain_value(Chain(frozenset(cx.ids_of(mask))), filt)


class _Filtered:
    """Boundary space of one degree reduced in filtration order."""

    def __init__(self, cx: GradedComplex, filt: FiltrationMap, degree: int):
        self.cx, self.filt, self.degree = cx, filt, degree
        self.order = _order(cx, filt)
        self.red = Reducer(self.order)
        for i in cx.indices_in_degree(degree + 1):
            self.red.add(cx._bmask[i], 1 << i)

    def minimize(self, mask: int, tag: int = 0, reducer: Reducer | None = None):
        return (reducer or self.red).reduce(mask, tag)

    def restricted(self, bit: int):
        """Echelon basis of {beta in B : <b, beta> = 0} and one beta_1 with
        <b, beta_1> = 1 (or None)."""
        red = Reducer(self.order)
        first = None
        for v, tag in self.red.vectors():
            if (v >> bit) & 1:
                if first is None:
                    first = (v, tag)
                    continue
                v ^= first[0]
                tag ^= first[1]
            red.add(v, tag)
        return red, first


def _require_class(cx: GradedComplex, cls: Chain) -> Chain:
    cls = Chain.of(cx, cls.support)
    kind = classify_chain(cx, cls).kind
    if kind != "nontrivial-cycle":
        raise ChainError(f"class representative is a {kind}, not a nontrivial cycle")
    return cls


def spectral_value(cx: GradedComplex, filt: FiltrationMap, cls: Chain) -> float:
    """Minimum chain value over all representatives of the class of ``cls``."""
    _check_defined(cx, filt)
    cls = _require_class(cx, cls)
    f = _Filtered(cx, filt, cls.degree)
    res, _ = f.minimize(cx.mask_of(cls.support))
    return _mask_value(cx, filt, res)


def minimal_representative(cx: GradedComplex, filt: FiltrationMap, cls: Chain) -> Chain:
    _check_defined(cx, filt)
    cls = _require_class(cx, cls)
    f = _Filtered(cx, filt, cls.degree)
    res, _ = f.minimize(cx.mask_of(cls.support))
    return Chain.from_mask(cx, res)


def is_essential(cx: GradedComplex, element: str, cls: Chain) -> bool:
    """Whether ``element`` occurs in every representative of the class.

    The coefficient of b in ``z + beta`` is <b,z> + <b,beta>, so b survives in
    every representative exactly when <b,z> = 1 and <b, d e> = 0 for every
    basis element e one degree up (the functional vanishes on all boundaries).
    """
    cls = _require_class(cx, cls)
    if element not in cls.support:
        return False
    bit = 1 << cx.index(element)
    return not any(cx._bmask[i] & bit for i in cx.indices_in_degree(cls.degree + 1))


@dataclass
class EssentialityReport:
    element: str
    class_chain: list[str]
    value: float
    condition1: bool
    witness: list[str] | None
    condition2: bool
    counterexample: list[str] | None
    counterexample_value: object = None
    verdict: bool = field(init=False)

    def __post_init__(self):
        self.verdict = self.condition1 and self.condition2

    def to_dict(self) -> dict:
        return {
            "element": self.element,
            "class": self.class_chain,
            "value": self.value,
            "condition1": {"holds": self.condition1, "witness": self.witness},
            "condition2": {"holds": self.condition2, "counterexample": self.counterexample,
                           "residual_value": value_to_json(self.counterexample_value)},
            "verdict": self.verdict,
        }


def is_essential_filtered(cx: GradedComplex, filt: FiltrationMap, element: str,
                          cls: Chain) -> EssentialityReport:
    """Check both chain-level conditions for ``element`` and the class of ``cls``.

    Condition 1 looks for a representative ``b + v`` with <b,v> = 0 and
    V(v) < V(b); ``v = 0`` is accepted.  Condition 2 asks that every boundary
    beta with <b,beta> = 1 has V(beta - b) >= V(b).  Both are minimisations of
    the chain value over a coset of {beta in B : <b,beta> = 0}.
    """
    _check_defined(cx, filt)
    pos = cx.index(element)
    cls = _require_class(cx, cls)
    if cx.degree(element) != cls.degree:
        raise ChainError(f"{element!r} has degree {cx.degree(element)}, class has {cls.degree}")
    bit = 1 << pos
    vb = filt[element]
    f = _Filtered(cx, filt, cls.degree)
    red0, first = f.restricted(pos)

    # condition 1: v ranges over (z + b + B) with <b, v> = 0
    v = cx.mask_of(cls.support) ^ bit
    ok1, witness = False, None
    if v & bit:
        if first is not None:
            v ^= first[0]
    if not v & bit:
        v, _ = f.minimize(v, reducer=red0)
        if _mask_value(cx, filt, v) < vb:
            ok1 = True
            witness = Chain.from_mask(cx, v ^ bit).sorted_ids(cx)

    # condition 2: minimise V(beta - b) over beta in beta_1 + B_0
    ok2, counter, cval = True, None, None
    if first is not None:
        res, tag = f.minimize(first[0] ^ bit, first[1], reducer=red0)
        cval = _mask_value(cx, filt, res)
        if cval < vb:
            ok2 = False
            counter = Chain.from_mask(cx, tag).sorted_ids(cx)

    return EssentialityReport(element, cls.sorted_ids(cx), vb, ok1, witness, ok2, counter,
                              cval)


@dataclass
class MinimalityVerdict:
    certified: bool
    element: str
    element_value: float
    spectral_value: float
    agreement: bool | None
    essentiality: EssentialityReport
    failing_condition: str | None = None

    def to_dict(self) -> dict:
        return {
            "certified": self.certified,
            "element": self.element,
            "element_value": self.element_value,
            "spectral_value": self.spectral_value,
            "spectral_equals_element_value": self.agreement,
            "failing_condition": self.failing_condition,
            "essentiality": self.essentiality.to_dict(),
        }


def minimality_verdict(cx: GradedComplex, filt: FiltrationMap, element: str,
                       cls: Chain) -> MinimalityVerdict:
    """Certificate fragment: if ``element`` is essential for the class with
    respect to the filtration, no representative has value below V(element);
    this is re-derived from :func:`spectral_value` and the two must agree."""
    rep = is_essential_filtered(cx, filt, element, cls)
    spec = spectral_value(cx, filt, cls)
    if not rep.verdict:
        failing = "condition1" if not rep.condition1 else "condition2"
        return MinimalityVerdict(False, element, rep.value, spec, None, rep, failing)
    agree = spec == rep.value
    return MinimalityVerdict(agree, element, rep.value, spec, agree, rep,
                             None if agree else "spectral-mismatch")
