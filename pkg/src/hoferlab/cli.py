"""Command-line entry point (``hoferlab``).

Every subcommand emits one report.  JSON reports are written with sorted keys
and carry all parameters, defaults included, so identical inputs give
byte-identical output.  Exit codes: 0 success or certified, 2 refuted or
validation violations, 1 structural errors (bad input files, bad flags),
3 inconclusive certificates.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from importlib import resources

import numpy as np

from . import certificates as cert
from .complex_core import (Chain, ChainError, ComplexError, classify_chain, euler_characteristic,
                           homology_ranks, load_complex, representatives, validate_complex)
from .dynamics.constructions import ChartError, DominationError
from .dynamics.hamiltonians import ConfigError, load_hamiltonian
from .dynamics.integrate import DEFAULT_ORDER, DEFAULT_STEPS, FlowError
from .filtration import (is_essential_filtered, load_filtration, minimality_verdict,
                         spectral_value, validate_filtration)
from .morse_oracle import MorseError, SampledFunction, build_morse_complex, fundamental_cycle
from .orbits import OrbitError, scan_fixed_points, under_twisted_status

EXIT_OK, EXIT_STRUCTURAL, EXIT_REFUTED, EXIT_INCONCLUSIVE = 0, 1, 2, 3
STRUCTURAL = (ComplexError, ChainError, ConfigError, MorseError, OrbitError, DominationError,
              ChartError, FlowError, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; here that code means 'refuted'."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# -- input helpers ---------------------------------------------------------------------------

def bundled(name: str) -> str | None:
    """Path of a file shipped in ``hoferlab/data`` (searched recursively by name)."""
    root = resources.files("hoferlab") / "data"
    for sub in ("", "systems", "functions", "complexes"):
        cand = root / sub / name if sub else root / name
        if cand.is_file():
            return str(cand)
    return None


def resolve(path: str) -> str:
    if os.path.exists(path):
        return path
    alt = bundled(path) or bundled(path + ".json")
    if alt is None:
        raise FileNotFoundError(f"{path}: no such file (and no bundled example of that name)")
    return alt


def _point(text):
    if text is None:
        return None
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"cannot parse point {text!r}; expected comma-separated numbers") from None


def _system(path):
    return load_hamiltonian(resolve(path))


def _class(cx, spec: str, element: str | None = None) -> Chain:
    """``top`` (sum of top-degree generators), an integer class index in the
    degree of ``element``, or an explicit chain ``id1+id2``."""
    if spec == "top":
        top = max(cx.degrees())
        return Chain.of(cx, [b for b, d in cx.basis if d == top])
    if spec.lstrip("-").isdigit():
        if element is None:
            raise UsageError("an integer --class needs --element to fix the degree")
        rep = representatives(cx, cx.degree(element), int(spec))
        if rep is None:
            raise ChainError(f"no homology class with index {spec} in degree {cx.degree(element)}")
        return rep
    return Chain.of(cx, [s.strip() for s in spec.split("+") if s.strip()])


# -- JSON ------------------------------------------------------------------------------------

def clean(obj):
    """Plain-JSON copy: numpy scalars and arrays unpacked, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (frozenset, set)):
        return sorted(clean(v) for v in obj)
    return obj


def dumps(report) -> str:
    return json.dumps(clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _text(obj, indent=0) -> list[str]:
    pad = "  " * indent
    out = []
    if isinstance(obj, dict):
        for k in sorted(obj):
            v = obj[k]
            if isinstance(v, (dict, list)) and v:
                out.append(f"{pad}{k}:")
                out += _text(v, indent + 1)
            else:
                out.append(f"{pad}{k}: {v}")
    elif isinstance(obj, list):
        if all(not isinstance(v, (dict, list)) for v in obj):
            out.append(f"{pad}{obj}")
        else:
            for v in obj:
                out.append(f"{pad}-")
                out += _text(v, indent + 1)
    else:
        out.append(f"{pad}{obj}")
    return out


# -- command handlers (each returns (report dict, exit code, optional text)) -------------------

def cmd_complex_validate(a):
    cx = load_complex(resolve(a.complex))
    bad = validate_complex(cx)
    return {"valid": not bad, "violations": bad}, EXIT_REFUTED if bad else EXIT_OK


def cmd_complex_homology(a):
    cx = load_complex(resolve(a.complex))
    ranks = homology_ranks(cx)
    return {"ranks": {str(k): v for k, v in ranks.items()},
            "euler_characteristic": euler_characteristic(cx)}, EXIT_OK


def cmd_complex_classify(a):
    cx = load_complex(resolve(a.complex))
    chain = _class(cx, a.chain)
    res = classify_chain(cx, chain)
    return {"chain": chain.sorted_ids(cx), **res.to_dict(cx)}, EXIT_OK


def _filtered(a):
    cx = load_complex(resolve(a.complex))
    return cx, load_filtration(resolve(a.filtration))


def cmd_filtration_validate(a):
    cx, filt = _filtered(a)
    bad = validate_filtration(cx, filt)
    return {"valid": not bad, "violations": bad}, EXIT_REFUTED if bad else EXIT_OK


def cmd_filtration_spectral(a):
    cx, filt = _filtered(a)
    cls = _class(cx, a.cls, a.element)
    return {"class": cls.sorted_ids(cx), "spectral_value": spectral_value(cx, filt, cls)}, EXIT_OK


def cmd_essential(a):
    cx, filt = _filtered(a)
    cls = _class(cx, a.cls, a.element)
    return is_essential_filtered(cx, filt, a.element, cls).to_dict(), EXIT_OK


def cmd_filtration_verdict(a):
    cx, filt = _filtered(a)
    cls = _class(cx, a.cls, a.element)
    v = minimality_verdict(cx, filt, a.element, cls)
    return v.to_dict(), EXIT_OK if v.certified else EXIT_REFUTED


def cmd_morse_build(a):
    f = SampledFunction.from_file(resolve(a.system), a.grid)
    m = build_morse_complex(f)
    fund = fundamental_cycle(m.complex)
    grid_max = float(f.values.max())
    report = {**m.to_dict(),
              "resolution": f.resolution,
              "homology": {str(k): v for k, v in homology_ranks(m.complex).items()},
              "fundamental_class": fund.sorted_ids(m.complex),
              "spectral_value": spectral_value(m.complex, m.filtration, fund),
              "grid_max": grid_max}
    for path, part in ((a.out_complex, "complex"), (a.out_filtration, "filtration")):
        if path:
            with open(path, "w") as fh:
                fh.write(dumps(report[part]))
    return report, EXIT_OK


def cmd_orbits_scan(a):
    H = _system(a.system)
    scan = scan_fixed_points(H, resolution=a.grid, tol=a.tol, steps=a.steps, order=a.order,
                             radius=a.radius)
    code = EXIT_INCONCLUSIVE if scan.non_isolated else EXIT_OK
    return scan.to_dict(include_samples=a.samples), code


def cmd_orbits_twist(a):
    H = _system(a.system)
    st = under_twisted_status(H, _point(a.point), samples=a.samples, tol=a.tol, steps=a.steps,
                              order=a.order)
    return st.to_dict(), EXIT_OK


def cmd_hofer(a):
    return cert.hofer_norms(_system(a.system), resolution=a.grid, nodes=a.nodes).to_dict(), EXIT_OK


def _cert_result(c: cert.Certificate):
    code = {cert.CERTIFIED: EXIT_OK, cert.INCONCLUSIVE: EXIT_INCONCLUSIVE}.get(c.verdict,
                                                                             EXIT_REFUTED)
    return c.to_dict(), code, c.summary()


def cmd_certify_thm15(a):
    return _cert_result(cert.certify_theorem_1_5(
        _system(a.system), _point(a.P), _point(a.Q), resolution=a.grid, tol=a.tol,
        action_tol=a.action_tol, steps=a.steps, order=a.order))


def cmd_certify_thm16(a):
    H = _system(a.h)
    P = _point(a.P)
    if P is None:
        P = cert.find_extrema(H)[0]
    return _cert_result(cert.certify_theorem_1_6(
        H, _system(a.k), P, resolution=a.grid, tol=a.tol,
        action_tol=a.action_tol, steps=a.steps, order=a.order))


def cmd_certify_negside(a):
    return _cert_result(cert.certify_negative_side(
        _system(a.system), _point(a.Q), resolution=a.grid, tol=a.tol,
        action_tol=a.action_tol, steps=a.steps, order=a.order))


def cmd_certify_short_time(a):
    return _cert_result(cert.certify_short_time(
        _system(a.system), _point(a.P), eps_start=a.eps_start, eps_min=a.eps_min,
        resolution=a.grid, tol=a.tol, steps=a.steps, order=a.order))


# -- parser ----------------------------------------------------------------------------------

def _common(p):
    p.add_argument("--format", choices=("json", "text"), default="json",
                   help="report format")
    p.add_argument("--output", default=None, help="write the report here instead of stdout")


def _filtered_args(p, element_required):
    p.add_argument("--complex", required=True, help="complex JSON")
    p.add_argument("--filtration", required=True, help="filtration JSON")
    p.add_argument("--element", required=element_required, default=None,
                   help="basis id of the element P")
    p.add_argument("--class", dest="cls", default="top",
                   help="'top', a class index in the degree of --element, or ids joined by '+'")


def _numerics(p, grid=32, tol=1e-10):
    p.add_argument("--grid", type=int, default=grid, help="seed grid resolution per axis")
    p.add_argument("--tol", type=float, default=tol, help="fixed-point residual tolerance")
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS, help="integrator steps per unit time")
    p.add_argument("--order", type=int, default=DEFAULT_ORDER, choices=(2, 4, 6, 8),
                   help="integrator order")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    top = _Parser(prog="hoferlab", formatter_class=fmt,
                  description="Filtered Z/2 complexes, orbit scans, Hofer norms and "
                              "length-minimizing certificates on flat tori.")
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def leaf(group, name, func, help_):
        p = group.add_parser(name, help=help_, description=help_, formatter_class=fmt)
        p.set_defaults(func=func)
        _common(p)
        return p

    cx = sub.add_parser("complex", help="graded Z/2 complexes").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    p = leaf(cx, "validate", cmd_complex_validate, "check that the boundary squares to zero")
    p.add_argument("complex", help="complex JSON")
    p = leaf(cx, "homology", cmd_complex_homology, "Z/2 homology ranks per degree")
    p.add_argument("complex", help="complex JSON")
    p = leaf(cx, "classify", cmd_complex_classify, "not-cycle, boundary (with preimage) or cycle")
    p.add_argument("complex", help="complex JSON")
    p.add_argument("--chain", required=True, help="basis ids joined by '+', or 'top'")

    fl = sub.add_parser("filtration", help="filtered complexes").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    p = leaf(fl, "validate", cmd_filtration_validate, "strict decrease along the boundary")
    p.add_argument("--complex", required=True, help="complex JSON")
    p.add_argument("--filtration", required=True, help="filtration JSON")
    _filtered_args(leaf(fl, "spectral", cmd_filtration_spectral,
                        "minimum chain value over representatives of a class"), False)
    _filtered_args(leaf(fl, "essential", cmd_essential,
                        "essentiality of an element with respect to the filtration"), True)
    _filtered_args(leaf(fl, "verdict", cmd_filtration_verdict,
                        "chain-level minimality certificate for an element"), True)
    _filtered_args(leaf(sub, "essential", cmd_essential,
                        "alias of 'filtration essential'"), True)

    mo = sub.add_parser("morse", help="discrete Morse oracle").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    p = leaf(mo, "build", cmd_morse_build, "filtered Morse complex of a sampled torus function")
    p.add_argument("--system", required=True,
                   help="autonomous torus Hamiltonian JSON, grid JSON {'values': ...} or .npy")
    p.add_argument("--grid", type=int, default=64, help="sampling resolution for Hamiltonians")
    p.add_argument("--out-complex", default=None, help="also write the complex JSON here")
    p.add_argument("--out-filtration", default=None, help="also write the filtration JSON here")

    ob = sub.add_parser("orbits", help="1-periodic orbits").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    p = leaf(ob, "scan", cmd_orbits_scan, "Newton scan for contractible 1-periodic orbits")
    p.add_argument("--system", required=True, help="Hamiltonian JSON")
    _numerics(p)
    p.add_argument("--radius", type=float, default=1.0, help="seed box radius on charts")
    p.add_argument("--samples", action="store_true", help="include orbit samples in the report")
    p = leaf(ob, "twist", cmd_orbits_twist, "under-twisted status of a fixed point")
    p.add_argument("--system", required=True, help="Hamiltonian JSON")
    p.add_argument("--point", required=True, help="comma-separated coordinates")
    p.add_argument("--samples", type=int, default=200, help="time samples in (0, 1]")
    p.add_argument("--tol", type=float, default=1e-9, help="touching tolerance for the margin")
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS, help="integrator steps")
    p.add_argument("--order", type=int, default=DEFAULT_ORDER, choices=(2, 4, 6, 8),
                   help="integrator order")

    p = leaf(sub, "hofer", cmd_hofer, "positive and negative Hofer norms")
    p.add_argument("--system", required=True, help="Hamiltonian JSON on the torus")
    p.add_argument("--grid", type=int, default=64, help="spatial grid per axis")
    p.add_argument("--nodes", type=int, default=12, help="Gauss-Legendre time nodes")

    ce = sub.add_parser("certify", help="length-minimizing certificates").add_subparsers(
        dest="action", required=True, parser_class=_Parser)

    def cert_args(p, grid=32):
        _numerics(p, grid)
        p.add_argument("--action-tol", type=float, default=1e-7, help="action comparison slack")

    p = leaf(ce, "thm15", cmd_certify_thm15, "quasi-autonomous, under-twisted path")
    p.add_argument("--system", required=True, help="Hamiltonian JSON")
    p.add_argument("--P", default=None, help="fixed maximum point (default: located)")
    p.add_argument("--Q", default=None, help="fixed minimum point (default: located)")
    cert_args(p)
    p = leaf(ce, "thm16", cmd_certify_thm16, "comparison of H against a dominated K")
    p.add_argument("--h", required=True, help="Hamiltonian JSON for H")
    p.add_argument("--k", required=True, help="Hamiltonian JSON for K")
    p.add_argument("--P", default=None, help="common maximum point (default: located on H)")
    cert_args(p)
    p = leaf(ce, "negside", cmd_certify_negside, "negative side via the reversed path")
    p.add_argument("--system", required=True, help="Hamiltonian JSON")
    p.add_argument("--Q", default=None, help="fixed minimum point (default: located)")
    cert_args(p)
    p = leaf(ce, "short-time", cmd_certify_short_time, "rescaled path eps H(eps t, x)")
    p.add_argument("--system", required=True, help="Hamiltonian JSON")
    p.add_argument("--P", default=None, help="fixed maximum point (default: located)")
    p.add_argument("--eps-start", type=float, default=0.05, help="first rescaling factor")
    p.add_argument("--eps-min", type=float, default=1e-3, help="smallest rescaling factor tried")
    cert_args(p)
    return top


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_STRUCTURAL
    params = {k: v for k, v in vars(args).items() if k not in ("func", "format", "output", "command", "action")}
    command = " ".join(x for x in (args.command, getattr(args, "action", None)) if x)
    try:
        out = args.func(args)
    except UsageError as exc:
        print(f"hoferlab: error: {exc}", file=sys.stderr)
        return EXIT_STRUCTURAL
    except STRUCTURAL as exc:
        print(f"hoferlab: error: {exc}", file=sys.stderr)
        return EXIT_STRUCTURAL
    result, code = out[0], out[1]
    report = {"command": command, "parameters": params, "result": result, "exit_code": code}
    if args.format == "json":
        text = dumps(report)
    else:
        lines = [f"command: {command}"]
        lines += out[2].splitlines() if len(out) > 2 else _text(clean(result))
        text = "\n".join(lines) + "\n"
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    return code


def main() -> None:  # console script
    sys.exit(run())


if __name__ == "__main__":
    main()
