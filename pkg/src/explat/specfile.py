"""Flat key-section problem files: [group], [curve k], [equations], [solver].

Complex literals are written `a+bi`.  Equations are polynomial relations in
z1..zn and the group coordinates (wk torus, xk/yk elliptic), one per line,
`lhs = rhs` or a bare expression meaning `expr = 0`.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from sympy import Float, Function, I, Integer, Poly, PolynomialError, Rational, Symbol
from sympy.parsing.sympy_parser import (
    convert_xor,
    parse_expr,
    standard_transformations,
)

from .elliptic import EllipticCurveParams, Lattice
from .fiber import (
    GroupSignature,
    MPoly,
    NonTriangularSystem,
    ProblemSpec,
    SectorDomain,
    build_problem,
)


class ParseError(ValueError):
    """Malformed document; carries the 1-based source line."""

    def __init__(self, msg: str, line: int, column: int | None = None):
        at = f"line {line}" if column is None else f"line {line}, column {column}"
        super().__init__(f"{at}: {msg}")
        self.line = line
        self.column = column


class ValidationError(ValueError):
    """Well-formed document describing an unusable problem."""


_SECTIONS = ("group", "curve", "equations", "solver")
_GROUP_KEYS = {"factors"}
_CURVE_KEYS = {"omega1", "omega2"}
_SOLVER_KEYS = {"c", "chart", "epsilon", "theta", "eta", "radius", "tol", "max_iter"}
_COMPLEX_RE = re.compile(r"^[0-9eEij+\-. ]+$")
_EQ_TRANSFORMS = standard_transformations + (convert_xor,)
# names the tokenizer's eval step needs; everything else becomes a Symbol
_EQ_GLOBALS = {
    "Integer": Integer,
    "Float": Float,
    "Rational": Rational,
    "Symbol": Symbol,
    "Function": Function,  # lets sin(z1) reach the not-polynomial check
}


@dataclass(frozen=True)
class RunSetup:
    """Everything a solve run needs from a spec file."""

    problem: ProblemSpec
    domain: SectorDomain
    radius: tuple
    tol: float
    max_iter: int


def parse_complex(tok: str, line: int) -> complex:
    """`a+bi` literal (also bare reals and bare imaginaries)."""
    s = tok.strip()
    if not s or not _COMPLEX_RE.match(s) or "inf" in s.lower() or "nan" in s.lower():
        raise ParseError(f"bad complex literal {tok!r}", line)
    try:
        return complex(s.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise ParseError(f"bad complex literal {tok!r}", line) from None


def _parse_real(tok: str, line: int) -> float:
    v = parse_complex(tok, line)
    if v.imag != 0.0:
        raise ParseError(f"expected a real number, got {tok!r}", line)
    return v.real


def _split_sections(text: str):
    """-> list of (section name, curve index or None, [(lineno, line), ...])."""
    sections = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError("unterminated section header", lineno)
            head = line[1:-1].strip().split()
            if not head or head[0] not in _SECTIONS:
                raise ParseError(f"unknown section {line!r}", lineno)
            idx = None
            if head[0] == "curve":
                if len(head) != 2 or not head[1].isdigit():
                    raise ParseError("curve sections are written [curve k]", lineno)
                idx = int(head[1])
            elif len(head) != 1:
                raise ParseError(f"unknown section {line!r}", lineno)
            current = (head[0], idx, [])
            sections.append(current)
            continue
        if current is None:
            raise ParseError("content before any section header", lineno)
        current[2].append((lineno, line))
    return sections


def _keyvals(section_name, rows, allowed):
    out = {}
    for lineno, line in rows:
        if "=" not in line:
            raise ParseError(f"expected key = value in [{section_name}]", lineno)
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in allowed:
            raise ValidationError(f"line {lineno}: unknown key {key!r} in [{section_name}]")
        if key in out:
            raise ValidationError(f"line {lineno}: duplicate key {key!r}")
        out[key] = (lineno, val.strip())
    return out


def _parse_equation(line: str, lineno: int, symbols: dict) -> MPoly:
    """One `lhs = rhs` (or bare expression) line -> MPoly over the declared vars."""
    if line.count("=") > 1:
        raise ParseError("more than one '=' in equation", lineno)
    lhs, _, rhs = line.partition("=")
    local = {**symbols, "i": I}
    try:
        expr = parse_expr(lhs, local_dict=local, global_dict=dict(_EQ_GLOBALS), transformations=_EQ_TRANSFORMS)
        if rhs.strip():
            expr = expr - parse_expr(
                rhs, local_dict=local, global_dict=dict(_EQ_GLOBALS), transformations=_EQ_TRANSFORMS
            )
    except SyntaxError as exc:
        col = exc.offset if isinstance(exc.offset, int) else None
        raise ParseError(f"cannot parse equation: {exc.msg}", lineno, col) from None
    except Exception as exc:
        raise ParseError(f"cannot parse equation: {exc}", lineno) from None
    stray = expr.free_symbols - set(symbols.values())
    if stray:
        names = ", ".join(sorted(s.name for s in stray))
        raise ValidationError(f"line {lineno}: undeclared variable(s) {names}")
    names = tuple(symbols)
    try:
        poly = Poly(expr, *(symbols[nm] for nm in names))
    except PolynomialError as exc:
        raise ValidationError(f"line {lineno}: not polynomial: {exc}") from None
    terms = {}
    for exps, coeff in poly.terms():
        terms[tuple(int(e) for e in exps)] = complex(coeff)
    return MPoly.from_dict(names, terms)


def _build_signature(sections) -> GroupSignature:
    groups = [s for s in sections if s[0] == "group"]
    if len(groups) != 1:
        bad = groups[1][2][0][0] if len(groups) > 1 else 1
        raise ParseError("exactly one [group] section required", bad)
    kv = _keyvals("group", groups[0][2], _GROUP_KEYS)
    if "factors" not in kv:
        raise ValidationError("[group] is missing the factors key")
    lineno, val = kv["factors"]
    kinds = [t.strip() for t in val.split(",") if t.strip()]
    if not kinds:
        raise ParseError("factors list is empty", lineno)
    for t in kinds:
        if t not in ("torus", "elliptic"):
            raise ValidationError(f"line {lineno}: unknown factor type {t!r}")

    curves = {}
    for name, idx, rows in sections:
        if name != "curve":
            continue
        if idx in curves:
            raise ValidationError(f"duplicate [curve {idx}] section")
        if idx < 1 or idx > len(kinds) or kinds[idx - 1] != "elliptic":
            raise ValidationError(f"[curve {idx}] does not match an elliptic factor")
        kv = _keyvals(f"curve {idx}", rows, _CURVE_KEYS)
        for key in ("omega1", "omega2"):
            if key not in kv:
                raise ValidationError(f"[curve {idx}] is missing {key}")
        w1 = parse_complex(kv["omega1"][1], kv["omega1"][0])
        w2 = parse_complex(kv["omega2"][1], kv["omega2"][0])
        try:
            curves[idx] = EllipticCurveParams.from_lattice(Lattice(w1, w2))
        except (ValueError, ArithmeticError) as exc:
            raise ValidationError(f"[curve {idx}]: {exc}") from None

    factors = []
    for k, kind in enumerate(kinds, start=1):
        if kind == "torus":
            factors.append(("torus", None))
        else:
            if k not in curves:
                raise ValidationError(f"elliptic factor {k} has no [curve {k}] section")
            factors.append(("elliptic", curves[k]))
    return GroupSignature(factors=tuple(factors))


def parse_spec(text: str) -> ProblemSpec:
    """Document -> validated ProblemSpec (degree, stages, curve invariants)."""
    sections = _split_sections(text)
    sig = _build_signature(sections)
    eq_sections = [s for s in sections if s[0] == "equations"]
    if len(eq_sections) != 1 or not eq_sections[0][2]:
        raise ParseError("exactly one nonempty [equations] section required", 1)
    all_vars = sig.z_vars + sig.group_vars
    symbols = {name: Symbol(name) for name in all_vars}
    equations = [_parse_equation(line, lineno, symbols) for lineno, line in eq_sections[0][2]]
    try:
        return build_problem(sig, equations)
    except NonTriangularSystem as exc:
        raise ValidationError(str(exc)) from None


def parse_run(text: str) -> RunSetup:
    """Document including [solver] -> problem + domain + run parameters."""
    problem = parse_spec(text)
    sections = _split_sections(text)
    solver = [s for s in sections if s[0] == "solver"]
    if len(solver) != 1:
        raise ParseError("exactly one [solver] section required", 1)
    kv = _keyvals("solver", solver[0][2], _SOLVER_KEYS)
    for key in ("c", "epsilon", "theta", "eta", "radius"):
        if key not in kv:
            raise ValidationError(f"[solver] is missing {key}")

    lineno, val = kv["c"]
    c = tuple(parse_complex(t, lineno) for t in val.split(","))
    if len(c) != problem.n:
        raise ValidationError(f"line {lineno}: c has {len(c)} coordinates, expected {problem.n}")
    chart = 1
    if "chart" in kv:
        lineno, val = kv["chart"]
        if not val.isdigit() or not 1 <= int(val) <= problem.n:
            raise ValidationError(f"line {lineno}: chart must be 1..{problem.n}")
        chart = int(val)
    lineno, val = kv["radius"]
    parts = val.split(":")
    if len(parts) != 2:
        raise ParseError("radius is written MIN:MAX", lineno)
    radius = (_parse_real(parts[0], lineno), _parse_real(parts[1], lineno))
    tol = 1e-10
    if "tol" in kv:
        tol = _parse_real(kv["tol"][1], kv["tol"][0])
    max_iter = 60
    if "max_iter" in kv:
        lineno, val = kv["max_iter"]
        if not val.isdigit():
            raise ParseError("max_iter must be a positive integer", lineno)
        max_iter = int(val)
    try:
        domain = SectorDomain(
            c=c,
            chart=chart - 1,
            epsilon=_parse_real(kv["epsilon"][1], kv["epsilon"][0]),
            theta=_parse_real(kv["theta"][1], kv["theta"][0]),
            eta=_parse_real(kv["eta"][1], kv["eta"][0]),
        )
    except ValueError as exc:
        raise ValidationError(f"[solver]: {exc}") from None
    return RunSetup(problem=problem, domain=domain, radius=radius, tol=tol, max_iter=max_iter)
