"""Cone predicates, perspective primitives, and the mixed-integer conic model with a text format.

Text format (one statement per line, ``#`` starts a comment)::

    VAR <name> <count> [nonneg]
    INT <name> ...
    OBJ <coeff> <var> ... CONST <c>
    ROW LIN <le|eq> <rhs> <coeff> <var> ...
    ROW EXP <affine> ; <affine> ; <affine>
    ROW RQUAD <affine> ; <affine> ; <affine>

A variable reference is ``name[i]`` (0-based). An affine expression is
``<coeff>*<var> + ... + <const>``; coefficients carry their own sign. Numbers
are written as shortest round-trip decimals, so export and parse are exact.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset
from .errors import POS_INF, ConicParseError

__all__ = [
    "AffineExpr",
    "ConicProblem",
    "LinearRow",
    "build_conic_model",
    "evaluate_objective",
    "export_model",
    "fenchel_p_star",
    "format_model",
    "in_exp_cone",
    "in_rq_cone",
    "max_violation",
    "parse_model",
    "perspective_value",
]

DEFAULT_TOL = 1e-9

VarRef = tuple[str, int]


def in_exp_cone(x1: float, x2: float, x3: float, tol: float = DEFAULT_TOL) -> bool:
    """Membership in the closure of ``{x1 >= x2 * exp(x3 / x2), x2 > 0}``."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    if x2 > 0:
        r = x3 / x2
        if r > 700.0:
            return False
        if x1 >= x2 * math.exp(r) - tol:
            return True
    return abs(x2) <= tol and x1 >= -tol and x3 <= tol


def in_rq_cone(x1: float, x2: float, x3: float, tol: float = DEFAULT_TOL) -> bool:
    """Membership in ``{2*x1*x2 >= x3^2, x1 >= 0, x2 >= 0}``."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    return 2.0 * x1 * x2 >= x3 * x3 - tol and x1 >= -tol and x2 >= -tol


def perspective_value(w: float, z: float):
    """``w^2 / z``, closed at ``z = 0``: 0 at the origin, :data:`POS_INF` otherwise."""
    if z < 0:
        raise ValueError("z must be non-negative")
    if z > 0:
        return w * w / z
    return 0.0 if w == 0 else POS_INF


def fenchel_p_star(lam: float, zeta: float, tol: float = DEFAULT_TOL):
    """Conjugate of the perspective of ``w^2``: finite (zero) only on ``zeta = -lam^2/4``."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    return 0.0 if abs(zeta + lam * lam / 4.0) <= tol else POS_INF


@dataclass(frozen=True)
class AffineExpr:
    terms: tuple[tuple[VarRef, float], ...] = ()
    const: float = 0.0

    def evaluate(self, values: dict) -> float:
        return self.const + sum(c * float(values[name][i]) for (name, i), c in self.terms)


@dataclass(frozen=True)
class LinearRow:
    sense: str
    rhs: float
    terms: tuple[tuple[VarRef, float], ...]

    def __post_init__(self):
        if self.sense not in ("le", "eq"):
            raise ValueError(f"unknown row sense {self.sense!r}")


@dataclass(frozen=True)
class ConicProblem:
    variables: tuple[tuple[str, int, bool], ...]
    objective: tuple[tuple[VarRef, float], ...]
    constant_term: float
    exp_cones: tuple[tuple[AffineExpr, AffineExpr, AffineExpr], ...]
    rq_cones: tuple[tuple[AffineExpr, AffineExpr, AffineExpr], ...]
    linear_rows: tuple[LinearRow, ...]
    integrality: tuple[str, ...]

    @property
    def objective_map(self) -> dict:
        return dict(self.objective)

    def var_count(self, name: str) -> int:
        for vname, count, _ in self.variables:
            if vname == name:
                return count
        raise KeyError(name)


def _check_fixings(m, fixed0, fixed1):
    f0 = tuple(sorted({int(j) for j in fixed0}))
    f1 = tuple(sorted({int(j) for j in fixed1}))
    if set(f0) & set(f1):
        raise ValueError("fixed0 and fixed1 overlap")
    for j in f0 + f1:
        if not 0 <= j < m:
            raise IndexError(f"fixed index {j} out of range for m={m}")
    return f0, f1


def build_conic_model(d: Dataset, gamma: float, k: int, fixed0=(), fixed1=()) -> ConicProblem:
    """Mixed-integer conic form of the cardinality-constrained problem.

    Variables ``t`` (n), ``w`` (m), ``b``, ``s`` (m) and binary ``z`` (m).
    Each observation contributes ``(t_i, 1, x_i.w + b)`` to the exponential
    cone and each feature ``(s_j/2, z_j, w_j)`` to the rotated quadratic cone.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if k < 0:
        raise ValueError("k must be non-negative")
    n, m = d.n, d.m
    x = d.x
    if x.shape != (n, m) or d.y.shape != (n,):
        raise ValueError("dimension mismatch between x and y")
    f0, f1 = _check_fixings(m, fixed0, fixed1)

    variables = (("t", n, True), ("w", m, False), ("b", 1, False), ("s", m, True), ("z", m, False))
    inv_n = 1.0 / n
    yx = d.yf @ x / n
    obj = [(("t", i), inv_n) for i in range(n)]
    obj += [(("w", j), -float(yx[j])) for j in range(m) if yx[j] != 0.0]
    if d.y_sum != 0.0:
        obj.append((("b", 0), -d.y_sum / n))
    obj += [(("s", j), 1.0 / gamma) for j in range(m)]

    one = AffineExpr((), 1.0)
    exp_cones = []
    for i in range(n):
        row = x[i]
        terms = tuple((("w", j), float(row[j])) for j in range(m) if row[j] != 0.0)
        exp_cones.append((AffineExpr(((("t", i), 1.0),)), one, AffineExpr(terms + ((("b", 0), 1.0),))))
    rq_cones = [
        (AffineExpr(((("s", j), 0.5),)), AffineExpr(((("z", j), 1.0),)), AffineExpr(((("w", j), 1.0),)))
        for j in range(m)
    ]
    rows = [LinearRow("le", float(k), tuple((("z", j), 1.0) for j in range(m)))]
    rows += [LinearRow("eq", 0.0, ((("z", j), 1.0),)) for j in f0]
    rows += [LinearRow("eq", 1.0, ((("z", j), 1.0),)) for j in f1]
    return ConicProblem(
        variables=variables,
        objective=tuple(obj),
        constant_term=d.log_fact_mean,
        exp_cones=tuple(exp_cones),
        rq_cones=tuple(rq_cones),
        linear_rows=tuple(rows),
        integrality=("z",),
    )


def evaluate_objective(p: ConicProblem, values: dict) -> float:
    """Objective at a point given as ``{name: array}``."""
    return p.constant_term + sum(c * float(values[name][i]) for (name, i), c in p.objective)


def max_violation(p: ConicProblem, values: dict) -> float:
    """Largest violation over rows, cones, sign and integrality constraints (0 when feasible)."""
    worst = 0.0
    for name, count, nonneg in p.variables:
        v = np.asarray(values[name], dtype=float)
        if v.shape != (count,):
            raise ValueError(f"variable {name} needs {count} values")
        if nonneg and count:
            worst = max(worst, float(-v.min()))
    for name in p.integrality:
        v = np.asarray(values[name], dtype=float)
        if v.size:
            worst = max(worst, float(np.max(np.minimum(np.abs(v), np.abs(v - 1.0)))))
    for row in p.linear_rows:
        lhs = sum(c * float(values[nm][i]) for (nm, i), c in row.terms)
        worst = max(worst, lhs - row.rhs if row.sense == "le" else abs(lhs - row.rhs))
    for a, b, c in p.exp_cones:
        x1, x2, x3 = a.evaluate(values), b.evaluate(values), c.evaluate(values)
        if x2 > 0:
            worst = max(worst, x2 * math.exp(min(x3 / x2, 700.0)) - x1)
        else:
            worst = max(worst, -x2, -x1, x3)
    for a, b, c in p.rq_cones:
        x1, x2, x3 = a.evaluate(values), b.evaluate(values), c.evaluate(values)
        worst = max(worst, x3 * x3 - 2.0 * x1 * x2, -x1, -x2)
    return max(worst, 0.0)


# --------------------------------------------------------------------------- #
# text format


def _num(v: float) -> str:
    v = float(v)
    if not math.isfinite(v):
        raise ValueError("non-finite number in model")
    return repr(v)


def _ref(r: VarRef) -> str:
    return f"{r[0]}[{r[1]}]"


def _affine(e: AffineExpr) -> str:
    parts = [f"{_num(c)}*{_ref(r)}" for r, c in e.terms]
    if e.const != 0.0 or not parts:
        parts.append(_num(e.const))
    return " + ".join(parts)


def format_model(p: ConicProblem) -> str:
    out = ["# mixed-integer conic model: sparse Poisson regression with a cardinality budget"]
    for name, count, nonneg in p.variables:
        out.append(f"VAR {name} {count}" + (" nonneg" if nonneg else ""))
    if p.integrality:
        out.append("INT " + " ".join(p.integrality))
    obj = " ".join(f"{_num(c)} {_ref(r)}" for r, c in p.objective)
    out.append(f"OBJ {obj} CONST {_num(p.constant_term)}".replace("OBJ  ", "OBJ "))
    for row in p.linear_rows:
        terms = " ".join(f"{_num(c)} {_ref(r)}" for r, c in row.terms)
        out.append(f"ROW LIN {row.sense} {_num(row.rhs)} {terms}".rstrip())
    for kind, cones in (("EXP", p.exp_cones), ("RQUAD", p.rq_cones)):
        for triple in cones:
            out.append(f"ROW {kind} " + " ; ".join(_affine(e) for e in triple))
    return "\n".join(out) + "\n"


def export_model(p: ConicProblem, path) -> None:
    Path(path).write_text(format_model(p), encoding="utf-8")


_TOKEN = re.compile(r"\S+")
_REF = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\[(\d+)\]$")


class _Line:
    def __init__(self, text: str, lineno: int):
        self.text = text
        self.lineno = lineno

    def error(self, msg, col):
        return ConicParseError(msg, self.lineno, col)


def _tokens(text: str, offset: int = 0):
    return [(m.group(), m.start() + offset + 1) for m in _TOKEN.finditer(text)]


def _parse_float(line: _Line, tok, col):
    try:
        v = float(tok)
    except ValueError:
        raise line.error(f"expected a number, got {tok!r}", col) from None
    if not math.isfinite(v):
        raise line.error("non-finite number", col)
    return v


class _Parser:
    def __init__(self):
        self.variables = []
        self.sizes = {}
        self.objective = None
        self.constant = 0.0
        self.exp = []
        self.rq = []
        self.rows = []
        self.integrality = []
        self.last_line = 0

    def ref(self, line, tok, col) -> VarRef:
        m = _REF.match(tok)
        if not m:
            raise line.error(f"expected a variable reference like w[0], got {tok!r}", col)
        name, idx = m.group(1), int(m.group(2))
        if name not in self.sizes:
            raise line.error(f"undeclared variable {name!r}", col)
        if idx >= self.sizes[name]:
            raise line.error(f"index {idx} out of range for {name!r}", col)
        return name, idx

    def pairs(self, line, toks):
        if len(toks) % 2:
            tok, col = toks[-1]
            raise line.error(f"dangling token {tok!r}", col)
        out = []
        for (ct, cc), (vt, vc) in zip(toks[::2], toks[1::2]):
            out.append((self.ref(line, vt, vc), _parse_float(line, ct, cc)))
        return tuple(out)

    def affine(self, line, text, offset) -> AffineExpr:
        toks = _tokens(text, offset)
        if not toks:
            raise line.error("empty affine expression", offset + 1)
        terms, const = [], 0.0
        expect_term = True
        for tok, col in toks:
            if not expect_term:
                if tok != "+":
                    raise line.error(f"expected '+', got {tok!r}", col)
                expect_term = True
                continue
            expect_term = False
            if "*" in tok:
                c, _, v = tok.partition("*")
                terms.append((self.ref(line, v, col + len(c) + 1), _parse_float(line, c, col)))
            else:
                const += _parse_float(line, tok, col)
        if expect_term:
            raise line.error("expression ends with '+'", toks[-1][1])
        return AffineExpr(tuple(terms), const)

    def triple(self, line, body, offset):
        parts, start = [], 0
        for pos, ch in enumerate(body + ";"):
            if ch == ";":
                parts.append((body[start:pos], offset + start))
                start = pos + 1
        if len(parts) != 3:
            raise line.error(f"cone row needs 3 expressions, got {len(parts)}", offset + 1)
        return tuple(self.affine(line, text, off) for text, off in parts)

    def statement(self, line: _Line):
        text = line.text.split("#", 1)[0]
        toks = _tokens(text)
        if not toks:
            return
        kw, col = toks[0]
        if kw == "VAR":
            if len(toks) not in (3, 4):
                raise line.error("VAR needs a name, a count and an optional 'nonneg'", col)
            name, ncol = toks[1]
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
                raise line.error(f"bad variable name {name!r}", ncol)
            if name in self.sizes:
                raise line.error(f"variable {name!r} declared twice", ncol)
            try:
                count = int(toks[2][0])
            except ValueError:
                raise line.error(f"bad count {toks[2][0]!r}", toks[2][1]) from None
            if count < 0:
                raise line.error("negative count", toks[2][1])
            nonneg = False
            if len(toks) == 4:
                if toks[3][0] != "nonneg":
                    raise line.error(f"unknown flag {toks[3][0]!r}", toks[3][1])
                nonneg = True
            self.sizes[name] = count
            self.variables.append((name, count, nonneg))
        elif kw == "INT":
            for name, ncol in toks[1:]:
                if name not in self.sizes:
                    raise line.error(f"undeclared variable {name!r}", ncol)
                self.integrality.append(name)
        elif kw == "OBJ":
            if self.objective is not None:
                raise line.error("second OBJ line", col)
            names = [t for t, _ in toks]
            if "CONST" not in names:
                raise line.error("OBJ line needs 'CONST <c>'", len(text.rstrip()) + 1)
            ci = names.index("CONST")
            if ci != len(toks) - 2:
                raise line.error("CONST must be followed by exactly one number", toks[ci][1])
            self.objective = self.pairs(line, toks[1:ci])
            self.constant = _parse_float(line, *toks[ci + 1])
        elif kw == "ROW":
            if len(toks) < 2:
                raise line.error("ROW needs a kind", col)
            kind, kcol = toks[1]
            if kind == "LIN":
                if len(toks) < 4:
                    raise line.error("ROW LIN needs a sense and a right-hand side", kcol)
                sense, scol = toks[2]
                if sense not in ("le", "eq"):
                    raise line.error(f"unknown sense {sense!r}", scol)
                rhs = _parse_float(line, *toks[3])
                self.rows.append(LinearRow(sense, rhs, self.pairs(line, toks[4:])))
            elif kind in ("EXP", "RQUAD"):
                body_start = kcol - 1 + len(kind)
                trip = self.triple(line, text[body_start:], body_start)
                (self.exp if kind == "EXP" else self.rq).append(trip)
            else:
                raise line.error(f"unknown row kind {kind!r}", kcol)
        else:
            raise line.error(f"unknown keyword {kw!r}", col)

    def finish(self) -> ConicProblem:
        if self.objective is None:
            raise ConicParseError("missing OBJ line", max(1, self.last_line), 1)
        return ConicProblem(
            variables=tuple(self.variables),
            objective=self.objective,
            constant_term=self.constant,
            exp_cones=tuple(self.exp),
            rq_cones=tuple(self.rq),
            linear_rows=tuple(self.rows),
            integrality=tuple(self.integrality),
        )


def parse_model(source) -> ConicProblem:
    """Parse a model from a path or from text containing newlines."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    parser = _Parser()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        parser.last_line = lineno
        parser.statement(_Line(raw, lineno))
    return parser.finish()
