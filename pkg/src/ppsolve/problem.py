"""Problem descriptions, problem files, and CSV input/output.

A problem file is TOML.  Every section is optional except that the file
must either describe an ``[equation]`` or name a built-in example in
``[data]``::

    [equation]
    domain = [0.0, 5.0]

    [[equation.derivative]]
    order = 0
    multiplier = "1"

    [[equation.integral]]
    type = "volterra"
    kernel = "2*x - t"
    lower = 0.0

    [data]
    example = "volterra2_eq35"
    m = 100
    sigma = 0.01
    seed = 0

Kernels are either a built-in name (``laplace``, ``nmr``, ``abel``) or an
expression in ``x`` and ``t``; multipliers are expressions in ``x``.
"""

from __future__ import annotations

import csv
import math
import os
import re
import tempfile
from dataclasses import MISSING, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import tomli
import tomli_w

from .assembly import DerivativeTerm, EquationSpec, SampleSet
from .constraints import ConstraintSpec
from .exceptions import DataError, ParseError
from .expr import Expression, kernel_kind
from .moments import IntegralTerm, Kernel, abel_kernel, laplace_kernel, nmr_kernel
from .pp import Interval
from .solver import RegularizationConfig, SearchConfig

__all__ = [
    "DerivativeDescription",
    "IntegralDescription",
    "EquationDescription",
    "DataSource",
    "OutputConfig",
    "ProblemFile",
    "parse_problem",
    "read_problem",
    "pretty_print",
    "load_csv",
    "write_csv",
    "build_kernel",
]

NAMED_KERNELS = {"laplace": laplace_kernel, "nmr": nmr_kernel, "abel": abel_kernel}
SPACINGS = ("uniform", "log")


def _expr_text(value) -> str:
    if isinstance(value, str):
        Expression(value)
        return value.strip()
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"expected an expression or a number, got {value!r}")
    return repr(float(value))


def _multiplier(source: str):
    expr = Expression(source)
    try:
        c = float(source)
    except ValueError:
        return expr
    return lambda x: np.full(np.shape(x), c)


def build_kernel(source: str, singularity: Optional[str] = None) -> Kernel:
    """Compile a kernel name or expression, attaching a closed-form tag when one applies."""
    name = source.strip()
    if name in NAMED_KERNELS:
        return NAMED_KERNELS[name]()
    kind = kernel_kind(name)
    if kind in NAMED_KERNELS and singularity is None:
        return replace(NAMED_KERNELS[kind](), source=name)
    expr = Expression(name, variables=("x", "t"))
    tag = kind if kind == "convolution-trig" else "general"
    return Kernel(expr, tag, singularity or "none", name)


@dataclass(frozen=True)
class DerivativeDescription:
    order: int
    multiplier: str = "1"

    def __post_init__(self):
        object.__setattr__(self, "multiplier", _expr_text(self.multiplier))

    def build(self) -> DerivativeTerm:
        return DerivativeTerm(int(self.order), _multiplier(self.multiplier), self.multiplier)


@dataclass(frozen=True)
class IntegralDescription:
    type: str
    kernel: str
    lower: float = 0.0
    upper: float = math.inf
    multiplier: str = "1"
    singularity: Optional[str] = None

    def __post_init__(self):
        if self.type not in ("fredholm", "volterra"):
            raise ParseError(f"integral type must be 'fredholm' or 'volterra', got {self.type!r}")
        object.__setattr__(self, "multiplier", _expr_text(self.multiplier))
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))
        build_kernel(self.kernel, self.singularity)

    @property
    def kind(self) -> str:
        return build_kernel(self.kernel, self.singularity).kind

    def build(self) -> IntegralTerm:
        return IntegralTerm(
            build_kernel(self.kernel, self.singularity),
            self.type,
            self.lower,
            self.upper,
            _multiplier(self.multiplier),
            self.multiplier,
        )


@dataclass(frozen=True)
class EquationDescription:
    """Declarative form of an equation; ``build`` compiles it."""

    domain: Tuple[float, float]
    derivatives: Tuple[DerivativeDescription, ...] = ()
    integrals: Tuple[IntegralDescription, ...] = ()
    constraints: ConstraintSpec = field(default_factory=ConstraintSpec)
    affine_shift: float = 0.0

    def __post_init__(self):
        lo, hi = (float(v) for v in self.domain)
        Interval(lo, hi)
        object.__setattr__(self, "domain", (lo, hi))
        object.__setattr__(self, "derivatives", tuple(self.derivatives))
        object.__setattr__(self, "integrals", tuple(self.integrals))
        object.__setattr__(self, "affine_shift", float(self.affine_shift))

    def build(self) -> EquationSpec:
        return EquationSpec(
            Interval(*self.domain),
            [d.build() for d in self.derivatives],
            [t.build() for t in self.integrals],
            self.constraints,
            self.affine_shift,
        )


@dataclass(frozen=True)
class DataSource:
    """Either a CSV file or a built-in example with synthesis settings."""

    file: Optional[str] = None
    example: Optional[str] = None
    m: Optional[int] = None
    interval: Optional[Tuple[float, float]] = None
    sigma: Optional[float] = None
    seed: int = 0
    spacing: Optional[str] = None

    def __post_init__(self):
        if (self.file is None) == (self.example is None):
            raise ParseError("data needs exactly one of 'file' or 'example'")
        if self.interval is not None:
            object.__setattr__(self, "interval", tuple(float(v) for v in self.interval))
        if self.sigma is not None:
            if self.sigma < 0:
                raise ParseError("sigma must be non-negative")
            object.__setattr__(self, "sigma", float(self.sigma))
        if self.m is not None and self.m < 4:
            raise ParseError("m must be at least 4")
        if self.spacing is not None and self.spacing not in SPACINGS:
            raise ParseError(f"spacing must be one of {SPACINGS}")


@dataclass(frozen=True)
class OutputConfig:
    points_per_datum: int = 5
    grid_size: Optional[int] = None
    solution: str = "solution.csv"
    residuals: str = "residuals.csv"
    report: str = "report.txt"

    def __post_init__(self):
        if self.points_per_datum < 1:
            raise ParseError("points_per_datum must be at least 1")
        if self.grid_size is not None and self.grid_size < 2:
            raise ParseError("grid_size must be at least 2")


@dataclass(frozen=True)
class ProblemFile:
    equation: Optional[EquationDescription]
    data: DataSource
    search: SearchConfig = field(default_factory=SearchConfig)
    regularization: RegularizationConfig = field(default_factory=RegularizationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    interpolation_degree: Optional[int] = None


# --------------------------------------------------------------------------
# parsing

_SEARCH_KEYS = {
    "max_pieces": int,
    "n_max": int,
    "degree_grid": list,
    "tie_tolerance": float,
    "min_degree": int,
    "pieces": int,
    "degrees": list,
    "stagnation_tol": float,
    "stagnation_window": int,
    "max_sweeps": int,
    "oversampling": float,
    "positivity_grid": int,
}
_REG_KEYS = {
    "stabilizer": str,
    "stabilizer_points": int,
    "lambda_grid": list,
    "criterion": str,
    "enabled": bool,
    "lambda": float,
    "relative_grid": bool,
}
_SCHEMA = {
    "": {"equation", "data", "search", "regularization", "output", "interpolation"},
    "equation": {"domain", "derivative", "integral", "constraints", "affine_shift"},
    "equation.derivative": {"order", "multiplier"},
    "equation.integral": {"type", "kernel", "lower", "upper", "multiplier", "singularity"},
    "equation.constraints": {"initial", "boundary", "continuity", "positivity"},
    "data": {"file", "example", "m", "interval", "sigma", "seed", "spacing"},
    "search": set(_SEARCH_KEYS),
    "regularization": set(_REG_KEYS),
    "output": {f.name for f in fields(OutputConfig)},
    "interpolation": {"degree"},
}


class _Locator:
    """Best-effort line numbers for key paths in TOML text."""

    _HEADER = re.compile(r"^\s*\[\[?\s*([^\]]+?)\s*\]\]?\s*(#.*)?$")
    _KEY = re.compile(r"^\s*([A-Za-z0-9_\-\"']+)\s*=")

    def __init__(self, text: str):
        self.entries = []
        section = ""
        for no, line in enumerate(text.splitlines(), 1):
            m = self._HEADER.match(line)
            if m:
                section = m.group(1).replace(" ", "")
                self.entries.append((section, None, no))
                continue
            m = self._KEY.match(line)
            if m:
                self.entries.append((section, m.group(1).strip("\"'"), no))

    def line(self, section: str, key: Optional[str] = None) -> Optional[int]:
        for sec, k, no in self.entries:
            if sec == section and (key is None or k == key):
                return no
        if key is not None:
            return self.line(section)
        return None


def _fail(loc: _Locator, section: str, key: Optional[str], message: str):
    path = ".".join(p for p in (section, key) if p)
    raise ParseError(message, line=loc.line(section, key), key=path or None)


def _check_keys(loc, section, table, where=None):
    allowed = _SCHEMA[section]
    for key in table:
        if key not in allowed:
            hint = f"; expected one of {', '.join(sorted(allowed))}"
            _fail(loc, where if where is not None else section, key, f"unknown key '{key}'{hint}")


def _typed(loc, section, key, value, kind):
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, float) and value.is_integer():
        return int(value)
    if not isinstance(value, kind) or (kind is not bool and isinstance(value, bool)):
        _fail(loc, section, key, f"'{key}' must be of type {kind.__name__}, got {value!r}")
    return value


def _pair(loc, section, key, value):
    if not (isinstance(value, list) and len(value) == 2):
        _fail(loc, section, key, f"'{key}' must be a two-element list")
    try:
        return tuple(float(v) for v in value)
    except (TypeError, ValueError):
        _fail(loc, section, key, f"'{key}' must contain numbers")


def _equation(loc, table) -> EquationDescription:
    _check_keys(loc, "equation", table)
    if "domain" not in table:
        _fail(loc, "equation", None, "equation needs a 'domain'")
    domain = _pair(loc, "equation", "domain", table["domain"])
    derivs, integrals = [], []
    for item in table.get("derivative", []):
        _check_keys(loc, "equation.derivative", item)
        if "order" not in item:
            _fail(loc, "equation.derivative", None, "derivative term needs an 'order'")
        derivs.append(DerivativeDescription(_typed(loc, "equation.derivative", "order", item["order"], int),
                                            item.get("multiplier", "1")))
    for item in table.get("integral", []):
        _check_keys(loc, "equation.integral", item)
        for need in ("type", "kernel"):
            if need not in item:
                _fail(loc, "equation.integral", None, f"integral term needs '{need}'")
        integrals.append(IntegralDescription(
            item["type"], item["kernel"], item.get("lower", 0.0), item.get("upper", math.inf),
            item.get("multiplier", "1"), item.get("singularity"),
        ))
    cons = table.get("constraints", {})
    _check_keys(loc, "equation.constraints", cons)
    spec = ConstraintSpec(
        initial=tuple(cons["initial"]) if "initial" in cons else None,
        boundary=tuple(cons["boundary"]) if "boundary" in cons else None,
        continuity_order=_typed(loc, "equation.constraints", "continuity", cons.get("continuity", 2), int),
        positivity=_typed(loc, "equation.constraints", "positivity", cons.get("positivity", False), bool),
    )
    shift = _typed(loc, "equation", "affine_shift", table.get("affine_shift", 0.0), float)
    return EquationDescription(domain, tuple(derivs), tuple(integrals), spec, shift)


def _config(loc, section, table, keys, cls, rename=None):
    _check_keys(loc, section, table)
    kwargs = {}
    for key, value in table.items():
        value = _typed(loc, section, key, value, keys[key])
        if keys[key] is list:
            value = tuple(value)
        kwargs[(rename or {}).get(key, key)] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        _fail(loc, section, None, str(exc))


def parse_problem(text: str, base: Optional[ProblemFile] = None) -> ProblemFile:
    """Parse and validate problem-file text.

    Parameters
    ----------
    text : str
        TOML source.
    base : ProblemFile, optional
        Defaults for sections the text omits.  When the text names a built-in
        example and ``base`` is not given, the example's own settings are used.

    Raises
    ------
    ParseError
        Malformed TOML, unknown keys, or invalid values.  The error carries
        the line number and dotted key path when they are known.
    """
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ParseError(f"malformed problem file: {exc}", line=int(m.group(1)) if m else None) from None
    loc = _Locator(text)
    _check_keys(loc, "", doc, where="")
    for name in ("equation", "data", "search", "regularization", "output", "interpolation"):
        if name in doc and not isinstance(doc[name], dict):
            _fail(loc, name, None, f"'{name}' must be a table")
    if "data" not in doc:
        _fail(loc, "", None, "problem file needs a [data] section")
    data_t = doc["data"]
    _check_keys(loc, "data", data_t)
    try:
        data = DataSource(
            file=data_t.get("file"),
            example=data_t.get("example"),
            m=_typed(loc, "data", "m", data_t["m"], int) if "m" in data_t else None,
            interval=_pair(loc, "data", "interval", data_t["interval"]) if "interval" in data_t else None,
            sigma=_typed(loc, "data", "sigma", data_t["sigma"], float) if "sigma" in data_t else None,
            seed=_typed(loc, "data", "seed", data_t.get("seed", 0), int),
            spacing=data_t.get("spacing"),
        )
    except ParseError as exc:
        if exc.line is None:
            _fail(loc, "data", None, str(exc))
        raise
    if base is None and data.example is not None:
        from .examples import get_example

        try:
            base = get_example(data.example).problem()
        except DataError as exc:
            _fail(loc, "data", "example", str(exc))
    if "equation" in doc:
        try:
            equation = _equation(loc, doc["equation"])
        except ParseError as exc:
            if exc.line is None:
                _fail(loc, "equation", None, str(exc))
            raise
    elif base is not None:
        equation = base.equation
    else:
        _fail(loc, "", None, "problem file needs an [equation] section or a built-in example")
    search = (_config(loc, "search", doc["search"], _SEARCH_KEYS, SearchConfig) if "search" in doc
              else (base.search if base else SearchConfig()))
    reg = (_config(loc, "regularization", doc["regularization"], _REG_KEYS, RegularizationConfig,
                   {"lambda": "lam"}) if "regularization" in doc
           else (base.regularization if base else RegularizationConfig()))
    out_keys = {f.name: (str if f.name in ("solution", "residuals", "report") else int)
                for f in fields(OutputConfig)}
    output = (_config(loc, "output", doc["output"], out_keys, OutputConfig) if "output" in doc
              else (base.output if base else OutputConfig()))
    interp = base.interpolation_degree if base else None
    if "interpolation" in doc:
        _check_keys(loc, "interpolation", doc["interpolation"])
        interp = _typed(loc, "interpolation", "degree", doc["interpolation"].get("degree"), int)
    return ProblemFile(equation, data, search, reg, output, interp)


def read_problem(path) -> ProblemFile:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read problem file {path}: {exc.strerror}") from None
    return parse_problem(text)


# --------------------------------------------------------------------------
# printing


def _drop_defaults(obj, skip=()) -> Dict[str, Any]:
    out = {}
    for f in fields(obj):
        if f.name in skip:
            continue
        value = getattr(obj, f.name)
        default = f.default if f.default_factory is MISSING else f.default_factory()
        if value is None or value == default:
            continue
        out[f.name] = list(value) if isinstance(value, tuple) else value
    return out


def _equation_table(eq: EquationDescription) -> Dict[str, Any]:
    table: Dict[str, Any] = {"domain": list(eq.domain)}
    if eq.affine_shift:
        table["affine_shift"] = eq.affine_shift
    if eq.derivatives:
        table["derivative"] = [{"order": d.order, "multiplier": d.multiplier} for d in eq.derivatives]
    if eq.integrals:
        items = []
        for t in eq.integrals:
            item = {"type": t.type, "kernel": t.kernel, "lower": t.lower}
            if t.type == "fredholm":
                item["upper"] = t.upper
            item["multiplier"] = t.multiplier
            if t.singularity is not None:
                item["singularity"] = t.singularity
            items.append(item)
        table["integral"] = items
    c = eq.constraints
    cons: Dict[str, Any] = {}
    if c.initial is not None:
        cons["initial"] = list(c.initial)
    if c.boundary is not None:
        cons["boundary"] = list(c.boundary)
    if c.continuity_order != 2:
        cons["continuity"] = c.continuity_order
    if c.positivity:
        cons["positivity"] = True
    if cons:
        table["constraints"] = cons
    return table


def pretty_print(problem: ProblemFile) -> str:
    """Render a problem as TOML that parses back to an equal ``ProblemFile``.

    Every section is written out in full so the text does not depend on
    built-in example defaults.
    """
    doc: Dict[str, Any] = {}
    if problem.equation is not None:
        doc["equation"] = _equation_table(problem.equation)
    data = _drop_defaults(problem.data)
    data["seed"] = problem.data.seed
    doc["data"] = data
    doc["search"] = _drop_defaults(problem.search)
    reg = _drop_defaults(problem.regularization)
    if "lam" in reg:
        reg["lambda"] = reg.pop("lam")
    doc["regularization"] = reg
    doc["output"] = _drop_defaults(problem.output)
    if problem.interpolation_degree is not None:
        doc["interpolation"] = {"degree": problem.interpolation_degree}
    return tomli_w.dumps(doc)


# --------------------------------------------------------------------------
# CSV


def _cells(line: str) -> List[str]:
    if "," in line:
        return next(csv.reader([line]))
    return line.split()


def load_csv(path) -> SampleSet:
    """Read two numeric columns ``x, phi``.

    Comma- or whitespace-separated; a non-numeric first row is taken as a
    header.  Rows are sorted by ``x``.

    Raises
    ------
    DataError
        Missing file, non-numeric cells, duplicate abscissae, or fewer than
        four rows.
    """
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read data file {path}: {exc.strerror}") from None
    rows = []
    for no, line in enumerate(lines, 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cells = [c.strip() for c in _cells(line)]
        try:
            values = [float(c) for c in cells]
        except ValueError:
            if not rows and no == next(i for i, l in enumerate(lines, 1) if l.strip()):
                continue
            raise DataError(f"{path}, row {no}: non-numeric cell in {line!r}") from None
        if len(values) < 2:
            raise DataError(f"{path}, row {no}: expected two columns, got {len(values)}")
        rows.append((values[0], values[1], no))
    if len(rows) < 4:
        raise DataError(f"{path}: need at least 4 data rows, got {len(rows)}")
    rows.sort(key=lambda r: r[0])
    for a, b in zip(rows, rows[1:]):
        if a[0] == b[0]:
            raise DataError(f"{path}, row {b[2]}: duplicate abscissa {float(b[0])!r} (also on row {a[2]})")
    x = np.array([r[0] for r in rows])
    y = np.array([r[1] for r in rows])
    return SampleSet(x, y)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_csv(path, header: Sequence[str], columns: Sequence[np.ndarray]) -> None:
    """Write columns atomically (temporary file then rename), 17 significant digits."""
    cols = [np.asarray(c, dtype=float).reshape(-1) for c in columns]
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=".csv", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(header)
            for row in zip(*cols):
                w.writerow([_fmt(v) for v in row])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=".txt", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
