"""Command-line front end.

``ppsolve solve problem.toml`` fits the problem and writes a solution CSV,
a residual CSV and a text report into the output directory.  ``ppsolve
examples list`` shows the built-in problems and ``ppsolve examples run
NAME`` solves one of them with its defaults.

Exit status: 0 on success, 2 parse error, 3 data error, 4 accuracy
failure, 5 search failure, 6 constraint failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
import warnings
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .assembly import SampleSet, apply_operator
from .examples import get_example, list_examples, noise, synthesize
from .exceptions import (
    AccuracyError,
    ConstraintError,
    DataError,
    ParseError,
    PPSolveError,
    SearchError,
    UnsupportedError,
)
from .moments import MomentCache
from .pp import Layout
from .problem import ProblemFile, load_csv, pretty_print, read_problem, write_csv, write_text
from .solver import FitReport, search_fit, stabilized_interpolation

__all__ = ["main", "run", "RunResult", "exit_code"]

log = logging.getLogger("ppsolve")

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_DATA = 3
EXIT_ACCURACY = 4
EXIT_SEARCH = 5
EXIT_CONSTRAINT = 6


def exit_code(exc: BaseException) -> int:
    """Map an exception to the process exit status."""
    for cls, code in (
        (ParseError, EXIT_PARSE),
        (DataError, EXIT_DATA),
        (UnsupportedError, EXIT_DATA),
        (AccuracyError, EXIT_ACCURACY),
        (SearchError, EXIT_SEARCH),
        (ConstraintError, EXIT_CONSTRAINT),
    ):
        if isinstance(exc, cls):
            return code
    return 1


@dataclasses.dataclass
class RunResult:
    report: FitReport
    data: SampleSet
    grid: np.ndarray
    values: np.ndarray
    fitted: np.ndarray
    elapsed: float
    files: List[Path]
    problem: ProblemFile


# --------------------------------------------------------------------------
# problem preparation


def load_data(problem: ProblemFile, base_dir: Optional[Path] = None) -> SampleSet:
    """Read or synthesise the samples a problem refers to."""
    src = problem.data
    if src.example is not None:
        entry = get_example(src.example)
        return synthesize(entry, src.m, src.interval, src.sigma, src.seed, src.spacing)
    path = Path(src.file)
    if not path.is_absolute() and base_dir is not None:
        path = base_dir / path
    data = load_csv(path)
    if src.sigma:
        # perturb measured data on request, e.g. for sensitivity studies
        data = SampleSet(data.abscissae, data.values + noise(data.m, src.sigma, src.seed), src.sigma)
    return data


def apply_overrides(problem: ProblemFile, seed=None, sigma=None, pieces=None, lam=None,
                    no_regularization=False, positivity=False) -> ProblemFile:
    """Return a copy of ``problem`` with command-line overrides applied."""
    data, search, reg, eq = problem.data, problem.search, problem.regularization, problem.equation
    if seed is not None or sigma is not None:
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if sigma is not None:
            changes["sigma"] = float(sigma)
        try:
            data = dataclasses.replace(data, **changes)
        except ValueError as exc:
            raise ParseError(str(exc)) from None
    if pieces is not None:
        if pieces < 1:
            raise ParseError("--pieces must be at least 1")
        degrees = search.degrees if search.degrees is not None and len(search.degrees) == pieces else None
        search = dataclasses.replace(search, pieces=int(pieces), degrees=degrees)
    if no_regularization and lam is not None:
        raise ParseError("--lambda and --no-regularization are mutually exclusive")
    if no_regularization:
        reg = dataclasses.replace(reg, enabled=False, lam=None)
    elif lam is not None:
        if lam < 0:
            raise ParseError("--lambda must be non-negative")
        reg = dataclasses.replace(reg, enabled=True, lam=float(lam))
    if positivity:
        if eq is None:
            raise ParseError("--positivity needs an equation")
        eq = dataclasses.replace(eq, constraints=dataclasses.replace(eq.constraints, positivity=True))
    return dataclasses.replace(problem, equation=eq, data=data, search=search, regularization=reg)


def pinned(problem: ProblemFile, report: FitReport) -> ProblemFile:
    """The problem with the structure and lambda chosen by ``report`` fixed."""
    search = dataclasses.replace(problem.search, pieces=report.pieces, degrees=report.degrees)
    reg = problem.regularization
    if report.regularized:
        reg = dataclasses.replace(reg, enabled=True, lam=report.lam)
    else:
        reg = dataclasses.replace(reg, enabled=False, lam=None)
    return dataclasses.replace(problem, search=search, regularization=reg)


def output_grid(lo: float, hi: float, m: int, problem: ProblemFile) -> np.ndarray:
    n = problem.output.grid_size or problem.output.points_per_datum * m
    return np.linspace(lo, hi, n)


# --------------------------------------------------------------------------
# running


def solve_problem(problem: ProblemFile, data: SampleSet, cache: Optional[MomentCache] = None):
    """Fit ``problem`` to ``data``; returns the report and ``A·c`` at the data."""
    if problem.interpolation_degree is not None:
        report = stabilized_interpolation(data.abscissae, data.values, problem.interpolation_degree,
                                          problem.regularization)
        sol = report.solution
        return report, sol(data.abscissae), (float(data.abscissae[0]), float(data.abscissae[-1]))
    if problem.equation is None:
        raise ParseError("problem has neither an equation nor an interpolation degree")
    eq = problem.equation.build()
    cache = cache if cache is not None else MomentCache()
    report = search_fit(eq, data, problem.search, problem.regularization, cache=cache)
    sol = report.solution
    layout = Layout(sol.breakpoints, sol.degrees)
    fitted = apply_operator(eq, sol.coefficients, layout, data.abscissae, cache=cache)
    return report, fitted, (eq.domain.lo, eq.domain.hi)


def _report_text(problem: ProblemFile, data: SampleSet, report: FitReport, elapsed: float,
                 caught: Sequence[str], source: str) -> str:
    lines = [
        f"ppsolve {__version__}",
        f"problem: {source}",
        f"data: m = {data.m}, x in [{float(data.abscissae[0])!r}, {float(data.abscissae[-1])!r}]",
    ]
    if problem.data.example is not None:
        sigma = data.noise_sigma if data.noise_sigma is not None else 0.0
        lines.append(f"example: {problem.data.example}, sigma = {sigma!r}, seed = {problem.data.seed}")
    lines.append(report.summary())
    lines.append(f"elapsed_seconds: {elapsed:.3f}")
    for msg in caught:
        if msg not in report.warnings:
            lines.append(f"warning: {msg}")
    lines.append("")
    lines.append("# replay: the problem below pins the chosen structure and lambda")
    lines.append(pretty_print(pinned(problem, report)))
    return "\n".join(lines)


def run(problem: ProblemFile, out_dir, base_dir=None, source: str = "<problem>") -> RunResult:
    """Solve a problem and write its output files into ``out_dir``."""
    out = Path(out_dir)
    data = load_data(problem, Path(base_dir) if base_dir is not None else None)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        report, fitted, (lo, hi) = solve_problem(problem, data)
    elapsed = time.perf_counter() - t0
    caught = list(dict.fromkeys(str(w.message) for w in rec))
    for msg in caught:
        log.warning(msg)
    grid = output_grid(lo, hi, data.m, problem)
    values = report.solution(grid)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc.strerror}") from None
    files = [out / problem.output.solution, out / problem.output.residuals, out / problem.output.report]
    write_csv(files[0], ("t", "y"), (grid, values))
    write_csv(files[1], ("x", "phi", "fitted", "residual"),
              (data.abscissae, data.values, fitted, data.values - fitted))
    write_text(files[2], _report_text(problem, data, report, elapsed, caught, source))
    return RunResult(report, data, grid, values, fitted, elapsed, files, problem)


# --------------------------------------------------------------------------
# argument parsing


def _add_solve_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", default=".", help="directory for the output files (default: .)")
    p.add_argument("--seed", type=int, help="noise seed for synthesised data")
    p.add_argument("--sigma", type=float, help="noise standard deviation")
    p.add_argument("--pieces", type=int, help="pin the number of pieces")
    p.add_argument("--lambda", dest="lam", type=float, help="pin the regularization parameter")
    p.add_argument("--no-regularization", action="store_true", help="solve without a stabilizer")
    p.add_argument("--positivity", action="store_true", help="require y >= 0 on the output grid")


class _ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors become exit status 2 through main() instead of SystemExit
    def error(self, message):
        raise _ArgumentError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="ppsolve",
        description="Piecewise-polynomial least-squares solver for integro-differential equations.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    solve = sub.add_parser("solve", help="solve a problem file")
    solve.add_argument("problem", help="TOML problem file")
    _add_solve_options(solve)
    ex = sub.add_parser("examples", help="built-in example problems")
    ex_sub = ex.add_subparsers(dest="action", metavar="ACTION")
    ex_sub.add_parser("list", help="list the built-in examples")
    ex_run = ex_sub.add_parser("run", help="solve a built-in example")
    ex_run.add_argument("name")
    _add_solve_options(ex_run)
    return parser


def _dispatch(args) -> int:
    if args.command == "examples" and args.action == "list":
        print(list_examples())
        return EXIT_OK
    overrides = dict(seed=args.seed, sigma=args.sigma, pieces=args.pieces, lam=args.lam,
                     no_regularization=args.no_regularization, positivity=args.positivity)
    if args.command == "solve":
        path = Path(args.problem)
        problem = read_problem(path)
        base, source = path.parent, str(path)
    else:
        problem = get_example(args.name).problem()
        base, source = None, f"example {args.name}"
    problem = apply_overrides(problem, **overrides)
    result = run(problem, args.out_dir, base, source)
    r = result.report
    print(f"pieces={r.pieces} degrees={','.join(map(str, r.degrees))} lambda={r.lam!r} "
          f"residual={r.residual_norm:.6g} time={result.elapsed:.2f}s")
    for f in result.files:
        print(f"wrote {f}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _ArgumentError as exc:
        print(f"ppsolve: error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    if args.command is None or (args.command == "examples" and args.action is None):
        parser.print_usage(sys.stderr)
        return EXIT_PARSE
    try:
        return _dispatch(args)
    except PPSolveError as exc:
        print(f"ppsolve: error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
