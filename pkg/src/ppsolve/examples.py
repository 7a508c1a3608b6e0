"""Built-in example problems with exact solutions and data synthesis.

Each entry carries the equation, the exact solution when one is known, a
right-hand-side generator, and default sampling settings.  ``synthesize``
adds seeded normal noise from a Philox counter-based generator, so a given
``(m, interval, sigma, seed)`` produces the same samples on every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy import integrate, special

from .assembly import SampleSet
from .constraints import ConstraintSpec
from .exceptions import AccuracyError, DataError
from .problem import (
    DataSource,
    DerivativeDescription,
    EquationDescription,
    IntegralDescription,
    ProblemFile,
)
from .solver import RegularizationConfig, SearchConfig

__all__ = ["ExampleEntry", "REGISTRY", "get_example", "list_examples", "synthesize", "abscissae", "noise"]


@dataclass(frozen=True)
class ExampleEntry:
    name: str
    title: str
    equation: EquationDescription
    rhs: Callable[[np.ndarray], np.ndarray]
    m: int
    interval: Tuple[float, float]
    sigma: float
    exact: Optional[Callable[[np.ndarray], np.ndarray]] = None
    exact_source: Optional[str] = None
    spacing: str = "uniform"
    parameters: Dict[str, object] = field(default_factory=dict)
    search: SearchConfig = field(default_factory=SearchConfig)
    regularization: RegularizationConfig = field(default_factory=RegularizationConfig)
    interpolation_degree: Optional[int] = None

    def problem(self, seed: int = 0, **data) -> ProblemFile:
        """A problem file that runs this example with its defaults."""
        src = DataSource(example=self.name, seed=seed, **data)
        return ProblemFile(self.equation, src, self.search, self.regularization,
                           interpolation_degree=self.interpolation_degree)

    def describe(self) -> str:
        parts = [f"{self.name}: {self.title}"]
        if self.exact_source:
            parts.append(f"    exact solution: y = {self.exact_source}")
        else:
            parts.append("    exact solution: unknown")
        for key, value in self.parameters.items():
            parts.append(f"    {key} = {_fmt_param(value)}")
        lo, hi = self.interval
        parts.append(
            f"    defaults: m = {self.m}, data interval = [{lo:g}, {hi:g}] ({self.spacing}), sigma = {self.sigma:g}"
        )
        return "\n".join(parts)


def _fmt_param(value) -> str:
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join(f"{float(v):g}" for v in value) + "]"
    return f"{value:g}" if isinstance(value, float) else str(value)


# --------------------------------------------------------------------------
# right-hand sides and exact solutions


def _gamma_mixture(a, alpha, beta):
    a, alpha, beta = (np.asarray(v, dtype=float) for v in (a, alpha, beta))

    def density(t):
        t = np.asarray(t, dtype=float)
        tt = np.maximum(t, 1e-300)[..., None]
        logd = (alpha - 1) * np.log(tt) - beta * tt + alpha * np.log(beta) - special.gammaln(alpha)
        out = np.sum(a * np.exp(logd), axis=-1)
        return np.where(t > 0, out, 0.0)

    return density


def _laplace_of_mixture(a, alpha, beta):
    a, alpha, beta = (np.asarray(v, dtype=float) for v in (a, alpha, beta))

    def F(x):
        x = np.asarray(x, dtype=float)[..., None]
        return np.sum(a * (beta / (x + beta)) ** alpha, axis=-1)

    return F


def _nmr_of_mixture(a, alpha, beta):
    # int_0^inf exp(-x/t) t^(al-1) exp(-be t) dt = 2 (x/be)^(al/2) K_al(2 sqrt(be x))
    a, alpha, beta = (np.asarray(v, dtype=float) for v in (a, alpha, beta))

    def F(x):
        x = np.asarray(x, dtype=float)
        xx = np.maximum(x, 1e-300)[..., None]
        z = 2.0 * np.sqrt(beta * xx)
        logv = (math.log(2.0) + 0.5 * alpha * np.log(beta * xx) - special.gammaln(alpha)
                + np.log(special.kve(alpha, z)) - z)
        return np.where(x > 0, np.sum(a * np.exp(logv), axis=-1), np.sum(a))

    return F


def _ide_exact(x):
    w = math.sqrt(7.0) / 2.0
    x = np.asarray(x, dtype=float)
    return 0.75 * np.exp(x) + np.exp(-x / 2) * (2 * w * np.cos(w * x) + 3 * np.sin(w * x)) / (8 * w)


def _fr1_rhs(x):
    # int_0^10 t sin(x t) dt, with its Taylor series near x = 0
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-2
    xs = x[~small]
    out[~small] = (np.sin(10 * xs) - 10 * xs * np.cos(10 * xs)) / xs**2
    xz = x[small]
    acc = np.zeros_like(xz)
    for k in range(8):
        acc += (-1) ** k * xz ** (2 * k + 1) * 10.0 ** (2 * k + 3) / (math.factorial(2 * k + 1) * (2 * k + 3))
    out[small] = acc
    return out


def _fr2_rhs(x):
    # y = exp(-x) contributes itself plus int_0^100 exp(-(x + 1) t) dt
    x = np.asarray(x, dtype=float)
    return np.exp(-x) - np.expm1(-100.0 * (x + 1)) / (x + 1)


def _abel_rhs(x):
    # int_0^x sin(t) / sqrt(x - t) dt by weighted quadrature
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for i, xi in enumerate(x.reshape(-1)):
        if xi <= 0:
            continue
        val, err = integrate.quad(np.sin, 0.0, xi, weight="alg", wvar=(0.0, -0.5),
                                  epsabs=1e-14, epsrel=1e-13, limit=200)
        if not err <= 1e-10 * max(1.0, abs(val)):
            raise AccuracyError(f"right-hand side quadrature failed at x = {float(xi)!r}", error_estimate=err)
        out.reshape(-1)[i] = val
    return out


def _runge(x):
    return 1.0 / (1.0 + 25.0 * np.asarray(x, dtype=float) ** 2)


def _zeros(x):
    return np.zeros_like(np.asarray(x, dtype=float))


# --------------------------------------------------------------------------
# registry

_D = DerivativeDescription
_I = IntegralDescription

LAPLACE_PARAMS = {"a": [1.0, 6.0], "alpha": [10.0, 5.0], "beta": [50.0, 5.0]}
NMR_PARAMS = {"a": [1.0, 2.0, 6.0], "alpha": [10.0, 13.0, 15.0], "beta": [100.0, 13.0, 1.5]}
# noisy well-posed examples with m close to the model size select structure by GCV
_NOISY_WELL_POSED = RegularizationConfig(enabled=True)
_FIRST_KIND_GRID = tuple(float(v) for v in np.logspace(-6, 2, 33))


def _entries():
    j0_100 = float(special.j0(100.0))
    yield ExampleEntry(
        name="bessel_bvp_eq32",
        title="x^2 y'' + x y' + x^2 y = 0, y(0) = J0(0), y(100) = J0(100), solved for z = y + 1",
        equation=EquationDescription(
            (0.0, 100.0),
            (_D(2, "x**2"), _D(1, "x"), _D(0, "x**2")),
            constraints=ConstraintSpec(boundary=(1.0, j0_100)),
            affine_shift=1.0,
        ),
        rhs=_zeros,
        m=1000,
        interval=(0.0, 100.0),
        sigma=0.0,
        exact=special.j0,
        exact_source="J0(x)",
        parameters={"nu": 0.0, "affine_shift": 1.0},
    )
    yield ExampleEntry(
        name="ivp_eq33",
        title="y'' + y' + y = cos x - sin x, y(0) = 1, y'(0) = 1",
        equation=EquationDescription(
            (0.0, 10.0),
            (_D(2), _D(1), _D(0)),
            constraints=ConstraintSpec(initial=(1.0, 1.0)),
        ),
        rhs=lambda x: np.cos(x) - np.sin(x),
        m=800,
        interval=(0.0, 10.0),
        sigma=0.01,
        exact=lambda x: np.sin(x) + np.cos(x),
        exact_source="sin(x) + cos(x)",
    )
    yield ExampleEntry(
        name="ide_eq34",
        title="y' - 2 int_0^x sin(x - t) y(t) dt = cos x, y(0) = 1",
        equation=EquationDescription(
            (0.0, 3.0),
            (_D(1),),
            (_I("volterra", "sin(x - t)", 0.0, multiplier="-2"),),
            constraints=ConstraintSpec(initial=(1.0,)),
        ),
        rhs=np.cos,
        m=100,
        interval=(0.0, 3.0),
        sigma=0.01,
        exact=_ide_exact,
        exact_source="3 exp(x)/4 + exp(-x/2) (2 w cos(w x) + 3 sin(w x)) / (8 w), w = sqrt(7)/2",
        regularization=_NOISY_WELL_POSED,
    )
    yield ExampleEntry(
        name="volterra2_eq35",
        title="y + int_0^x (2x - t) y(t) dt = -1",
        equation=EquationDescription((0.0, 5.0), (_D(0),), (_I("volterra", "2*x - t", 0.0),)),
        rhs=lambda x: -np.ones_like(np.asarray(x, dtype=float)),
        m=100,
        interval=(0.0, 5.0),
        sigma=0.01,
        exact=lambda x: (np.asarray(x) ** 2 - 1) * np.exp(-np.asarray(x) ** 2 / 2),
        exact_source="(x**2 - 1) exp(-x**2/2)",
        regularization=_NOISY_WELL_POSED,
    )
    yield ExampleEntry(
        name="fredholm2_eq37",
        title="y + int_0^100 exp(-x t) y(t) dt = exp(-x) + (1 - exp(-100 (x + 1))) / (x + 1)",
        equation=EquationDescription((0.0, 100.0), (_D(0),), (_I("fredholm", "laplace", 0.0, 100.0),)),
        rhs=_fr2_rhs,
        m=100,
        interval=(0.0, 100.0),
        sigma=1e-4,
        exact=lambda x: np.exp(-np.asarray(x)),
        exact_source="exp(-x)",
        parameters={"b": 100.0},
        regularization=_NOISY_WELL_POSED,
    )
    yield ExampleEntry(
        name="volterra1_eq38",
        title="int_0^x sin(x - t) y(t) dt = x sin(x) / 2",
        equation=EquationDescription((0.0, 50.0), (), (_I("volterra", "sin(x - t)", 0.0),)),
        rhs=lambda x: 0.5 * np.asarray(x) * np.sin(x),
        m=500,
        interval=(0.0, 50.0),
        sigma=0.01,
        exact=np.cos,
        exact_source="cos(x)",
    )
    yield ExampleEntry(
        name="abel_eq39",
        title="int_0^x y(t) / sqrt(x - t) dt = phi(x), phi by quadrature of y = sin t",
        equation=EquationDescription((0.0, 3.0), (), (_I("volterra", "abel", 0.0),)),
        rhs=_abel_rhs,
        m=300,
        interval=(0.0, 3.0),
        sigma=0.01,
        exact=np.sin,
        exact_source="sin(x)",
    )
    yield ExampleEntry(
        name="fredholm1_eq41sin",
        title="int_0^10 y(t) sin(x t) dt = (sin 10x - 10x cos 10x) / x^2, x in [-1, 15]",
        equation=EquationDescription((0.0, 10.0), (), (_I("fredholm", "sin(x*t)", 0.0, 10.0),)),
        rhs=_fr1_rhs,
        m=100,
        interval=(-1.0, 15.0),
        sigma=0.01,
        exact=lambda x: np.asarray(x, dtype=float),
        exact_source="x",
    )
    yield ExampleEntry(
        name="laplace_gamma_eq40",
        title="int_0^inf exp(-x t) y(t) dt = sum a_i (beta_i / (x + beta_i))^alpha_i",
        equation=EquationDescription(
            (0.0, 4.0), (), (_I("fredholm", "laplace", 0.0, math.inf),),
            constraints=ConstraintSpec(positivity=True),
        ),
        rhs=_laplace_of_mixture(**LAPLACE_PARAMS),
        m=100,
        interval=(1e-2, 1e2),
        spacing="log",
        sigma=0.01,
        exact=_gamma_mixture(**LAPLACE_PARAMS),
        exact_source="sum a_i t^(alpha_i - 1) exp(-beta_i t) beta_i^alpha_i / Gamma(alpha_i)",
        parameters=dict(LAPLACE_PARAMS),
        search=SearchConfig(degrees=(30,)),
        regularization=RegularizationConfig(stabilizer="value", lambda_grid=_FIRST_KIND_GRID),
    )
    yield ExampleEntry(
        name="nmr_eq41",
        title="int_0^inf exp(-x / t) y(t) dt = F(x), gamma mixture",
        equation=EquationDescription(
            (0.0, 20.0), (), (_I("fredholm", "nmr", 0.0, math.inf),),
            constraints=ConstraintSpec(positivity=True),
        ),
        rhs=_nmr_of_mixture(**NMR_PARAMS),
        m=100,
        interval=(1e-2, 1e2),
        spacing="log",
        sigma=0.01,
        exact=_gamma_mixture(**NMR_PARAMS),
        exact_source="sum a_i t^(alpha_i - 1) exp(-beta_i t) beta_i^alpha_i / Gamma(alpha_i)",
        parameters=dict(NMR_PARAMS),
        search=SearchConfig(degrees=(30,)),
        regularization=RegularizationConfig(stabilizer="value", lambda_grid=_FIRST_KIND_GRID),
    )
    yield ExampleEntry(
        name="runge_fit",
        title="piecewise least-squares fit of 1 / (1 + 25 x^2)",
        equation=EquationDescription((-1.0, 1.0), (_D(0),)),
        rhs=_runge,
        m=800,
        interval=(-1.0, 1.0),
        sigma=0.0,
        exact=_runge,
        exact_source="1 / (1 + 25 x**2)",
    )
    yield ExampleEntry(
        name="runge_interp21",
        title="stabilized degree-20 interpolation of 1 / (1 + 25 x^2) at 21 uniform points",
        equation=EquationDescription((-1.0, 1.0), (_D(0),)),
        rhs=_runge,
        m=21,
        interval=(-1.0, 1.0),
        sigma=0.0,
        exact=_runge,
        exact_source="1 / (1 + 25 x**2)",
        regularization=RegularizationConfig(stabilizer_points=1000),
        interpolation_degree=20,
    )


REGISTRY: Dict[str, ExampleEntry] = {e.name: e for e in _entries()}


def get_example(name: str) -> ExampleEntry:
    try:
        return REGISTRY[name]
    except KeyError:
        raise DataError(f"unknown example {name!r}; available: {', '.join(REGISTRY)}") from None


def list_examples() -> str:
    return "\n\n".join(e.describe() for e in REGISTRY.values()) + "\n"


# --------------------------------------------------------------------------
# synthesis


def abscissae(m: int, interval, spacing: str = "uniform") -> np.ndarray:
    lo, hi = (float(v) for v in interval)
    if m < 4:
        raise DataError(f"need at least 4 data points, got m = {m}")
    if not lo < hi:
        raise DataError(f"data interval must satisfy lo < hi, got [{lo}, {hi}]")
    if spacing == "log":
        if lo <= 0:
            raise DataError("logarithmic spacing needs a positive interval")
        return np.logspace(math.log10(lo), math.log10(hi), m)
    return np.linspace(lo, hi, m)


def noise(m: int, sigma: float, seed: int) -> np.ndarray:
    """``m`` i.i.d. N(0, sigma^2) draws from a Philox generator keyed by ``seed``."""
    if sigma == 0:
        return np.zeros(m)
    return sigma * np.random.Generator(np.random.Philox(seed)).standard_normal(m)


def synthesize(entry: ExampleEntry, m: Optional[int] = None, interval=None, sigma: Optional[float] = None,
               seed: int = 0, spacing: Optional[str] = None) -> SampleSet:
    """Sample the example's right-hand side and add seeded noise."""
    m = entry.m if m is None else int(m)
    interval = entry.interval if interval is None else interval
    sigma = entry.sigma if sigma is None else float(sigma)
    x = abscissae(m, interval, spacing or entry.spacing)
    phi = np.asarray(entry.rhs(x), dtype=float)
    if not np.all(np.isfinite(phi)):
        raise AccuracyError(f"right-hand side of {entry.name} is not finite on the sample grid")
    return SampleSet(x, phi + noise(m, sigma, seed), noise_sigma=sigma)
