"""Finite positive measures on the ball and the Carleson-condition testers.

Boundedness of an asymptotic quantity is undecidable from finitely many probes,
so each tester works a boundary-approach schedule (radial and tangentially
offset centers at dyadic depths), fits a log-log slope, and returns one of
three verdicts: "pass", "fail", or an explicit "inconclusive".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import bergman, geometry_ball as geom
from .errors import ParameterError, ValidationError
from .integrate import EstimateWithError, MCConfig, integrate_density

__all__ = [
    "PowerDensity",
    "Measure",
    "boundary_schedule",
    "measure_of_ball",
    "carleson_ratio_test",
    "carleson_berezin_test",
    "carleson_functional_test",
    "cross_check_equivalence",
    "CrossCheckConfig",
    "CarlesonVerdict",
    "RatioTestResult",
    "BerezinTestResult",
    "FunctionalTestResult",
    "bundled_measure_suite",
]

# slope threshold separating "bounded" from "divergent" boundary behaviour
SLOPE_THRESHOLD = -0.1
# ratios spread more than this between the deepest quartile and the median
# indicate growth towards the boundary
GROWTH_LIMIT = 10.0


@dataclass(frozen=True)
class PowerDensity:
    """Radial density (1 - ||zeta||^2)^exponent against normalised volume."""

    exponent: float

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.complex128))
        w = 1.0 - np.einsum("ij,ij->i", pts, np.conj(pts)).real
        return np.maximum(w, 0.0) ** self.exponent

    @property
    def pole_order(self) -> float:
        return max(0.0, -self.exponent)

    def to_config(self) -> dict:
        return {"type": "power", "s": self.exponent}


@dataclass(frozen=True, eq=False)
class Measure:
    """Finite positive Borel measure: atoms plus a density against volume."""

    dimension: int
    atom_points: np.ndarray
    atom_weights: np.ndarray
    density: Callable[[np.ndarray], np.ndarray] | None = None
    total_mass_hint: float | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.atom_points, dtype=np.complex128))
        if pts.size == 0:
            pts = np.zeros((0, self.dimension), dtype=np.complex128)
        w = np.asarray(self.atom_weights, dtype=float).reshape(-1)
        if pts.shape[0] != w.size:
            raise ValidationError("atom points and weights must align")
        if pts.shape[0] and pts.shape[1] != self.dimension:
            raise ValidationError("atom dimension mismatch")
        if np.any(w <= 0.0) or not np.all(np.isfinite(w)):
            raise ValidationError("atom weights must be positive and finite")
        if pts.shape[0] and np.any(np.linalg.norm(pts, axis=1) >= 1.0):
            raise ValidationError("atoms must lie inside the unit ball")
        if self.density is not None and not callable(self.density):
            raise ValidationError("density must be callable or None")
        object.__setattr__(self, "atom_points", pts)
        object.__setattr__(self, "atom_weights", w)

    # -- constructors -------------------------------------------------------
    @classmethod
    def lebesgue(cls, dimension: int) -> "Measure":
        return cls.with_power_density(dimension, 0.0)

    @classmethod
    def with_power_density(cls, dimension: int, exponent: float) -> "Measure":
        return cls(
            dimension=dimension,
            atom_points=np.zeros((0, dimension), dtype=np.complex128),
            atom_weights=np.zeros(0),
            density=PowerDensity(exponent),
        )

    @classmethod
    def dirac(cls, point, weight: float = 1.0) -> "Measure":
        p = geom.as_point(point)
        return cls.from_atoms(p[None, :], [weight])

    @classmethod
    def from_atoms(cls, points, weights) -> "Measure":
        pts = np.atleast_2d(np.asarray(points, dtype=np.complex128))
        return cls(dimension=pts.shape[1], atom_points=pts, atom_weights=np.asarray(weights, dtype=float))

    # -- basic queries -------------------------------------------------------
    @property
    def n_atoms(self) -> int:
        return int(self.atom_points.shape[0])

    @property
    def pole_order(self) -> float:
        return float(getattr(self.density, "pole_order", 0.0)) if self.density is not None else 0.0

    def density_values(self, points) -> np.ndarray:
        if self.density is None:
            return np.zeros(np.atleast_2d(points).shape[0])
        vals = np.asarray(self.density(points), dtype=float)
        if np.any(vals < 0.0):
            raise ValidationError("measure density must be nonnegative")
        return vals

    def scaled(self, factor: float) -> "Measure":
        if factor <= 0.0:
            raise ValidationError("scale factor must be positive")
        dens = self.density
        if dens is not None:
            base = dens

            def scaled_density(pts, _b=base, _f=factor):
                return _f * np.asarray(_b(pts), dtype=float)

            scaled_density.pole_order = getattr(base, "pole_order", 0.0)
            dens = scaled_density
        return Measure(
            dimension=self.dimension,
            atom_points=self.atom_points,
            atom_weights=self.atom_weights * factor,
            density=dens,
        )

    def __add__(self, other: "Measure") -> "Measure":
        if not isinstance(other, Measure):
            return NotImplemented
        if other.dimension != self.dimension:
            raise ValidationError("cannot add measures of different dimension")
        dens = None
        if self.density is not None and other.density is not None:
            a, b = self.density, other.density

            def summed(pts, _a=a, _b=b):
                return np.asarray(_a(pts), dtype=float) + np.asarray(_b(pts), dtype=float)

            summed.pole_order = max(getattr(a, "pole_order", 0.0), getattr(b, "pole_order", 0.0))
            dens = summed
        else:
            dens = self.density if self.density is not None else other.density
        return Measure(
            dimension=self.dimension,
            atom_points=np.vstack([self.atom_points, other.atom_points]),
            atom_weights=np.concatenate([self.atom_weights, other.atom_weights]),
            density=dens,
        )

    def total_mass(self, cfg: MCConfig) -> EstimateWithError:
        atoms = math.fsum(self.atom_weights)
        if self.density is None:
            return EstimateWithError(value=atoms, std_error=0.0, n_effective=self.n_atoms)
        est = integrate_density(self.density, self.dimension, cfg, boundary_pole_order=self.pole_order)
        return EstimateWithError(atoms + est.value, est.std_error, est.n_effective)

    # -- serialisation -------------------------------------------------------
    def to_config(self) -> dict:
        atoms = [
            [geom.points_to_rows(p[None, :])[0].tolist(), float(w)]
            for p, w in zip(self.atom_points, self.atom_weights)
        ]
        if self.density is None:
            dens = "none"
        elif isinstance(self.density, PowerDensity):
            dens = self.density.to_config()
        else:
            raise ValidationError("only power densities serialise to JSON")
        return {"dimension": self.dimension, "atoms": atoms, "density": dens}

    @classmethod
    def from_config(cls, cfg: dict) -> "Measure":
        dim = int(cfg["dimension"])
        atoms = cfg.get("atoms", [])
        if atoms:
            pts = np.vstack([geom.rows_to_points([row]) for row, _ in atoms])
            weights = [float(w) for _, w in atoms]
        else:
            pts = np.zeros((0, dim), dtype=np.complex128)
            weights = np.zeros(0)
        dens_cfg = cfg.get("density", "none")
        density = None
        if dens_cfg not in (None, "none"):
            if dens_cfg.get("type") != "power":
                raise ValidationError(f"unknown density type {dens_cfg!r}")
            density = PowerDensity(float(dens_cfg["s"]))
        return cls(dimension=dim, atom_points=pts, atom_weights=np.asarray(weights, dtype=float), density=density)


def measure_of_ball(mu: Measure, ball: geom.KobayashiBall, cfg: MCConfig) -> EstimateWithError:
    """mu(B) for a metric ball: atoms counted exactly, density part by MC."""
    if ball.dimension != mu.dimension:
        raise ParameterError("ball and measure dimensions differ")
    atom_part = 0.0
    if mu.n_atoms:
        inside = ball.contains(mu.atom_points)
        atom_part = math.fsum(mu.atom_weights[inside])
    if mu.density is None:
        return EstimateWithError(value=atom_part, std_error=0.0, n_effective=mu.n_atoms)
    est = integrate_density(mu.density, ball, cfg)
    return EstimateWithError(atom_part + est.value, est.std_error, est.n_effective)


def boundary_schedule(
    n: int,
    k_max: int = 12,
    tangential: bool = True,
    direction=None,
    tangent_scale: float = 0.5,
) -> list[np.ndarray]:
    """Centers approaching the boundary at dyadic depths d = 2^-k, k = 1..k_max.

    The radial family walks straight along ``direction``; the tangential family
    adds a sideways offset of size ~ sqrt(d) so the approach is not purely
    radial.
    """
    if k_max < 1:
        raise ParameterError("k_max must be >= 1")
    u = np.zeros(n, dtype=np.complex128)
    u[0] = 1.0
    if direction is not None:
        u = geom.as_point(direction)
        u = u / np.linalg.norm(u)
    if n > 1:
        v = np.zeros(n, dtype=np.complex128)
        v[1] = 1.0
    else:
        v = 1j * u
    centers = []
    for k in range(1, k_max + 1):
        d = 2.0 ** (-k)
        centers.append((1.0 - d) * u)
        if tangential:
            centers.append((1.0 - d) * (u + tangent_scale * math.sqrt(d) * v))
    return centers


def _fit_loglog(depths, values):
    """OLS slope of log(value) against log(depth) with its standard error."""
    x = np.log(np.asarray(depths, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    m = x.size
    xc = x - x.mean()
    sxx = float(np.sum(xc**2))
    slope = float(np.sum(xc * y) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    dof = max(m - 2, 1)
    slope_se = math.sqrt(float(np.sum(resid**2)) / dof / sxx)
    return slope, slope_se


def _divergence_verdict(depths, values, errors):
    """Shared pass/fail/inconclusive logic for boundary-approach statistics.

    The log-log slope is fitted on the positive values; empty deep balls are
    evidence of boundedness, not divergence, so a confident negative slope only
    fails when the deepest quartile actually carries the largest values.
    """
    depths = np.asarray(depths, dtype=float)
    values = np.asarray(values, dtype=float)
    errors = np.asarray(errors, dtype=float)
    positive = values > 0.0
    if np.count_nonzero(positive) < 3:
        return "inconclusive", math.nan, math.nan, math.nan
    d, v, e = depths[positive], values[positive], errors[positive]
    rel = np.where(v > 0, e / v, math.inf)
    if float(np.median(rel)) > 0.5:
        return "inconclusive", math.nan, math.nan, math.nan
    slope, slope_se = _fit_loglog(d, v)
    order = np.argsort(depths)  # deepest first, zeros included
    deep = values[order][: max(1, len(values) // 4)]
    growth = float(np.max(deep) / np.median(v))
    if growth > 1.0 and slope + 2.0 * slope_se < SLOPE_THRESHOLD:
        return "fail", slope, slope_se, growth
    if growth < GROWTH_LIMIT and (slope - 2.0 * slope_se > SLOPE_THRESHOLD or growth <= 1.0):
        return "pass", slope, slope_se, growth
    return "inconclusive", slope, slope_se, growth


@dataclass
class RatioTestResult:
    r: float
    rows: list[dict]
    slope: float
    slope_se: float
    growth: float
    verdict: str

    @property
    def sup_ratio(self) -> float:
        vals = [row["ratio"] for row in self.rows]
        return max(vals) if vals else math.nan


def carleson_ratio_test(mu: Measure, r: float, centers, cfg: MCConfig) -> RatioTestResult:
    """Kobayashi-ball mass ratios mu(B)/vol(B) along a boundary schedule.

    The verdict flags divergence via the fitted log-log slope of ratio against
    boundary depth; bounded, flat ratio profiles pass.
    """
    if not 0.0 < r < 1.0:
        raise ParameterError("radius must be in (0, 1)")
    rows = []
    for c in centers:
        c = geom.as_point(c)
        ball = geom.kobayashi_ball(c, r)
        est = measure_of_ball(mu, ball, cfg)
        vol = ball.volume
        d = 1.0 - float(np.linalg.norm(c))
        rows.append(
            {
                "center": c,
                "d": d,
                "ratio": float(np.real(est.value)) / vol,
                "std_error": est.std_error / vol,
            }
        )
    verdict, slope, slope_se, growth = _divergence_verdict(
        [row["d"] for row in rows], [row["ratio"] for row in rows], [row["std_error"] for row in rows]
    )
    return RatioTestResult(r=r, rows=rows, slope=slope, slope_se=slope_se, growth=growth, verdict=verdict)


@dataclass
class BerezinTestResult:
    rows: list[dict]
    sup: EstimateWithError
    slope: float
    slope_se: float
    growth: float
    verdict: str


def carleson_berezin_test(mu: Measure, probes, cfg: MCConfig) -> BerezinTestResult:
    """Sup of the Berezin transform over a probe grid with divergence detection."""
    rows = []
    for p in probes:
        p = geom.as_point(p)
        est = bergman.berezin_transform(mu, p, cfg)
        rows.append(
            {
                "center": p,
                "d": 1.0 - float(np.linalg.norm(p)),
                "value": float(np.real(est.value)),
                "std_error": est.std_error,
            }
        )
    best = max(range(len(rows)), key=lambda i: rows[i]["value"])
    sup = EstimateWithError(rows[best]["value"], rows[best]["std_error"], cfg.n_samples)
    verdict, slope, slope_se, growth = _divergence_verdict(
        [row["d"] for row in rows], [row["value"] for row in rows], [row["std_error"] for row in rows]
    )
    return BerezinTestResult(rows=rows, sup=sup, slope=slope, slope_se=slope_se, growth=growth, verdict=verdict)


@dataclass
class FunctionalTestResult:
    rows: list[dict]
    constant: EstimateWithError
    slope: float
    slope_se: float
    growth: float
    verdict: str


def carleson_functional_test(
    mu: Measure,
    centers,
    cfg: MCConfig,
    n_polynomials: int = 10,
    seed: int = 0,
    p: float = 2.0,
) -> FunctionalTestResult:
    """Direct test of the defining embedding inequality over a test family.

    Family: normalised kernels at the schedule centers (the extremals of the
    theory, with exact unit norm) plus random degree-<=2 polynomials whose
    squared norms are exact by monomial orthogonality.  Only p = 2 is
    supported: it is the exponent with closed norms.
    """
    if p != 2.0:
        raise ParameterError("only p = 2 is supported by the functional test")
    rows = []
    for c in centers:
        c = geom.as_point(c)
        est = bergman.berezin_transform(mu, c, cfg)  # = integral |k_c|^2 dmu, norm 1
        rows.append(
            {
                "kind": "kernel",
                "d": 1.0 - float(np.linalg.norm(c)),
                "ratio": float(np.real(est.value)),
                "std_error": est.std_error,
            }
        )
    rng = np.random.default_rng(seed)
    for _ in range(n_polynomials):
        alphas, coeffs = bergman.random_polynomial(mu.dimension, 2, rng)
        norm_sq = bergman.polynomial_norm_sq(alphas, coeffs, mu.dimension)

        def chi(pts, _a=alphas, _c=coeffs):
            return np.abs(bergman.evaluate_polynomial(_a, _c, pts)) ** 2

        num = 0.0
        num_err = 0.0
        if mu.n_atoms:
            num += math.fsum(chi(mu.atom_points) * mu.atom_weights)
        if mu.density is not None:

            def integrand(pts, _chi=chi):
                return _chi(pts) * np.asarray(mu.density(pts), dtype=float)

            est = integrate_density(integrand, mu.dimension, cfg, boundary_pole_order=mu.pole_order)
            num += float(np.real(est.value))
            num_err = est.std_error
        rows.append(
            {
                "kind": "polynomial",
                "d": math.nan,
                "ratio": num / norm_sq,
                "std_error": num_err / norm_sq,
            }
        )
    best = max(range(len(rows)), key=lambda i: rows[i]["ratio"])
    constant = EstimateWithError(rows[best]["ratio"], rows[best]["std_error"], cfg.n_samples)
    kernel_rows = [row for row in rows if row["kind"] == "kernel"]
    verdict, slope, slope_se, growth = _divergence_verdict(
        [row["d"] for row in kernel_rows],
        [row["ratio"] for row in kernel_rows],
        [row["std_error"] for row in kernel_rows],
    )
    return FunctionalTestResult(
        rows=rows, constant=constant, slope=slope, slope_se=slope_se, growth=growth, verdict=verdict
    )


@dataclass(frozen=True)
class CrossCheckConfig:
    r_values: tuple[float, ...] = (0.3, 0.5, 0.7)
    k_max: int = 12
    ball_samples: int = 12_000
    global_samples: int = 20_000
    n_polynomials: int = 10
    seed: int = 0
    substreams: int = 4

    def ball_cfg(self) -> MCConfig:
        return MCConfig(seed=self.seed, n_samples=self.ball_samples, substreams=self.substreams)

    def global_cfg(self) -> MCConfig:
        return MCConfig(seed=self.seed + 1, n_samples=self.global_samples, substreams=self.substreams)


@dataclass
class CarlesonVerdict:
    """Joint outcome of the functional, Berezin-bound, and ball-ratio tests.

    ``agreement`` is True when every conclusive test reaches the same verdict;
    a disagreement is reported through ``defect`` and never silently resolved.
    """

    berezin_sup: EstimateWithError
    ratio_sup: dict[float, float]
    functional_constant: EstimateWithError
    verdicts: dict[str, str]
    agreement: bool
    defect: str | None
    ratio_results: dict[float, RatioTestResult] = field(repr=False, default_factory=dict)
    berezin_result: BerezinTestResult | None = field(repr=False, default=None)
    functional_result: FunctionalTestResult | None = field(repr=False, default=None)

    @property
    def overall(self) -> str:
        concl = [v for v in self.verdicts.values() if v != "inconclusive"]
        if not concl:
            return "inconclusive"
        if not self.agreement:
            return "inconclusive"
        return concl[0]

    def to_json_dict(self) -> dict:
        return {
            "berezin_sup": {"value": float(np.real(self.berezin_sup.value)), "std_error": self.berezin_sup.std_error},
            "ratio_sup": {str(r): v for r, v in self.ratio_sup.items()},
            "functional_constant": {
                "value": float(np.real(self.functional_constant.value)),
                "std_error": self.functional_constant.std_error,
            },
            "verdicts": dict(self.verdicts),
            "agreement": self.agreement,
            "defect": self.defect,
            "overall": self.overall,
        }

    def schedule_rows(self) -> list[dict]:
        """Plot-ready (center, d, ratio, berezin) rows for the main radius."""
        if self.berezin_result is None or not self.ratio_results:
            return []
        main_r = sorted(self.ratio_results)[len(self.ratio_results) // 2]
        ratio_rows = self.ratio_results[main_r].rows
        rows = []
        for rr, br in zip(ratio_rows, self.berezin_result.rows):
            rows.append(
                {
                    "center": geom.points_to_rows(rr["center"][None, :])[0].tolist(),
                    "d": rr["d"],
                    "ratio": rr["ratio"],
                    "berezin": br["value"],
                }
            )
        return rows


def cross_check_equivalence(mu: Measure, config: CrossCheckConfig | None = None) -> CarlesonVerdict:
    """Run the three operational Carleson tests and compare their verdicts."""
    config = config or CrossCheckConfig()
    centers = boundary_schedule(mu.dimension, k_max=config.k_max)
    ratio_results = {}
    for r in config.r_values:
        ratio_results[r] = carleson_ratio_test(mu, r, centers, config.ball_cfg())
    berezin_result = carleson_berezin_test(mu, centers, config.global_cfg())
    functional_result = carleson_functional_test(
        mu, centers, config.global_cfg(), n_polynomials=config.n_polynomials, seed=config.seed
    )

    sub = [res.verdict for res in ratio_results.values()]
    if "fail" in sub:
        ratio_verdict = "fail"
    elif "pass" in sub:
        ratio_verdict = "pass"
    else:
        ratio_verdict = "inconclusive"

    verdicts = {
        "functional": functional_result.verdict,
        "berezin": berezin_result.verdict,
        "ratio": ratio_verdict,
    }
    conclusive = {k: v for k, v in verdicts.items() if v != "inconclusive"}
    agreement = len(set(conclusive.values())) <= 1
    defect = None
    if not agreement:
        defect = "conclusive tests disagree: " + ", ".join(f"{k}={v}" for k, v in conclusive.items())
    return CarlesonVerdict(
        berezin_sup=berezin_result.sup,
        ratio_sup={r: res.sup_ratio for r, res in ratio_results.items()},
        functional_constant=functional_result.constant,
        verdicts=verdicts,
        agreement=agreement,
        defect=defect,
        ratio_results=ratio_results,
        berezin_result=berezin_result,
        functional_result=functional_result,
    )


def bundled_measure_suite(n: int, ladder_count: int = 50) -> list[tuple[str, Measure]]:
    """Reference measures exercised by the cross-consistency tests.

    Volume itself, radial power densities straddling the Carleson property, and
    the Dirac sum of a radial ladder weighted by d^(n+1).
    """
    suite: list[tuple[str, Measure]] = [("lebesgue", Measure.lebesgue(n))]
    for s in (-0.5, 0.5, 1.0):
        suite.append((f"power({s:+g})", Measure.with_power_density(n, s)))
    m = np.arange(1, ladder_count + 1, dtype=float)
    u = np.zeros(n, dtype=np.complex128)
    u[0] = 1.0
    # deep rungs saturate double precision; cap the coordinate, keep the weight
    radii = np.minimum(-np.expm1(-m), np.nextafter(1.0, 0.0))
    pts = radii[:, None] * u
    weights = np.exp(-m) ** (n + 1)
    suite.append(("dirac-ladder", Measure.from_atoms(pts, weights)))
    return suite
