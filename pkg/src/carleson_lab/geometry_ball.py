"""Invariant geometry of the unit ball of C^n.

Pseudohyperbolic and Kobayashi distances, Moebius automorphisms, metric balls
as explicit Euclidean ellipsoids, their volumes, and rejection-free uniform
sampling inside them.

Conventions used throughout the package:
  * points are complex vectors with Euclidean norm < 1,
  * the Hermitian pairing is <z, w> = sum_k z_k * conj(w_k),
  * Lebesgue volume is normalised so the whole unit ball has measure 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import OutsideDomainError, ParameterError, ValidationError
from .reports import CheckReport

# Base points this close to the unit sphere are rejected instead of
# extrapolated: every formula in this module degenerates there.
BOUNDARY_MARGIN = 1e-12

__all__ = [
    "BOUNDARY_MARGIN",
    "DistancePair",
    "KobayashiBall",
    "as_point",
    "herm_inner",
    "norm_sq",
    "pseudo_distance",
    "pseudo_distance_many",
    "ball_automorphism",
    "ball_automorphism_many",
    "mobius_jacobian_many",
    "kobayashi_ball",
    "ball_volume",
    "map_round_to_ellipsoid",
    "sample_ball_uniform",
    "check_lemma_ball_inequality",
    "points_to_rows",
    "rows_to_points",
]


def as_point(coords) -> np.ndarray:
    """Coerce coordinates to a 1-d complex vector, rejecting non-finite input."""
    z = np.asarray(coords, dtype=np.complex128).reshape(-1)
    if z.size == 0:
        raise ValidationError("a point needs at least one coordinate")
    if not np.all(np.isfinite(z)):
        raise ValidationError("point coordinates must be finite")
    return z


def norm_sq(z: np.ndarray) -> float:
    return float(np.real(np.vdot(z, z)))


def herm_inner(z: np.ndarray, w: np.ndarray) -> complex:
    """Compensated <z, w> = sum_k z_k * conj(w_k).

    Real and imaginary parts are exact sums of products, so swapping the
    arguments conjugates the result bit for bit.
    """
    re = math.fsum(np.concatenate([z.real * w.real, z.imag * w.imag]))
    im = math.fsum(np.concatenate([z.imag * w.real, -z.real * w.imag]))
    return complex(re, im)


def _require_interior(z: np.ndarray, name: str = "point") -> float:
    nz = float(np.linalg.norm(z))
    if nz >= 1.0 - BOUNDARY_MARGIN:
        raise OutsideDomainError(
            f"{name} must lie strictly inside the unit ball "
            f"(||z|| = {nz:.17g} >= 1 - {BOUNDARY_MARGIN:g})"
        )
    return nz


@dataclass(frozen=True)
class DistancePair:
    """Pseudohyperbolic distance rho in [0,1) and its Kobayashi value arctanh(rho)."""

    pseudo: float
    kobayashi: float


@dataclass(frozen=True, eq=False)
class KobayashiBall:
    """Metric ball {rho(base, .) < pseudo_radius}, stored as a Euclidean ellipsoid.

    The ellipsoid is a round disk of radius ``radial_axis`` on the complex line
    through the base point and a round ball of radius ``transverse_axis`` on the
    orthogonal complement, both centred at ``center``.
    """

    base: np.ndarray
    pseudo_radius: float
    center: np.ndarray
    radial_axis: float
    transverse_axis: float

    @property
    def dimension(self) -> int:
        return int(self.base.size)

    def radial_direction(self) -> np.ndarray:
        nb = np.linalg.norm(self.base)
        if nb < BOUNDARY_MARGIN:
            e = np.zeros(self.dimension, dtype=np.complex128)
            e[0] = 1.0
            return e
        return self.base / nb

    def contains(self, points, shell: float = 0.0) -> np.ndarray:
        """Ellipsoid-equation membership for an (m, n) array of points.

        ``shell`` > 0 shrinks the acceptance region, ``shell`` < 0 grows it;
        useful for excluding a thin band around the boundary where the two
        membership characterisations may disagree in floating point.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=np.complex128))
        v = pts - self.center
        e = self.radial_direction()
        p = v @ np.conj(e)
        perp_sq = np.maximum(np.einsum("ij,ij->i", v, np.conj(v)).real - np.abs(p) ** 2, 0.0)
        q = np.abs(p) ** 2 / self.radial_axis**2 + perp_sq / self.transverse_axis**2
        return q < 1.0 - shell

    @property
    def volume(self) -> float:
        return ball_volume(self.base, self.pseudo_radius)

    def to_json_dict(self) -> dict:
        return {
            "base": points_to_rows(self.base[None, :])[0].tolist(),
            "r": self.pseudo_radius,
            "center": points_to_rows(self.center[None, :])[0].tolist(),
            "radial_axis": self.radial_axis,
            "transverse_axis": self.transverse_axis,
        }


def pseudo_distance(z, w) -> DistancePair:
    """Pseudohyperbolic distance between two interior points.

    Computed in the cancellation-stable form rho^2 = 1 - product, clamped to
    [0, 1); the Kobayashi distance is arctanh(rho).
    """
    z = as_point(z)
    w = as_point(w)
    if z.shape != w.shape:
        raise ParameterError("points must share one dimension")
    _require_interior(z, "first point")
    _require_interior(w, "second point")
    ip = herm_inner(z, w)
    num = (1.0 - norm_sq(z)) * (1.0 - norm_sq(w))
    den = abs(1.0 - ip) ** 2
    rho_sq = 1.0 - num / den
    rho = math.sqrt(max(rho_sq, 0.0))
    rho = min(rho, 1.0 - 1e-16)
    return DistancePair(pseudo=rho, kobayashi=math.atanh(rho))


def pseudo_distance_many(z0: np.ndarray, points) -> np.ndarray:
    """Vectorised pseudohyperbolic distance from ``z0`` to each row of ``points``.

    Trusts the caller on interiority; intended for Monte Carlo inner loops.
    """
    z0 = np.asarray(z0, dtype=np.complex128).reshape(-1)
    pts = np.atleast_2d(np.asarray(points, dtype=np.complex128))
    ip = pts @ np.conj(z0)
    num = (1.0 - norm_sq(z0)) * (1.0 - np.einsum("ij,ij->i", pts, np.conj(pts)).real)
    den = np.abs(1.0 - ip) ** 2
    rho_sq = np.clip(1.0 - num / den, 0.0, 1.0)
    return np.sqrt(rho_sq)


def ball_automorphism_many(a: np.ndarray, points) -> np.ndarray:
    """Apply the involutive automorphism swapping 0 and ``a`` to rows of ``points``."""
    a = np.asarray(a, dtype=np.complex128).reshape(-1)
    pts = np.atleast_2d(np.asarray(points, dtype=np.complex128))
    na2 = norm_sq(a)
    if na2 < 1e-30:
        return -pts
    ip = pts @ np.conj(a)
    proj = np.multiply.outer(ip / na2, a)
    s = math.sqrt(1.0 - na2)
    return (a[None, :] - proj - s * (pts - proj)) / (1.0 - ip)[:, None]


def ball_automorphism(a, z) -> np.ndarray:
    """Involutive Moebius automorphism phi_a of the ball: phi_a(0) = a, phi_a(a) = 0.

    The convention is pinned by the involution phi_a(phi_a(z)) = z; it preserves
    the pseudohyperbolic distance.
    """
    a = as_point(a)
    z = as_point(z)
    if a.shape != z.shape:
        raise ParameterError("points must share one dimension")
    _require_interior(a, "automorphism parameter")
    _require_interior(z, "point")
    return ball_automorphism_many(a, z[None, :])[0]


def mobius_jacobian_many(a: np.ndarray, points) -> np.ndarray:
    """|real Jacobian determinant| of the automorphism phi_a at each row of ``points``.

    Equals ((1 - ||a||^2) / |1 - <z, a>|^2)^(n+1); this is also the transition
    density used when pushing uniform samples forward through phi_a.
    """
    a = np.asarray(a, dtype=np.complex128).reshape(-1)
    pts = np.atleast_2d(np.asarray(points, dtype=np.complex128))
    n = a.size
    ip = pts @ np.conj(a)
    return ((1.0 - norm_sq(a)) / np.abs(1.0 - ip) ** 2) ** (n + 1)


def kobayashi_ball(z0, r: float) -> KobayashiBall:
    """Ellipsoid data of the metric ball of pseudohyperbolic radius ``r`` about ``z0``."""
    z0 = as_point(z0)
    if not (0.0 < r < 1.0):
        raise ParameterError(f"pseudohyperbolic radius must be in (0, 1), got {r!r}")
    _require_interior(z0, "base point")
    nz2 = norm_sq(z0)
    denom = 1.0 - r * r * nz2
    center = ((1.0 - r * r) / denom) * z0
    radial = r * (1.0 - nz2) / denom
    transverse = r * math.sqrt((1.0 - nz2) / denom)
    return KobayashiBall(
        base=z0,
        pseudo_radius=float(r),
        center=center,
        radial_axis=radial,
        transverse_axis=transverse,
    )


def ball_volume(z0, r: float) -> float:
    """Normalised volume r^(2n) * ((1 - ||z0||^2) / (1 - r^2 ||z0||^2))^(n+1)."""
    z0 = as_point(z0)
    if not (0.0 < r < 1.0):
        raise ParameterError(f"pseudohyperbolic radius must be in (0, 1), got {r!r}")
    _require_interior(z0, "base point")
    n = z0.size
    nz2 = norm_sq(z0)
    return r ** (2 * n) * ((1.0 - nz2) / (1.0 - r * r * nz2)) ** (n + 1)


def uniform_round_ball(rng: np.random.Generator, n: int, count: int) -> np.ndarray:
    """Uniform samples from the round unit ball of C^n (= R^(2n))."""
    g = rng.standard_normal((count, 2 * n))
    u = g[:, :n] + 1j * g[:, n:]
    norms = np.linalg.norm(u, axis=1)
    norms[norms == 0.0] = 1.0
    radii = rng.random(count) ** (1.0 / (2 * n))
    return u * (radii / norms)[:, None]


def map_round_to_ellipsoid(ball: KobayashiBall, round_points: np.ndarray) -> np.ndarray:
    """Affine image of round-ball samples in the ellipsoid of ``ball``."""
    e = ball.radial_direction()
    p = round_points @ np.conj(e)
    perp = round_points - np.multiply.outer(p, e)
    return ball.center + ball.radial_axis * np.multiply.outer(p, e) + ball.transverse_axis * perp


def sample_ball_uniform(ball: KobayashiBall, count: int, seed) -> np.ndarray:
    """Uniform (w.r.t. volume) samples inside a Kobayashi ball, rejection-free.

    Deterministic function of (seed, count).
    """
    if count < 1:
        raise ParameterError(f"sample count must be >= 1, got {count!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    w = uniform_round_ball(rng, ball.dimension, count)
    return map_round_to_ellipsoid(ball, w)


def check_lemma_ball_inequality(z0, r: float, n_samples: int = 10_000, seed: int = 0) -> CheckReport:
    """Sampled check of the quadratic lower bound for 1 - ||z0||^2 on a metric ball.

    Verifies 1 - ||z0||^2 > (1 - r^2)/4 * (||z - z0||^2 + |<z - z0, z0>|)
    at uniform samples of the ball; PASS iff the minimum slack is positive.
    """
    z0 = as_point(z0)
    ball = kobayashi_ball(z0, r)
    pts = sample_ball_uniform(ball, n_samples, seed)
    diff = pts - z0
    quad = np.einsum("ij,ij->i", diff, np.conj(diff)).real
    pairing = np.abs(diff @ np.conj(z0))
    lhs = 1.0 - norm_sq(z0)
    rhs = (1.0 - r * r) / 4.0 * (quad + pairing)
    slack = float(np.min(lhs - rhs))
    return CheckReport(
        name="ball-inequality",
        statistic=slack,
        bound=0.0,
        passed=bool(slack > 0.0),
        n_samples=int(n_samples),
        std_error=0.0,
        details={"seed": int(seed), "r": float(r), "base_norm": float(np.linalg.norm(z0))},
    )


def points_to_rows(points) -> np.ndarray:
    """Serialise (m, n) complex points to (m, 2n) real rows: re1, im1, ..., re_n, im_n."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.complex128))
    m, n = pts.shape
    rows = np.empty((m, 2 * n), dtype=np.float64)
    rows[:, 0::2] = pts.real
    rows[:, 1::2] = pts.imag
    return rows


def rows_to_points(rows) -> np.ndarray:
    """Inverse of :func:`points_to_rows`."""
    arr = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if arr.shape[1] % 2 != 0:
        raise ValidationError("point rows must have an even number of columns (re/im pairs)")
    return arr[:, 0::2] + 1j * arr[:, 1::2]
