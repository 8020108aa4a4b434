"""Uniformly discrete sequence analytics in the unit ball.

Separation constants, metric-ball counts, first-fit decomposition into
separated classes, greedy disjoint-ball coverings with multiplicity reports,
induced Dirac measures weighted by boundary distance, escape-rate sums, and
Kobayashi shell counts.  Bundled generators (radial ladders, greedy maximal
packings, perturbed lattices) span the sparse and dense extremes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc
from scipy.stats import norm as norm_dist

from . import geometry_ball as geom, measures
from .errors import CoverageError, ParameterError, ValidationError

__all__ = [
    "PointSequence",
    "Decomposition",
    "EscapeWeight",
    "EscapeSumResult",
    "ShellCounts",
    "CoverReport",
    "separation_constant",
    "count_in_ball",
    "greedy_decompose",
    "greedy_pack",
    "greedy_cover",
    "dirac_carleson_measure",
    "escape_sum",
    "shell_counts",
    "pseudo_block",
    "disjointness_threshold",
]

METRICS = ("pseudohyperbolic", "kobayashi", "euclidean")

# brute-force pairwise work is exact up to this size; beyond it a KD-tree
# prefilter (valid because rho >= euclidean/2 on the ball) prunes candidates
EXACT_PAIRWISE_LIMIT = 10_000


@dataclass(frozen=True, eq=False)
class PointSequence:
    """Ordered point set in the unit ball with cached boundary distances."""

    points: np.ndarray
    metric: str = "pseudohyperbolic"
    boundary_distances: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.complex128))
        if pts.shape[0] and np.any(np.linalg.norm(pts, axis=1) >= 1.0):
            raise ValidationError("sequence points must lie inside the unit ball")
        if self.metric not in METRICS:
            raise ParameterError(f"metric must be one of {METRICS}")
        bd = self.boundary_distances
        if bd is None:
            bd = 1.0 - np.linalg.norm(pts, axis=1)
        else:
            bd = np.asarray(bd, dtype=float).reshape(-1)
            if bd.size != pts.shape[0]:
                raise ValidationError("boundary distance cache must align with points")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "boundary_distances", bd)

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.points.shape[1])

    # -- generators ----------------------------------------------------------
    @classmethod
    def radial_ladder(cls, n: int, count: int, direction=None, metric: str = "pseudohyperbolic") -> "PointSequence":
        """Points (1 - e^-m) u for m = 1..count along a unit direction u.

        Boundary distances are cached exactly as e^-m; beyond m ~ 37 the point
        coordinate itself saturates double precision and is capped just inside
        the ball, so downstream analytics must use the cache (they do).
        """
        if count < 1:
            raise ParameterError("ladder needs count >= 1")
        u = np.zeros(n, dtype=np.complex128)
        u[0] = 1.0
        if direction is not None:
            u = geom.as_point(direction)
            u = u / np.linalg.norm(u)
        m = np.arange(1, count + 1)
        radii = np.minimum(-np.expm1(-m.astype(float)), np.nextafter(1.0, 0.0))
        pts = radii[:, None] * u
        return cls(points=pts, metric=metric, boundary_distances=np.exp(-m.astype(float)))

    @classmethod
    def maximal_packing(
        cls,
        n: int,
        delta: float,
        epsilon: float,
        seed: int = 0,
        candidate_factor: float = 6.0,
        metric: str = "pseudohyperbolic",
    ) -> "PointSequence":
        """Greedy near-maximal delta-separated subset of {depth >= epsilon}.

        Candidates are low-discrepancy points whose radial law matches the
        invariant volume (denser towards the boundary, where separated balls
        shrink), so the kept set approaches a maximal packing.
        """
        if not 0.0 < delta < 1.0:
            raise ParameterError("separation delta must be in (0, 1)")
        if not 0.0 < epsilon < 1.0:
            raise ParameterError("depth epsilon must be in (0, 1)")
        half = _half_radius(delta, metric)
        u_max = (1.0 - epsilon) ** 2
        volume_scale = (u_max / (1.0 - u_max)) ** n / (half**2 / (1.0 - half**2)) ** n
        count = int(min(max(candidate_factor * (volume_scale + 8.0), 64), 4_000_000))
        cands = _invariant_tilted_candidates(n, count, epsilon, seed)
        kept = greedy_pack(cands, delta, metric=metric)
        return cls(points=cands[kept], metric=metric)

    @classmethod
    def perturbed_lattice(
        cls, n: int, spacing: float = 0.2, jitter: float = 0.25, seed: int = 0, epsilon: float = 0.05
    ) -> "PointSequence":
        """Euclidean grid restricted to {depth >= epsilon}, with seeded jitter."""
        if spacing <= 0.0:
            raise ParameterError("spacing must be positive")
        rng = np.random.default_rng(seed)
        axis = np.arange(-1.0, 1.0 + spacing / 2, spacing)
        grids = np.meshgrid(*([axis] * (2 * n)), indexing="ij")
        rows = np.stack([g.reshape(-1) for g in grids], axis=1)
        rows = rows + jitter * spacing * (rng.random(rows.shape) - 0.5)
        pts = geom.rows_to_points(rows)
        keep = np.linalg.norm(pts, axis=1) <= 1.0 - epsilon
        return cls(points=pts[keep])

    # -- serialisation ---------------------------------------------------------
    def to_csv(self, path):
        rows = geom.points_to_rows(self.points)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = []
            for k in range(self.dimension):
                header += [f"re{k}", f"im{k}"]
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path, metric: str = "pseudohyperbolic") -> "PointSequence":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(x) for x in row] for row in reader if row]
        if len(header) % 2 != 0:
            raise ValidationError("point CSV must hold re/im column pairs")
        return cls(points=geom.rows_to_points(rows), metric=metric)


def _half_radius(delta: float, metric: str) -> float:
    """Pseudohyperbolic radius of balls that are disjoint at separation delta."""
    if metric == "kobayashi":
        return math.tanh(delta / 2.0)
    if metric == "pseudohyperbolic":
        return math.tanh(math.atanh(delta) / 2.0)
    return delta / 2.0


def disjointness_threshold(t: float) -> float:
    """Centre separation at which two metric balls of pseudo-radius t touch.

    Metric balls are geodesic, so the threshold is tanh(2 arctanh t)
    = 2 t / (1 + t^2).
    """
    if not 0.0 < t < 1.0:
        raise ParameterError("ball radius must be in (0, 1)")
    return 2.0 * t / (1.0 + t * t)


def _invariant_tilted_candidates(n: int, count: int, epsilon: float, seed: int) -> np.ndarray:
    """Low-discrepancy candidates on {depth >= epsilon}, radially tilted so the
    local density tracks the invariant volume (adaptive to epsilon)."""
    sobol = qmc.Sobol(2 * n + 1, scramble=True, seed=seed)
    raw = sobol.random_base2(max(int(math.ceil(math.log2(max(count, 2)))), 1))[:count]
    u_max = (1.0 - epsilon) ** 2
    u = _invariant_radial_law(n, raw[:, 0], u_max)
    gauss = norm_dist.ppf(np.clip(raw[:, 1:], 1e-12, 1.0 - 1e-12))
    dirs = gauss[:, :n] + 1j * gauss[:, n:]
    norms = np.linalg.norm(dirs, axis=1)
    norms[norms == 0.0] = 1.0
    pts = dirs * (np.sqrt(np.clip(u, 0.0, u_max)) / norms)[:, None]
    return pts


def _invariant_radial_law(n: int, s: np.ndarray, u_max: float) -> np.ndarray:
    """Inverse CDF of the invariant-volume radial law on {||z||^2 <= u_max}.

    The density is proportional to u^(n-1) (1-u)^-(n+1), whose exact
    antiderivative is (u/(1-u))^n; inverting gives a closed form.
    """
    y = np.asarray(s, dtype=float) ** (1.0 / n) * (u_max / (1.0 - u_max))
    return y / (1.0 + y)


def pseudo_block(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise pseudohyperbolic distances between rows of a and rows of b."""
    a = np.atleast_2d(np.asarray(a, dtype=np.complex128))
    b = np.atleast_2d(np.asarray(b, dtype=np.complex128))
    ip = a @ np.conj(b).T
    na = 1.0 - np.einsum("ij,ij->i", a, np.conj(a)).real
    nb = 1.0 - np.einsum("ij,ij->i", b, np.conj(b)).real
    num = np.multiply.outer(na, nb)
    rho_sq = np.clip(1.0 - num / np.abs(1.0 - ip) ** 2, 0.0, 1.0)
    return np.sqrt(rho_sq)


def _metric_block(metric: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if metric == "euclidean":
        diff = a[:, None, :] - b[None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, np.conj(diff)).real)
    rho = pseudo_block(a, b)
    if metric == "kobayashi":
        return np.arctanh(np.minimum(rho, 1.0 - 1e-16))
    return rho


def separation_constant(seq: PointSequence) -> float:
    """Infimum of pairwise distances in the sequence's metric.

    Exact pairwise evaluation up to 10^4 points; beyond that a KD-tree prunes
    pairs using the Euclidean lower bound before exact evaluation.
    """
    m = len(seq)
    if m < 2:
        raise ParameterError("separation constant needs at least two points")
    pts = seq.points
    if m <= EXACT_PAIRWISE_LIMIT:
        best = math.inf
        chunk = 512
        for i0 in range(0, m, chunk):
            block = _metric_block(seq.metric, pts[i0 : i0 + chunk], pts)
            for i in range(block.shape[0]):
                block[i, i0 + i] = math.inf
            best = min(best, float(block.min()))
        return best
    return _separation_pruned(seq)


def _separation_pruned(seq: PointSequence) -> float:
    pts = seq.points
    rows = geom.points_to_rows(pts)
    tree = cKDTree(rows)
    dists, idx = tree.query(rows, k=2)
    if seq.metric == "euclidean":
        return float(dists[:, 1].min())
    # candidate bound from Euclidean nearest neighbours (rho >= euclid / 2)
    cand = math.inf
    for i in range(len(pts)):
        cand = min(cand, float(pseudo_block(pts[i : i + 1], pts[idx[i, 1] : idx[i, 1] + 1])[0, 0]))
    # every pair at pseudo distance < cand sits at Euclidean distance < 2 * cand
    pairs = tree.query_pairs(r=2.0 * cand, output_type="ndarray")
    best = cand
    for i0 in range(0, len(pairs), 65_536):
        chunk = pairs[i0 : i0 + 65_536]
        a = pts[chunk[:, 0]]
        b = pts[chunk[:, 1]]
        ip = np.einsum("ij,ij->i", a, np.conj(b))
        na = 1.0 - np.einsum("ij,ij->i", a, np.conj(a)).real
        nb = 1.0 - np.einsum("ij,ij->i", b, np.conj(b)).real
        rho = np.sqrt(np.clip(1.0 - na * nb / np.abs(1.0 - ip) ** 2, 0.0, 1.0))
        best = min(best, float(rho.min()))
    if seq.metric == "kobayashi":
        return math.atanh(min(best, 1.0 - 1e-16))
    return best


def count_in_ball(seq: PointSequence, z0, r: float) -> int:
    """Number of sequence points with metric distance < r from z0."""
    if len(seq) == 0:
        return 0
    z0 = geom.as_point(z0)
    d = _metric_block(seq.metric, z0[None, :], seq.points)[0]
    return int(np.count_nonzero(d < r))


@dataclass(frozen=True)
class Decomposition:
    """First-fit colouring of a sequence into r-separated classes."""

    color_of: np.ndarray
    n_colors: int

    def classes(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.color_of == c) for c in range(self.n_colors)]


def greedy_decompose(seq: PointSequence, r: float) -> Decomposition:
    """First-fit split into classes of pairwise distance >= r.

    Each point takes the smallest colour unused among earlier points at
    distance < r; the colour count never exceeds the largest ball count
    N(x_j, r, sequence).
    """
    m = len(seq)
    colors = np.full(m, -1, dtype=int)
    n_colors = 0
    pts = seq.points
    for i in range(m):
        if i == 0:
            colors[0] = 0
            n_colors = 1
            continue
        d = _metric_block(seq.metric, pts[i : i + 1], pts[:i])[0]
        used = set(colors[:i][d < r].tolist())
        c = 0
        while c in used:
            c += 1
        colors[i] = c
        n_colors = max(n_colors, c + 1)
    return Decomposition(color_of=colors, n_colors=n_colors)


def _euclid_capture_radius(points: np.ndarray, threshold: float) -> np.ndarray:
    """Per-point Euclidean radius guaranteed to contain every point at
    pseudohyperbolic distance < threshold (ellipsoid extent plus margin)."""
    t = threshold
    nz2 = np.einsum("ij,ij->i", points, np.conj(points)).real
    scale = 1.0 / math.sqrt(1.0 - t * t) + t / (1.0 - t * t)
    return 1.05 * t * np.sqrt(1.0 - nz2) * scale


def greedy_pack(points, threshold: float, metric: str = "pseudohyperbolic", chunk: int = 2048) -> np.ndarray:
    """Indices of a greedy subset with pairwise distance >= threshold, in order.

    KD-tree prefiltering keeps the scan near-linear for large candidate sets.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.complex128))
    m = pts.shape[0]
    if m == 0:
        return np.zeros(0, dtype=int)
    if metric == "kobayashi":
        return greedy_pack(pts, math.tanh(threshold), metric="pseudohyperbolic", chunk=chunk)
    kept: list[int] = []
    rows = geom.points_to_rows(pts)
    tree = None
    kept_pts: np.ndarray | None = None
    for i0 in range(0, m, chunk):
        hi = min(i0 + chunk, m)
        idx = np.arange(i0, hi)
        if kept:
            if metric == "euclidean":
                radii = np.full(len(idx), threshold)
            else:
                radii = _euclid_capture_radius(pts[idx], threshold)
            neighbor_lists = tree.query_ball_point(rows[idx], r=radii)
        else:
            neighbor_lists = [[] for _ in idx]
        fresh: list[int] = []
        for j, i in enumerate(idx):
            ok = True
            nbrs = neighbor_lists[j]
            if nbrs:
                cand = kept_pts[nbrs]
                d = _metric_block(metric, pts[i : i + 1], cand)[0]
                ok = bool(np.all(d >= threshold))
            if ok and fresh:
                d = _metric_block(metric, pts[i : i + 1], pts[fresh])[0]
                ok = bool(np.all(d >= threshold))
            if ok:
                fresh.append(int(i))
        kept.extend(fresh)
        if kept:
            kept_pts = pts[kept]
            tree = cKDTree(rows[kept])
    return np.asarray(kept, dtype=int)


@dataclass
class CoverReport:
    """Covering construction outcome: centers of disjoint small balls whose
    enlarged balls cover the deep region, with an empirical multiplicity."""

    centers: np.ndarray
    r: float
    epsilon: float
    disjoint_threshold: float
    n_candidates: int
    n_probes: int
    uncovered: int
    multiplicity: int
    multiplicity_refined: int
    net_certified: bool

    def to_json_dict(self) -> dict:
        return {
            "n_centers": int(len(self.centers)),
            "r": self.r,
            "epsilon": self.epsilon,
            "disjoint_threshold": self.disjoint_threshold,
            "n_candidates": self.n_candidates,
            "n_probes": self.n_probes,
            "uncovered": self.uncovered,
            "multiplicity": self.multiplicity,
            "multiplicity_refined": self.multiplicity_refined,
            "net_certified": self.net_certified,
        }


def _min_rho_via_tree(queries: np.ndarray, targets: np.ndarray, tree: cKDTree, capture: float) -> np.ndarray:
    """Minimum pseudo distance from each query to the target set, provided it is
    below ``capture`` (larger distances are reported as +inf)."""
    radii = _euclid_capture_radius(queries, capture)
    lists = tree.query_ball_point(geom.points_to_rows(queries), r=radii)
    out = np.full(len(queries), math.inf)
    for i, nbrs in enumerate(lists):
        if nbrs:
            out[i] = float(np.min(pseudo_block(queries[i : i + 1], targets[nbrs])[0]))
    return out


def _count_within(queries: np.ndarray, targets: np.ndarray, radius: float, block: int = 512) -> np.ndarray:
    counts = np.zeros(len(queries), dtype=int)
    for i0 in range(0, len(queries), block):
        rho = pseudo_block(queries[i0 : i0 + block], targets)
        counts[i0 : i0 + block] = np.count_nonzero(rho < radius, axis=1)
    return counts


def _anchor_rng(anchor: np.ndarray) -> np.random.Generator:
    """Generator keyed to the anchor's coordinates: identical anchors (for
    example the shared argmax of nested probe stages) climb identically."""
    quantised = np.round(geom.points_to_rows(anchor[None, :])[0] * 1e12).astype(np.int64)
    entropy = [int(x) & 0xFFFFFFFFFFFFFFFF for x in quantised.tolist()]
    return np.random.default_rng(np.random.SeedSequence(entropy=entropy))


def _climb_multiplicity(
    anchor: np.ndarray,
    centers: np.ndarray,
    radius: float,
    samples_per_round: int = 4096,
    radii=(0.25, 0.12, 0.06, 0.03),
    max_cycles: int = 8,
) -> int:
    """Hill-climb the overlap count from an anchor until a full radius cycle
    brings no improvement; deterministic given the anchor."""
    rng = _anchor_rng(anchor)
    best_pt = anchor
    best = int(_count_within(anchor[None, :], centers, radius)[0])
    for _ in range(max_cycles):
        improved = False
        for rad in radii:
            ball = geom.kobayashi_ball(best_pt, rad)
            pts = geom.sample_ball_uniform(ball, samples_per_round, rng)
            counts = _count_within(pts, centers, radius)
            j = int(np.argmax(counts))
            if counts[j] > best:
                best = int(counts[j])
                best_pt = pts[j]
                improved = True
        if not improved:
            break
    return best


def greedy_cover(
    n: int,
    epsilon: float,
    r: float,
    seed: int = 0,
    n_candidates: int | None = None,
    n_probes: int = 10_000,
) -> CoverReport:
    """Cover the deep region {depth >= epsilon} of the ball by metric r-balls.

    Greedy selection of pairwise disjoint (r/3)-balls from a low-discrepancy
    candidate net; the selected centers' r-balls then cover.  The candidate set
    is certified to be an (r/3)-net on the probe points first; failure raises
    :class:`CoverageError` with a refinement hint.  Multiplicity is reported at
    radius (1 + r)/2 on a nested probe hierarchy (refined max can only grow).
    """
    if not 0.0 < r < 1.0:
        raise ParameterError("covering radius must be in (0, 1)")
    if not 0.0 < epsilon < 1.0:
        raise ParameterError("depth epsilon must be in (0, 1)")
    third = r / 3.0
    # candidates live on a slightly deeper region than the probes, so every
    # probe's (r/3)-ball has full candidate support (the construction covers
    # the whole domain; the deeper margin is its finite surrogate)
    cand_epsilon = 0.7 * epsilon
    if n_candidates is None:
        # net resolution is the (r/3)-ball scale: aim for ~12 candidates per ball
        u_max = (1.0 - cand_epsilon) ** 2
        kappa_region = (u_max / (1.0 - u_max)) ** n
        kappa_ball = (third**2 / (1.0 - third**2)) ** n
        n_candidates = int(min(max(12.0 * kappa_region / kappa_ball, 4096), 4_000_000))
    cands = _invariant_tilted_candidates(n, n_candidates, cand_epsilon, seed)

    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
    probes_all = _probe_points(n, epsilon, 4 * n_probes, rng)
    probes = probes_all[:n_probes]

    cand_tree = cKDTree(geom.points_to_rows(cands))
    gaps = _min_rho_via_tree(probes_all, cands, cand_tree, third)
    if not np.all(gaps < third):
        worst = int(np.count_nonzero(gaps >= third))
        raise CoverageError(
            f"candidate net misses {worst} probes at resolution r/3 = {third:.4g}; "
            f"retry with n_candidates > {4 * n_candidates}"
        )

    threshold = disjointness_threshold(third)
    kept = greedy_pack(cands, threshold)
    centers = cands[kept]

    center_tree = cKDTree(geom.points_to_rows(centers))
    cover_gaps = _min_rho_via_tree(probes_all, centers, center_tree, r)
    uncovered = int(np.count_nonzero(cover_gaps >= r))

    # empirical multiplicity: max overlap count over (centers + nested probes),
    # polished by a deterministic hill climb anchored at the global argmax
    big_r = 0.5 * (1.0 + r)
    mult_pts = np.vstack([centers, probes])
    counts = _count_within(mult_pts, centers, big_r)
    base_arg = int(np.argmax(counts))
    multiplicity = max(int(counts.max()), _climb_multiplicity(mult_pts[base_arg], centers, big_r))
    extra = probes_all[n_probes:]
    if len(extra):
        counts_all = np.concatenate([counts, _count_within(extra, centers, big_r)])
        all_pts = np.vstack([mult_pts, extra])
    else:
        counts_all, all_pts = counts, mult_pts
    ref_arg = int(np.argmax(counts_all))
    if ref_arg == base_arg:
        climbed = multiplicity
    else:
        climbed = _climb_multiplicity(all_pts[ref_arg], centers, big_r)
    multiplicity_refined = max(multiplicity, int(counts_all.max()), climbed)

    return CoverReport(
        centers=centers,
        r=float(r),
        epsilon=float(epsilon),
        disjoint_threshold=threshold,
        n_candidates=int(n_candidates),
        n_probes=int(n_probes),
        uncovered=uncovered,
        multiplicity=multiplicity,
        multiplicity_refined=multiplicity_refined,
        net_certified=True,
    )


def _probe_points(n: int, epsilon: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Probe mix for the deep region: half uniform, half boundary-concentrated."""
    half = count // 2
    u_max = (1.0 - epsilon) ** 2
    g = rng.standard_normal((count, 2 * n))
    dirs = g[:, :n] + 1j * g[:, n:]
    norms = np.linalg.norm(dirs, axis=1)
    norms[norms == 0.0] = 1.0
    u_uniform = u_max * rng.random(half) ** (1.0 / n)
    u_deep = _invariant_radial_law(n, rng.random(count - half), u_max)
    u = np.concatenate([u_uniform, u_deep])
    return dirs * (np.sqrt(u) / norms)[:, None]


def dirac_carleson_measure(seq: PointSequence) -> measures.Measure:
    """Dirac sum with weights d(z_j)^(n+1): the canonical induced measure."""
    n = seq.dimension
    weights = seq.boundary_distances ** (n + 1)
    return measures.Measure.from_atoms(seq.points, weights)


@dataclass(frozen=True)
class EscapeWeight:
    """Increasing weight h: R+ -> R+ from a named family.

    ``power(s)`` is h(x) = x^s (summable over 1/m iff s > 1); ``exp_inverse``
    is h(x) = e^(-1/x), which turns the weighted n-sum into the plain
    (n+1)-sum.  Custom callables are accepted with a monotonicity spot check.
    """

    kind: str
    s: float = 0.0
    fn: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    @classmethod
    def power(cls, s: float) -> "EscapeWeight":
        if s <= 0.0:
            raise ParameterError("power weight needs s > 0 to be increasing")
        return cls(kind="power", s=float(s))

    @classmethod
    def exp_inverse(cls) -> "EscapeWeight":
        return cls(kind="exp_inverse")

    @classmethod
    def custom(cls, fn: Callable[[np.ndarray], np.ndarray]) -> "EscapeWeight":
        grid = np.logspace(-3, 0, 64)
        vals = np.asarray(fn(grid), dtype=float)
        if np.any(~np.isfinite(vals)) or np.any(np.diff(vals) < -1e-12) or np.any(vals < 0.0):
            raise ParameterError("custom escape weight failed the monotonicity spot check")
        return cls(kind="custom", fn=fn)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "power":
            return x**self.s
        if self.kind == "exp_inverse":
            return np.exp(-1.0 / x)
        if self.kind == "custom" and self.fn is not None:
            return np.asarray(self.fn(x), dtype=float)
        raise ParameterError(f"escape weight of kind {self.kind!r} is not evaluable")


@dataclass
class EscapeSumResult:
    """Partial sums of the escape series in descending-term order."""

    terms: np.ndarray
    partial_sums: np.ndarray
    total: float
    last_decade_increment: float

    @property
    def count(self) -> int:
        return int(self.terms.size)


def _resolve_exponent(seq: PointSequence, exponent) -> int:
    n = seq.dimension
    if isinstance(exponent, str):
        table = {"n": n, "n+1": n + 1, "2n": 2 * n}
        if exponent not in table:
            raise ParameterError("exponent must be one of 'n', 'n+1', '2n' or an integer")
        return table[exponent]
    return int(exponent)


def escape_sum(seq: PointSequence, weight: EscapeWeight | None = None, exponent="n+1") -> EscapeSumResult:
    """Partial sums of sum_j d(z_j)^e * h(-1/log d(z_j)) with convergence diagnostics.

    Terms are summed largest first (the sequence is a set; this order makes the
    tail diagnostic meaningful), and the last-decade increment is the mass of
    the final 10% of terms.  Sums are truncated at the generator's horizon and
    never extrapolated.
    """
    e = _resolve_exponent(seq, exponent)
    d = seq.boundary_distances
    if len(seq) == 0:
        empty = np.zeros(0)
        return EscapeSumResult(terms=empty, partial_sums=empty, total=0.0, last_decade_increment=0.0)
    terms = d.astype(float) ** e
    if weight is not None:
        if np.any(d >= 1.0):
            raise ParameterError(
                "weighted escape sums require d(z_j) < 1 for every point "
                f"(violated at indices {np.flatnonzero(d >= 1.0)[:5].tolist()})"
            )
        terms = terms * weight(-1.0 / np.log(d))
    order = np.argsort(-terms)
    terms = terms[order]
    partial = np.cumsum(terms)
    cut = int(math.floor(0.9 * len(terms)))
    increment = float(partial[-1] - (partial[cut - 1] if cut >= 1 else 0.0))
    return EscapeSumResult(
        terms=terms,
        partial_sums=partial,
        total=float(partial[-1]),
        last_decade_increment=increment,
    )


@dataclass
class ShellCounts:
    """Counts per Kobayashi half-unit shell around a base point, with the
    log-linear growth slope fitted on interior shells."""

    counts: np.ndarray
    slope: float
    slope_se: float
    fit_shells: tuple[int, ...]

    def rows(self) -> list[tuple[int, int]]:
        return [(int(m), int(c)) for m, c in enumerate(self.counts)]


def shell_counts(seq: PointSequence, z0=None) -> ShellCounts:
    """Histogram of k(z0, z_j) over shells [m/2, (m+1)/2) and its growth slope.

    The slope is fitted on interior nonzero shells (the first nonzero shell
    carries a small-count transient and the last one is truncated by the
    generator horizon; both are dropped when at least four shells remain).
    """
    if z0 is None:
        z0 = np.zeros(seq.dimension, dtype=np.complex128)
    z0 = geom.as_point(z0)
    if len(seq) == 0:
        return ShellCounts(counts=np.zeros(0, dtype=int), slope=math.nan, slope_se=math.nan, fit_shells=())
    rho = geom.pseudo_distance_many(z0, seq.points)
    k = np.arctanh(np.minimum(rho, 1.0 - 1e-16))
    m = np.floor(2.0 * k).astype(int)
    counts = np.bincount(m)
    nz = np.flatnonzero(counts)
    fit_idx = nz
    if len(nz) >= 4:
        fit_idx = nz[1:-1]
    if len(fit_idx) < 2:
        return ShellCounts(counts=counts, slope=math.nan, slope_se=math.nan, fit_shells=tuple(int(i) for i in fit_idx))
    x = fit_idx.astype(float)
    y = np.log(counts[fit_idx].astype(float))
    xc = x - x.mean()
    sxx = float(np.sum(xc**2))
    slope = float(np.sum(xc * y) / sxx)
    resid = y - (y.mean() + slope * xc)
    dof = max(len(x) - 2, 1)
    slope_se = math.sqrt(float(np.sum(resid**2)) / dof / sxx)
    return ShellCounts(counts=counts, slope=slope, slope_se=slope_se, fit_shells=tuple(int(i) for i in fit_idx))
