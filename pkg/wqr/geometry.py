r"""
Geometry
========

Balls, box domains and packings of them. Everything the constructions in ``wqr`` do happens inside
balls: a map is modified on a family of disjoint balls, then again on smaller balls inside those, and so
on. This module provides the regions, a fast index answering "which ball contains this point and how far
is the nearest free space", and ``pack`` which produces finite approximations of exact packings.

Points are plain ``numpy`` arrays whose last axis is the ambient dimension ``n``. Mixing dimensions raises
``DimensionMismatch``.

Exact packings
--------------

An exact packing covers a region up to a null set with countably many disjoint balls. Finite
computation cannot do that, so ``pack`` stops once a Monte Carlo estimate of the uncovered fraction is
below a tolerance ``eta``. The procedure is a grid refinement greedy:

#. Optionally place ``m`` *forced* balls of radius exactly ``rho`` on a cubic lattice of pitch ``2 rho``
    inside the region shrunk by ``rho``.
#. For pitches ``h = 2 delta_max, delta_max, delta_max / 2, ...`` draw fresh uniform probes (one spawned
    seed per level). The fraction of probes that fall outside every ball is the level's estimate of the
    uncovered fraction, stop if it is ``<= eta``.
#. Every lattice cell of pitch ``h`` that is not inside a placed ball is a candidate site. Each gets the
    largest radius that fits (capped at ``delta_max``) and candidates whose radius is at least ``h / 2``
    are accepted greedily, largest first. The live cells are split in ``2^n`` for the next level. Once a
    level would try more than ``max_sites`` sites only the sites nearest the uncovered probes are tried.

Refinement also stops at ``max_balls`` balls or when ``h / 2`` falls below ``1e-4`` of the inradius. Then
the partial packing is returned with ``exhausted`` set and a warning is logged, ``strict=True`` raises
``BudgetExceeded`` instead.

Because the balls are disjoint and inside the region, the exact uncovered fraction is also known from
volumes, ``Packing.uncovered_fraction_exact`` reports it next to the statistical estimate.

Documentation
-------------
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import gamma
from scipy.spatial import cKDTree
from tqdm.auto import tqdm

from .utils import WQRError, get_logger, show_progress, write_csv, dumps_json

logger = get_logger(__name__)

REL_TOL = 1e-12
# smallest positive gap counted as "outside"
_TINY = np.finfo(float).tiny


class DimensionMismatch(WQRError):
    exit_code = 2


class InfeasibleForcedCount(WQRError):
    exit_code = 3


class BudgetExceeded(WQRError):
    exit_code = 3

    def __init__(self, message, packing=None, **details):
        super().__init__(message, **details)
        self.packing = packing


def ball_volume(n, r=1.0):
    return math.pi ** (n / 2) / gamma(n / 2 + 1) * r ** n


def sphere_measure(n):
    """surface measure of the unit sphere in R^n"""
    return 2 * math.pi ** (n / 2) / gamma(n / 2)


def as_points(x, n):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise DimensionMismatch(f"expected points in R^{n}, got shape {x.shape}", expected=n, got=int(x.shape[-1]))
    return x


# ============= regions =============== #


@dataclass(frozen=True)
class Ball:
    center: Tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.ravel(self.center)))
        object.__setattr__(self, "radius", float(self.radius))
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got: {self.radius}")
        if len(self.center) < 2:
            raise DimensionMismatch(f"dimension must be at least 2, got: {len(self.center)}")

    @property
    def n(self):
        return len(self.center)

    @property
    def y(self):
        return np.array(self.center)

    @property
    def inradius(self):
        return self.radius

    @property
    def volume(self):
        return ball_volume(self.n, self.radius)

    @property
    def diameter(self):
        return 2 * self.radius

    def scaled(self, a):
        """the concentric ball ``aB``"""
        return Ball(self.center, a * self.radius)

    def boundary_distance(self, x):
        x = as_points(x, self.n)
        return self.radius - np.linalg.norm(x - self.y, axis=-1)

    def contains(self, x, tol=REL_TOL):
        return self.boundary_distance(x) >= -tol * self.radius

    def grid_anchor(self):
        # lattice sites are center + h * Z^n
        return self.y, 0.0

    def sample(self, rng, count):
        g = rng.standard_normal((count, self.n))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        u = rng.random(count) ** (1.0 / self.n)
        return self.y + self.radius * u[:, None] * g

    def to_dict(self):
        return {"kind": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class BoxDomain:
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(c) for c in np.ravel(self.lower)))
        object.__setattr__(self, "upper", tuple(float(c) for c in np.ravel(self.upper)))
        if len(self.lower) != len(self.upper):
            raise DimensionMismatch(f"corners differ in dimension: {len(self.lower)} vs {len(self.upper)}")
        if len(self.lower) < 2:
            raise DimensionMismatch(f"dimension must be at least 2, got: {len(self.lower)}")
        if not all(u > l for l, u in zip(self.lower, self.upper)):
            raise ValueError(f"upper corner must exceed lower corner componentwise: {self.lower} / {self.upper}")

    @classmethod
    def unit_cube(cls, n):
        return cls((0.0,) * n, (1.0,) * n)

    @property
    def n(self):
        return len(self.lower)

    @property
    def lo(self):
        return np.array(self.lower)

    @property
    def hi(self):
        return np.array(self.upper)

    @property
    def sides(self):
        return self.hi - self.lo

    @property
    def center(self):
        return tuple((self.lo + self.hi) / 2)

    @property
    def volume(self):
        return float(np.prod(self.sides))

    @property
    def inradius(self):
        return float(self.sides.min() / 2)

    @property
    def diameter(self):
        return float(np.linalg.norm(self.sides))

    def boundary_distance(self, x):
        x = as_points(x, self.n)
        return np.minimum(x - self.lo, self.hi - x).min(axis=-1)

    def contains(self, x, tol=REL_TOL):
        return self.boundary_distance(x) >= -tol * self.inradius

    def grid_anchor(self):
        # lattice sites are cell centers lower + h * (Z + 1/2)^n
        return self.lo, 0.5

    def sample(self, rng, count):
        return self.lo + self.sides * rng.random((count, self.n))

    def to_dict(self):
        return {"kind": "box", "lower": list(self.lower), "upper": list(self.upper)}


Region = Union[Ball, BoxDomain]


def region_from_dict(d):
    if d["kind"] == "ball":
        return Ball(d["center"], d["radius"])
    if d["kind"] == "box":
        return BoxDomain(d["lower"], d["upper"])
    raise ValueError(f"unknown region kind: {d['kind']}")


def sample_ball_in_region(ball: Ball, region: Region, rng, count):
    """uniform samples of ``ball`` intersected with ``region`` by rejection from the smaller of the two"""
    source = ball if ball.volume <= region.volume else region
    other = region if source is ball else ball
    out, have = [], 0
    while have < count:
        x = source.sample(rng, max(2 * (count - have), 64))
        x = x[other.contains(x, tol=0.0)]
        out.append(x)
        have += len(x)
    return np.concatenate(out)[:count]


# ============= index =============== #


class BallIndex:
    r"""Answers signed gap queries ``min_i(|x - y_i| - r_i)`` over a set of balls. A negative gap means the
    point is inside the ball that attains it. Balls are bucketed by radius octave with one ``cKDTree`` per
    bucket so that nearest-center searches within a bucket are exact up to a factor two in radius, and
    the search widens until the minimum is certified."""

    def __init__(self, centers, radii):
        self.radii = np.asarray(radii, dtype=float).reshape(-1)
        self.centers = np.atleast_2d(np.asarray(centers, dtype=float))
        self.buckets = []
        if len(self.radii):
            octave = np.floor(np.log2(self.radii)).astype(np.int64)
            for o in np.unique(octave):
                members = np.nonzero(octave == o)[0]
                self.buckets.append((cKDTree(self.centers[members]), members, float(self.radii[members].max())))

    def __len__(self):
        return len(self.radii)

    def _bucket_gap(self, tree, members, rmax, points, cap):
        size = len(members)
        r_b = self.radii[members]
        gap = np.full(len(points), cap, dtype=float)
        idx = np.full(len(points), -1, dtype=np.int64)
        bound = cap + rmax
        todo = np.arange(len(points))
        k = min(8, size)
        while len(todo):
            d, i = tree.query(points[todo], k=k, distance_upper_bound=bound)
            d = d.reshape(len(todo), k)
            i = i.reshape(len(todo), k)
            found = np.isfinite(d)
            g = np.where(found, d - r_b[np.minimum(i, size - 1)], np.inf)
            best = g.argmin(axis=1)
            rows = np.arange(len(todo))
            g_best = g[rows, best]
            kth = d[:, -1]
            # exact once no unseen ball can have a closer surface
            done = ~np.isfinite(kth) | (g_best <= kth - rmax) | (k >= size)
            sel = todo[done]
            hit = g_best[done] < cap
            gap[sel[hit]] = g_best[done][hit]
            idx[sel[hit]] = members[i[rows[done][hit], best[done][hit]]]
            todo = todo[~done]
            k = min(2 * k, size)
        return gap, idx

    def query(self, points, cap=np.inf):
        """signed gap clipped above at ``cap`` and the index of the ball attaining it (``-1`` when the gap
        is not below ``cap``)"""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        gap = np.full(len(points), cap, dtype=float)
        idx = np.full(len(points), -1, dtype=np.int64)
        for tree, members, rmax in self.buckets:
            g, j = self._bucket_gap(tree, members, rmax, points, cap)
            better = g < gap
            gap[better] = g[better]
            idx[better] = j[better]
        return gap, idx

    def containing(self, points):
        """index of the closed ball containing each point, ``-1`` if none"""
        gap, idx = self.query(points, cap=_TINY)
        return np.where(gap <= 0, idx, -1)


# ============= forced lattice =============== #


def _half_extent(region, rho):
    # lattice coordinate bound for sites inside the region shrunk by rho
    if isinstance(region, Ball):
        return (region.radius - rho) / (2 * rho) * (1 + REL_TOL) + REL_TOL
    return ((region.sides / 2 - rho) / (2 * rho)) * (1 + REL_TOL) + REL_TOL


def _axis_values(H, shift):
    if H < 0:
        return np.zeros(0)
    lo = math.ceil(-H - shift)
    hi = math.floor(H - shift)
    return np.arange(lo, hi + 1, dtype=float) + shift


def _ball_lattice_count(n, H, shift):
    if H < 0:
        return 0
    vals = _axis_values(H, shift)
    if n == 1:
        return len(vals)
    grids = np.meshgrid(*([vals] * (n - 1)), indexing="ij")
    rem = H * H - sum(g ** 2 for g in grids)
    rem = rem[rem >= 0]
    s = np.sqrt(rem)
    if shift == 0.0:
        return int((2 * np.floor(s) + 1).sum())
    return int((2 * np.floor(s + 0.5)).sum())


def _lattice_count(region, rho, shift):
    H = _half_extent(region, rho)
    if isinstance(region, Ball):
        return _ball_lattice_count(region.n, H, shift)
    return int(np.prod([len(_axis_values(h, shift)) for h in H]))


def forced_capacity(region: Region, rho: float):
    """``(capacity, shift)`` of the better of the two cubic lattices of pitch ``2 rho`` (anchored at the
    region center, or shifted by half a pitch) inside the region shrunk by ``rho``. Counting is done row
    by row so very fine lattices never get materialised."""
    best = (0, 0.0)
    for shift in (0.0, 0.5):
        c = _lattice_count(region, rho, shift)
        if c > best[0]:
            best = (c, shift)
    return best


def forced_grid(region: Region, rho: float, m: Optional[int] = None):
    """centers of the forced balls: the ``m`` sites nearest the region center of the lattice chosen by
    ``forced_capacity`` (all of them when ``m`` is None)"""
    capacity, shift = forced_capacity(region, rho)
    m = capacity if m is None else m
    if m > capacity:
        raise InfeasibleForcedCount(
            f"lattice of pitch {2 * rho} hosts only {capacity} balls of radius {rho}, requested {m}",
            requested=int(m),
            capacity=int(capacity),
        )
    if m == 0:
        return np.zeros((0, region.n))
    H = np.broadcast_to(_half_extent(region, rho), (region.n,))
    axes = [_axis_values(h, shift) for h in H]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, region.n)
    if isinstance(region, Ball):
        grid = grid[np.linalg.norm(grid, axis=1) <= float(H[0])]
    order = np.lexsort(tuple(grid[:, j] for j in reversed(range(region.n))) + (np.linalg.norm(grid, axis=1),))
    grid = grid[order[:m]]
    return np.asarray(region.center, dtype=float) + 2 * rho * grid


# ============= packing =============== #


@dataclass
class Packing:
    region: Region
    centers: np.ndarray
    radii: np.ndarray
    uncovered_fraction_estimate: float
    uncovered_fraction_stderr: float
    delta_max: float
    forced_count: int = 0
    forced_radius: Optional[float] = None
    exhausted: Optional[str] = None
    levels: int = 0
    seed: int = 0
    _index: Optional[BallIndex] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float).reshape(-1)
        self.centers = np.asarray(self.centers, dtype=float).reshape(len(self.radii), self.region.n)

    def __len__(self):
        return len(self.radii)

    @property
    def n(self):
        return self.region.n

    @property
    def balls(self) -> List[Ball]:
        return [Ball(c, r) for c, r in zip(self.centers, self.radii)]

    @property
    def covered_volume(self):
        return float(ball_volume(self.n) * np.sum(self.radii ** self.n))

    @property
    def uncovered_fraction_exact(self):
        return 1.0 - self.covered_volume / self.region.volume

    @property
    def index(self) -> BallIndex:
        if self._index is None:
            self._index = BallIndex(self.centers, self.radii)
        return self._index

    def validate(self, tol=REL_TOL):
        """raises ``ValueError`` when disjointness, containment or the radius cap is violated"""
        scale = self.region.inradius
        if len(self) and self.radii.max() > self.delta_max * (1 + tol):
            raise ValueError(f"radius {self.radii.max()} above delta_max {self.delta_max}")
        inside = self.region.boundary_distance(self.centers) - self.radii >= -tol * scale
        if not np.all(inside):
            raise ValueError(f"{int((~inside).sum())} balls leave the region")
        if len(self) > 1:
            tree = cKDTree(self.centers)
            pairs = tree.query_pairs(2 * self.radii.max(), output_type="ndarray")
            if len(pairs):
                d = np.linalg.norm(self.centers[pairs[:, 0]] - self.centers[pairs[:, 1]], axis=1)
                s = self.radii[pairs[:, 0]] + self.radii[pairs[:, 1]]
                bad = d < s - tol * np.maximum(s, scale)
                if np.any(bad):
                    raise ValueError(f"{int(bad.sum())} overlapping pairs")
        return True

    def to_dict(self):
        return {
            "region": self.region.to_dict(),
            "centers": self.centers,
            "radii": self.radii,
            "uncovered_fraction_estimate": self.uncovered_fraction_estimate,
            "uncovered_fraction_stderr": self.uncovered_fraction_stderr,
            "uncovered_fraction_exact": self.uncovered_fraction_exact,
            "delta_max": self.delta_max,
            "forced_count": self.forced_count,
            "forced_radius": self.forced_radius,
            "exhausted": self.exhausted,
            "levels": self.levels,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        region = region_from_dict(d["region"])
        return cls(
            region=region,
            centers=np.array(d["centers"], dtype=float).reshape(-1, region.n),
            radii=np.array(d["radii"], dtype=float),
            uncovered_fraction_estimate=d["uncovered_fraction_estimate"],
            uncovered_fraction_stderr=d["uncovered_fraction_stderr"],
            delta_max=d["delta_max"],
            forced_count=d["forced_count"],
            forced_radius=d["forced_radius"],
            exhausted=d["exhausted"],
            levels=d["levels"],
            seed=d["seed"],
        )

    def to_json(self, path=None):
        _j = dumps_json(self.to_dict())
        if path == None:
            return _j
        with open(path, "w") as f:
            f.write(_j + "\n")

    def rows(self, generation=1):
        for i, (c, r) in enumerate(zip(self.centers, self.radii)):
            yield [generation, i, *c, r]

    def header(self):
        return ["generation", "index"] + [f"x{i}" for i in range(self.n)] + ["radius"]

    def to_csv(self, path, generation=1):
        write_csv(path, self.header(), self.rows(generation))


def _greedy_accept(centers, radii, ids):
    """largest-first independent set among candidates whose balls would overlap"""
    n = ids.shape[1]
    order = np.lexsort(tuple(ids[:, j] for j in reversed(range(n))) + (-radii,))
    if len(radii) < 2:
        return order
    pairs = cKDTree(centers).query_pairs(2 * radii.max(), output_type="ndarray")
    if len(pairs):
        d = np.linalg.norm(centers[pairs[:, 0]] - centers[pairs[:, 1]], axis=1)
        s = radii[pairs[:, 0]] + radii[pairs[:, 1]]
        pairs = pairs[d < s * (1 - REL_TOL)]
    if not len(pairs):
        return order
    both = np.concatenate([pairs, pairs[:, ::-1]])
    both = both[np.argsort(both[:, 0], kind="stable")]
    starts = np.searchsorted(both[:, 0], np.arange(len(radii) + 1))
    blocked = np.zeros(len(radii), dtype=bool)
    accepted = []
    for i in order:
        if blocked[i]:
            continue
        accepted.append(i)
        blocked[both[starts[i] : starts[i + 1], 1]] = True
    return np.array(accepted, dtype=np.int64)


def _initial_cells(region, anchor, offset, h, max_sites):
    """lattice ids of the pitch ``h`` cells meeting the region, ``None`` when there are more than ``max_sites``"""
    c = np.asarray(region.center, dtype=float)
    half = region.radius if isinstance(region, Ball) else region.sides / 2
    lo = np.floor((c - half - anchor) / h - offset).astype(np.int64)
    hi = np.ceil((c + half - anchor) / h - offset).astype(np.int64)
    lo, hi = np.broadcast_to(lo, (region.n,)), np.broadcast_to(hi, (region.n,))
    if np.prod((hi - lo + 1).astype(float)) > max_sites:
        return None
    axes = [np.arange(l, u + 1) for l, u in zip(lo, hi)]
    ids = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, region.n)
    sites = anchor + (ids + offset) * h
    return ids[region.boundary_distance(sites) > -0.5 * h * math.sqrt(region.n)]


def _child_cells(ids, offset):
    """ids at pitch ``h / 2`` of the cells meeting the pitch ``h`` cells ``ids``"""
    n = ids.shape[1]
    steps = (0, 1) if offset else (-1, 0, 1)
    shifts = np.stack(np.meshgrid(*([steps] * n), indexing="ij"), axis=-1).reshape(-1, n)
    return np.unique((2 * ids[:, None, :] + shifts[None]).reshape(-1, n), axis=0)


def pack(
    region: Region,
    delta_max: float,
    eta: float,
    forced: Optional[Tuple[int, float]] = None,
    seed: int = 0,
    max_balls: int = 200_000,
    samples: int = 100_000,
    min_radius_ratio: float = 1e-4,
    strict: bool = False,
    max_sites: int = 2_000_000,
) -> Packing:
    r"""Pack ``region`` with disjoint balls of radius at most ``delta_max`` until the Monte Carlo uncovered
    fraction is at most ``eta``.

    Args:
        region (Region): ``Ball`` or ``BoxDomain`` to pack
        delta_max (float): radius cap, at most the inradius of the region
        eta (float): fill tolerance in ``(0, 1)``
        forced (Tuple[int, float], optional): ``(m, rho)``, place ``m`` balls of radius exactly ``rho`` first
        seed (int, optional): seed of the probe streams
        max_balls (int, optional): ball count cap
        samples (int, optional): probes per refinement level
        min_radius_ratio (float, optional): stop when the candidate radius drops below this times the inradius
        strict (bool, optional): raise ``BudgetExceeded`` instead of returning a flagged partial packing
        max_sites (int, optional): most lattice sites tried in one level, beyond it only the sites nearest
            uncovered probes are tried
    """
    if not 0 < eta < 1:
        raise ValueError(f"eta must be in (0, 1), got: {eta}")
    inradius = region.inradius
    if not 0 < delta_max <= inradius * (1 + REL_TOL):
        raise ValueError(f"delta_max must be in (0, inradius={inradius}], got: {delta_max}")
    delta_max = min(delta_max, inradius)
    n = region.n

    centers = np.zeros((0, n))
    radii = np.zeros(0)
    forced_count, forced_radius = 0, None
    if forced is not None:
        m, rho = int(forced[0]), float(forced[1])
        if rho > delta_max * (1 + REL_TOL):
            raise ValueError(f"forced radius {rho} exceeds delta_max {delta_max}")
        if m > max_balls:
            raise BudgetExceeded(f"forced count {m} exceeds the ball cap {max_balls}", requested=m, max_balls=max_balls)
        centers = forced_grid(region, rho, m)
        radii = np.full(m, rho)
        forced_count, forced_radius = m, rho

    anchor, offset = region.grid_anchor()
    seq = np.random.SeedSequence(seed)
    h = 2 * delta_max
    cells = _initial_cells(region, anchor, offset, h, max_sites)
    level = 0
    exhausted = None
    pbar = tqdm(desc="packing", disable=not show_progress(logger), leave=False)
    while True:
        index = BallIndex(centers, radii)
        rng = np.random.default_rng(seq.spawn(1)[0])
        probes = region.sample(rng, samples)
        gap, _ = index.query(probes, cap=_TINY)
        uncovered = gap > 0
        estimate = float(uncovered.mean())
        stderr = math.sqrt(estimate * (1 - estimate) / samples)
        pbar.set_description(f"packing | level: {level} | balls: {len(radii)} | uncovered: {estimate:.4f}")
        pbar.update(1)
        if estimate <= eta:
            break
        if len(radii) >= max_balls:
            exhausted = "max_balls"
            break
        if h / 2 < min_radius_ratio * inradius:
            exhausted = "min_radius"
            break

        if cells is None:
            ids = np.unique(np.round((probes[uncovered] - anchor) / h - offset).astype(np.int64), axis=0)
        else:
            ids = cells
        cand = anchor + (ids + offset) * h
        boundary = region.boundary_distance(cand)
        space = index.query(cand, cap=delta_max)[0]
        if cells is not None:
            # drop cells lying inside a placed ball or outside the region
            half_diagonal = 0.5 * h * math.sqrt(n)
            live = (space > -half_diagonal) & (boundary > -half_diagonal)
            cells, ids, cand, boundary, space = cells[live], ids[live], cand[live], boundary[live], space[live]
        rad = np.minimum(np.minimum(boundary - REL_TOL * inradius, space), delta_max)
        ok = rad >= 0.5 * h * (1 - 1e-9)
        if np.any(ok):
            keep = _greedy_accept(cand[ok], rad[ok], ids[ok])[: max_balls - len(radii)]
            centers = np.concatenate([centers, cand[ok][keep]])
            radii = np.concatenate([radii, rad[ok][keep]])
        if cells is not None:
            if len(cells) * (2 if offset else 3) ** n > max_sites:
                logger.debug(f"level {level}: {len(cells)} live cells, switching to probe driven sites")
                cells = None
            elif len(cells):
                cells = _child_cells(cells, offset)
        h /= 2
        level += 1
    pbar.close()

    packing = Packing(
        region=region,
        centers=centers,
        radii=radii,
        uncovered_fraction_estimate=estimate,
        uncovered_fraction_stderr=stderr,
        delta_max=delta_max,
        forced_count=forced_count,
        forced_radius=forced_radius,
        exhausted=exhausted,
        levels=level,
        seed=seed,
        _index=BallIndex(centers, radii),
    )
    if exhausted is not None:
        msg = f"packing stopped on {exhausted} with uncovered fraction {estimate:.4f} > eta={eta} ({len(radii)} balls)"
        if strict:
            raise BudgetExceeded(msg, packing=packing, reason=exhausted, uncovered=estimate, eta=eta, balls=len(radii))
        logger.warning(msg)
    return packing


def uncovered_fraction(region: Region, balls: Union[Packing, Sequence[Ball]], samples: int = 100_000, seed: int = 0):
    """Monte Carlo estimate of ``|region minus the union of balls| / |region|`` and its standard error"""
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got: {samples}")
    if isinstance(balls, Packing):
        index = balls.index
        if balls.n != region.n:
            raise DimensionMismatch(f"packing lives in R^{balls.n}, region in R^{region.n}")
    else:
        balls = list(balls)
        for b in balls:
            if b.n != region.n:
                raise DimensionMismatch(f"ball lives in R^{b.n}, region in R^{region.n}")
        index = BallIndex(np.array([b.center for b in balls]).reshape(-1, region.n), [b.radius for b in balls])
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    x = region.sample(rng, samples)
    gap, _ = index.query(x, cap=_TINY)
    estimate = float((gap > 0).mean())
    return estimate, math.sqrt(estimate * (1 - estimate) / samples)
