r"""
Construction
============

The iterated map ``F_k``. Start with a packing of the domain by balls ``B_{1,j}`` of radius at most
``delta_1`` and put a radial stretch on every one of them. Inside each ``a B_{1,j}`` the stretch is affine
with scale ``a^{-alpha}``, so the next generation packs those inner balls by balls of radius at most
``delta_2`` and repeats, with targets and scales inherited from the previous generation:

.. code-block::

    F_k(x) = Phi(x)                                          x in B_{k,j} \ a B_{k,j}
           = F_{k-1}(y_{k,j}) + a^{-k alpha} (x - y_{k,j})    x in a B_{k,j}
           = F_{k-1}(x)                                      otherwise

where ``Phi`` is the stretch of ``B_{k,j}`` with target ``F_{k-1}(y_{k,j})`` and scale ``a^{-(k-1) alpha}``. The
three branches glue continuously along both spheres of every ball.

Self-similar trees
------------------

Every ``a B`` of every generation is packed by the *same* packing of the unit ball (the template) mapped
by the similarity ``x -> y + a r x``. The template radius cap is ``ratio / a`` with
``ratio = delta_k / delta_{k-1}``, so children never exceed ``delta_k``. This keeps a depth 6 tree
representable: nodes are addressed by paths ``(root index, child index, ...)`` and everything about a node
(its ball, the image of its center, its scale and whether it belongs to the Cantor spine) is derived along
the path. Evaluation descends all query points together, one generation at a time.

Schedules
---------

* ``SUMMABLE``: ``delta_k = delta_0 q^k`` with ``q < a^alpha`` so that ``sum a^{-k alpha} delta_k`` converges
  and ``F_k`` converges uniformly to a bounded map.
* ``CANTOR``: ``delta_k = delta_0 (1 + delta)^k a^{alpha k}``. The displacement bounds are ``delta_0 (1 + delta)^k``
  and do not sum. With forced branching every spine ball of radius ``delta_{k-1}`` carries children of radius
  exactly ``delta_k`` on a cubic lattice, their nested intersection is a Cantor set on which averages of
  ``|F|`` blow up.

Documentation
-------------
"""

import math
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from .geometry import (
    REL_TOL,
    Ball,
    BoxDomain,
    DimensionMismatch,
    InfeasibleForcedCount,
    Packing,
    as_points,
    ball_volume,
    forced_capacity,
    pack,
    region_from_dict,
)
from .radial import AffineMap, RadialStretch, StretchVariant
from .utils import WQRError, dumps_json, get_logger, load_json, sha256, write_csv

logger = get_logger(__name__)

VALID_SCHEDULES = ["SUMMABLE", "CANTOR"]

OUTSIDE_ALL = 0
ANNULUS = 1
INNER_AFFINE = 2
REGION_TAGS = {OUTSIDE_ALL: "OUTSIDE_ALL", ANNULUS: "ANNULUS", INNER_AFFINE: "INNER_AFFINE"}


class ScheduleInfeasible(WQRError):
    exit_code = 3


class OutsideDomain(WQRError):
    exit_code = 2


class OnInterface(WQRError):
    exit_code = 1


@dataclass(frozen=True)
class ScheduleParams:
    # the construction
    n: int = 3
    K: float = 2.0
    a: float = 0.5
    variant: str = "PHI"
    depth: int = 6
    # radius schedule
    schedule: str = "SUMMABLE"
    delta0: Optional[float] = None
    q: Optional[float] = None
    delta: float = 0.2
    # packing
    eta: float = 0.05
    forced: bool = False
    forced_fraction: float = 1.0
    max_balls: int = 200_000
    samples: int = 100_000
    seed: int = 4

    def __post_init__(self):
        object.__setattr__(self, "variant", str(self.variant).upper())
        object.__setattr__(self, "schedule", str(self.schedule).upper())
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"n must be an integer >= 3, got: {self.n}")
        if not 0 < self.a < 1:
            raise ValueError(f"a must be in (0, 1), got: {self.a}")
        if int(self.depth) != self.depth or self.depth < 1:
            raise ValueError(f"depth must be an integer >= 1, got: {self.depth}")
        if self.schedule not in VALID_SCHEDULES:
            raise ValueError(f"schedule should be one of {VALID_SCHEDULES} got: {self.schedule}")
        if not 0 < self.eta < 1:
            raise ValueError(f"eta must be in (0, 1), got: {self.eta}")
        if not 0 < self.forced_fraction <= 1:
            raise ValueError(f"forced_fraction must be in (0, 1], got: {self.forced_fraction}")
        if self.delta0 is not None and not self.delta0 > 0:
            raise ValueError(f"delta0 must be positive, got: {self.delta0}")
        StretchVariant(self.variant, self.K)

        alpha = self.stretch_variant.alpha
        if self.schedule == "SUMMABLE":
            if self.q is not None and not 0 < self.q < self.a ** alpha:
                raise ScheduleInfeasible(
                    f"SUMMABLE needs 0 < q < a^alpha = {self.a ** alpha}, got q = {self.q}",
                    q=self.q,
                    bound=self.a ** alpha,
                )
        else:
            if not self.delta >= 0:
                raise ValueError(f"delta must be >= 0, got: {self.delta}")
            if (1 + self.delta) * self.a ** alpha >= 1:
                raise ScheduleInfeasible(
                    f"CANTOR needs (1 + delta) < a^-alpha = {self.a ** -alpha}, got 1 + delta = {1 + self.delta}",
                    delta=self.delta,
                    bound=self.a ** -alpha - 1,
                )
        if self.ratio / self.a > 1 + REL_TOL:
            raise ScheduleInfeasible(
                f"children of radius delta_k = {self.ratio / self.a:.6g} a delta_(k-1) do not fit in a B",
                relative_radius=self.ratio / self.a,
            )

    @property
    def stretch_variant(self):
        return StretchVariant(self.variant, self.K)

    @property
    def alpha(self):
        return self.stretch_variant.alpha

    @property
    def critical_p(self):
        return self.stretch_variant.critical_p(self.n)

    @property
    def q_value(self):
        return 0.9 * self.a ** self.alpha if self.q is None else self.q

    @property
    def ratio(self):
        """``delta_k / delta_(k-1)``"""
        if self.schedule == "SUMMABLE":
            return self.q_value
        return (1 + self.delta) * self.a ** self.alpha

    @property
    def template_delta_max(self):
        # child radius cap relative to the inner ball a B
        return min(self.ratio / self.a, 1.0)

    def resolved(self, domain):
        """fill ``delta0`` (``inradius / 4`` for SUMMABLE, 1 for CANTOR) and ``q``"""
        delta0 = self.delta0
        if delta0 is None:
            delta0 = domain.inradius / 4 if self.schedule == "SUMMABLE" else 1.0
        q = self.q_value if self.schedule == "SUMMABLE" else self.q
        return replace(self, delta0=float(delta0), q=q)

    def delta_k(self, k):
        assert self.delta0 is not None, "call .resolved(domain) first"
        if self.schedule == "SUMMABLE":
            return self.delta0 * self.q_value ** k
        return self.delta0 * (1 + self.delta) ** k * self.a ** (self.alpha * k)

    def tail_term(self, k):
        """``a^(-k alpha) delta_k``: bound on ``|F_k - F_(k-1)|``"""
        assert self.delta0 is not None, "call .resolved(domain) first"
        if self.schedule == "SUMMABLE":
            return self.delta0 * (self.q_value / self.a ** self.alpha) ** k
        return self.delta0 * (1 + self.delta) ** k

    def to_dict(self):
        return {
            "n": self.n,
            "K": self.K,
            "a": self.a,
            "variant": self.variant,
            "depth": self.depth,
            "schedule": self.schedule,
            "delta0": self.delta0,
            "q": self.q,
            "delta": self.delta,
            "eta": self.eta,
            "forced": self.forced,
            "forced_fraction": self.forced_fraction,
            "max_balls": self.max_balls,
            "samples": self.samples,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class MapTreeNode:
    path: Tuple[int, ...]
    ball: Ball
    generation: int
    image_center: Tuple[float, ...]
    log_accum_scale: float
    is_cantor_spine: bool

    @property
    def parent_path(self):
        return self.path[:-1]


@dataclass(frozen=True)
class Region:
    tag: str
    node: Optional[MapTreeNode]
    depth: int


class TailBound(NamedTuple):
    terms: List[float]
    partial_sums: List[float]
    summable: bool
    ratio: float


class _Descent(NamedTuple):
    tag: np.ndarray
    generation: np.ndarray
    center: np.ndarray
    radius: np.ndarray
    image: np.ndarray
    log_scale: np.ndarray
    spine: np.ndarray
    path: np.ndarray


class MapTree:
    def __init__(self, domain: BoxDomain, params: ScheduleParams, roots: Packing, template: Packing, depth: Optional[int] = None):
        r"""Finite depth packing tree encoding ``F_k``. Use ``build`` to make one.

        Args:
            domain (BoxDomain): the domain ``Omega``
            params (ScheduleParams): resolved schedule parameters
            roots (Packing): generation 1 packing of the domain
            template (Packing): packing of the unit ball used, up to similarity, inside every ``a B``
            depth (int, optional): evaluate ``F_depth`` instead of ``F_(params.depth)``
        """
        assert params.delta0 is not None, "params must be resolved against the domain"
        self.domain = domain
        self.params = params
        self.roots = roots
        self.template = template
        self.depth = params.depth if depth is None else int(depth)
        assert 1 <= self.depth <= params.depth, f"depth must be in [1, {params.depth}], got: {self.depth}"

        self.n = params.n
        self.a = params.a
        self.alpha = params.alpha
        self.variant = params.stretch_variant
        self._log_inv_a = -math.log(self.a)
        self.root_forced = roots.forced_count
        self.template_forced = template.forced_count

    def __repr__(self):
        return f"MapTree(depth={self.depth}, roots={len(self.roots)}, template={len(self.template)}, schedule={self.params.schedule})"

    def truncate(self, depth):
        """the same packings evaluated as ``F_depth``"""
        return MapTree(self.domain, self.params, self.roots, self.template, depth)

    def log_scale(self, generation):
        """``ln a^(-(k - 1) alpha)``: log scale of the stretches of generation ``k``"""
        return (generation - 1) * self.alpha * self._log_inv_a

    def inner_scale(self, generation):
        return math.exp(generation * self.alpha * self._log_inv_a)

    # ============= nodes =============== #

    def node(self, path) -> MapTreeNode:
        path = tuple(int(p) for p in path)
        assert 1 <= len(path) <= self.depth, f"path length must be in [1, {self.depth}], got: {len(path)}"
        j = path[0]
        center = self.roots.centers[j]
        radius = float(self.roots.radii[j])
        image = center.copy()
        spine = j < self.root_forced
        for k, c in enumerate(path[1:], start=1):
            new_center = center + self.a * radius * self.template.centers[c]
            image = image + self.inner_scale(k) * (new_center - center)
            center = new_center
            radius = self.a * radius * float(self.template.radii[c])
            spine = spine and c < self.template_forced
        g = len(path)
        return MapTreeNode(path, Ball(center, radius), g, tuple(image), self.log_scale(g), bool(spine))

    def children(self, node: MapTreeNode) -> List[MapTreeNode]:
        if node.generation >= self.depth:
            return []
        return [self.node(node.path + (c,)) for c in range(len(self.template))]

    def iter_nodes(self, generation=None, limit=None):
        """nodes breadth first, optionally only one generation, at most ``limit`` of them"""
        count = 0
        frontier = [(j,) for j in range(len(self.roots))]
        g = 1
        while frontier and g <= self.depth:
            if generation is None or generation == g:
                for path in frontier:
                    if limit is not None and count >= limit:
                        return
                    yield self.node(path)
                    count += 1
            if generation is not None and g >= generation:
                return
            frontier = [p + (c,) for p in frontier for c in range(len(self.template))]
            g += 1

    def node_count(self, generation):
        return len(self.roots) * len(self.template) ** (generation - 1)

    def stretch(self, node: MapTreeNode) -> RadialStretch:
        return RadialStretch(node.ball, node.image_center, node.log_accum_scale, self.variant)

    def inner_map(self, node: MapTreeNode) -> AffineMap:
        return AffineMap.scaling(node.ball.y, node.image_center, self.inner_scale(node.generation))

    def boundary_map(self, node: MapTreeNode) -> AffineMap:
        r"""``F`` on ``\partial B_(k,j)``: ``image_center + a^(-(k-1) alpha) (x - center)``"""
        return AffineMap.scaling(node.ball.y, node.image_center, math.exp(node.log_accum_scale))

    def spine_path(self, depth=None):
        """the default Cantor spine path: at every generation the forced ball nearest the parent center"""
        depth = self.depth if depth is None else depth
        if self.root_forced == 0 or (depth > 1 and self.template_forced == 0):
            return None
        # forced balls are stored nearest-center first
        return (0,) * depth

    # ============= evaluation =============== #

    def _check_domain(self, X):
        inside = self.domain.contains(X)
        if not np.all(inside):
            raise OutsideDomain(f"{int((~inside).sum())} points outside the domain", count=int((~inside).sum()))

    def _descend(self, X) -> _Descent:
        m = len(X)
        tag = np.zeros(m, dtype=np.int8)
        gen = np.zeros(m, dtype=np.int64)
        center = X.copy()
        radius = np.ones(m)
        image = X.copy()
        log_scale = np.zeros(m)
        spine = np.zeros(m, dtype=bool)
        path = np.full((m, self.depth), -1, dtype=np.int64)

        j = self.roots.index.containing(X)
        active = j >= 0
        idx = np.nonzero(active)[0]
        center[idx] = self.roots.centers[j[idx]]
        image[idx] = center[idx]
        radius[idx] = self.roots.radii[j[idx]]
        spine[idx] = j[idx] < self.root_forced
        path[idx, 0] = j[idx]
        gen[idx] = 1

        for k in range(1, self.depth + 1):
            idx = np.nonzero(active)[0]
            if not len(idx):
                break
            rho = np.linalg.norm(X[idx] - center[idx], axis=1)
            # the inner sphere counts as annulus
            ann = rho >= self.a * radius[idx]
            tag[idx[ann]] = ANNULUS
            active[idx[ann]] = False
            inner = idx[~ann]
            if k == self.depth:
                tag[inner] = INNER_AFFINE
                active[inner] = False
                break
            u = (X[inner] - center[inner]) / (self.a * radius[inner])[:, None]
            c = self.template.index.containing(u)
            has = c >= 0
            stop = inner[~has]
            tag[stop] = INNER_AFFINE
            active[stop] = False

            ch, cj = inner[has], c[has]
            new_center = center[ch] + (self.a * radius[ch])[:, None] * self.template.centers[cj]
            image[ch] = image[ch] + self.inner_scale(k) * (new_center - center[ch])
            center[ch] = new_center
            radius[ch] = self.a * radius[ch] * self.template.radii[cj]
            log_scale[ch] = self.log_scale(k + 1)
            spine[ch] &= cj < self.template_forced
            path[ch, k] = cj
            gen[ch] = k + 1
        return _Descent(tag, gen, center, radius, image, log_scale, spine, path)

    def _points(self, x):
        X = np.atleast_2d(as_points(x, self.n))
        self._check_domain(X)
        return X

    def classify(self, x):
        """region tags (``OUTSIDE_ALL``, ``ANNULUS``, ``INNER_AFFINE``) and effective generations of many points"""
        D = self._descend(self._points(x))
        return D.tag, D.generation

    def locate(self, x) -> Region:
        X = self._points(x)
        assert len(X) == 1, "locate takes a single point, use classify for many"
        D = self._descend(X)
        g = int(D.generation[0])
        if D.tag[0] == OUTSIDE_ALL:
            return Region(REGION_TAGS[OUTSIDE_ALL], None, 0)
        node = MapTreeNode(
            tuple(int(p) for p in D.path[0, :g]),
            Ball(D.center[0], D.radius[0]),
            g,
            tuple(D.image[0]),
            float(D.log_scale[0]),
            bool(D.spine[0]),
        )
        return Region(REGION_TAGS[int(D.tag[0])], node, g)

    def evaluate(self, x):
        """``F_depth`` at one point ``(n,)`` or many ``(m, n)``"""
        single = np.ndim(x) == 1
        X = self._points(x)
        D = self._descend(X)
        out = X.copy()
        d = X - D.center

        ann = D.tag == ANNULUS
        if np.any(ann):
            rho = np.linalg.norm(d[ann], axis=1)
            r = D.radius[ann]
            factor = np.where(rho == r, 1.0, (r / np.where(rho == r, r, rho)) ** self.alpha)
            out[ann] = D.image[ann] + (np.exp(D.log_scale[ann]) * factor)[:, None] * d[ann]

        inner = D.tag == INNER_AFFINE
        if np.any(inner):
            scale = np.exp(D.generation[inner] * self.alpha * self._log_inv_a)
            out[inner] = D.image[inner] + scale[:, None] * d[inner]
        return out[0] if single else out

    __call__ = evaluate

    def _on_interface(self, X, D, tol):
        d = np.linalg.norm(X - D.center, axis=1)
        hit = np.zeros(len(X), dtype=bool)
        inside = D.tag != OUTSIDE_ALL
        r = D.radius
        hit |= inside & (np.abs(d - r) <= tol * r)
        hit |= inside & (np.abs(d - self.a * r) <= tol * r)
        out = ~inside
        if np.any(out):
            g, _ = self.roots.index.query(X[out], cap=1.0)
            hit[out] |= np.abs(g) <= tol * self.domain.inradius
        inner = np.nonzero((D.tag == INNER_AFFINE) & (D.generation < self.depth))[0]
        if len(inner):
            u = (X[inner] - D.center[inner]) / (self.a * r[inner])[:, None]
            g, _ = self.template.index.query(u, cap=1.0)
            hit[inner] |= np.abs(g) <= tol
        return hit

    def gradient(self, x, strict=True, tol=1e-12):
        """``DF_depth``; ``strict`` raises ``OnInterface`` for points on a sphere of the construction"""
        single = np.ndim(x) == 1
        X = self._points(x)
        D = self._descend(X)
        if strict:
            hit = self._on_interface(X, D, tol)
            if np.any(hit):
                raise OnInterface(f"{int(hit.sum())} points lie on an interface sphere, resample", count=int(hit.sum()))
        G = np.broadcast_to(np.eye(self.n), (len(X), self.n, self.n)).copy()

        ann = np.nonzero(D.tag == ANNULUS)[0]
        if len(ann):
            d = X[ann] - D.center[ann]
            rho = np.linalg.norm(d, axis=1)
            u = d / rho[:, None]
            lam = np.exp(D.log_scale[ann]) * (D.radius[ann] / rho) ** self.alpha
            G[ann] = lam[:, None, None] * (np.eye(self.n) - self.alpha * u[:, :, None] * u[:, None, :])

        inner = np.nonzero(D.tag == INNER_AFFINE)[0]
        if len(inner):
            scale = np.exp(D.generation[inner] * self.alpha * self._log_inv_a)
            G[inner] = scale[:, None, None] * np.eye(self.n)
        return G[0] if single else G

    evaluate_gradient = gradient

    def on_interface(self, x, tol=1e-12):
        """mask of the points lying on a sphere of the construction, where ``DF`` jumps"""
        X = self._points(x)
        return self._on_interface(X, self._descend(X), tol)

    # ============= exact sums =============== #

    def radius_power_sums(self):
        """``S_k = sum of r^n`` over generation ``k`` nodes, ``k = 1..depth``"""
        S1 = float(np.sum(self.roots.radii ** self.n))
        T = float(np.sum(self.template.radii ** self.n))
        return [S1 * (self.a ** self.n * T) ** (k - 1) for k in range(1, self.depth + 1)]

    @property
    def template_coverage(self):
        """covered volume fraction of the template, ``T = sum w^n``"""
        return float(np.sum(self.template.radii ** self.n))

    @property
    def fill_reached(self):
        """both packings reached the fill tolerance ``eta``, otherwise growth ratios carry the template slack"""
        eta = self.params.eta
        return self.roots.uncovered_fraction_estimate <= eta and self.template.uncovered_fraction_estimate <= eta

    def residual_affine_measure(self):
        """measure of the points where ``F_depth`` is inner affine (exact, from volumes)"""
        V = ball_volume(self.n)
        S = self.radius_power_sums()
        slack = 1.0 - self.template_coverage
        total = sum(V * self.a ** self.n * s * slack for s in S[:-1])
        return total + V * self.a ** self.n * S[-1]

    def uniform_tail_bound(self) -> TailBound:
        terms = [self.params.tail_term(k) for k in range(1, self.depth + 1)]
        partial = list(np.cumsum(terms))
        if self.params.schedule == "SUMMABLE":
            return TailBound(terms, partial, True, self.params.q_value / self.a ** self.alpha)
        return TailBound(terms, partial, False, 1 + self.params.delta)

    # ============= serialization =============== #

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "domain": self.domain.to_dict(),
            "depth": self.depth,
            "roots": self.roots.to_dict(),
            "template": self.template.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            region_from_dict(d["domain"]),
            ScheduleParams.from_dict(d["params"]),
            Packing.from_dict(d["roots"]),
            Packing.from_dict(d["template"]),
            d["depth"],
        )

    def to_json(self, path=None):
        _j = dumps_json(self.to_dict())
        if path == None:
            return _j
        with open(path, "w") as f:
            f.write(_j + "\n")

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(load_json(path))

    def hash(self):
        return sha256(self.to_json())

    def node_table(self, max_nodes=100_000):
        """flat node rows breadth first with parent row indices"""
        rows, row_of = [], {}
        for node in self.iter_nodes(limit=max_nodes):
            parent = row_of.get(node.parent_path, -1)
            row_of[node.path] = len(rows)
            rows.append([len(rows), parent, node.generation, *node.ball.center, node.ball.radius, *node.image_center, node.log_accum_scale, node.is_cantor_spine])
        return rows

    def node_header(self):
        return (
            ["row", "parent", "generation"]
            + [f"x{i}" for i in range(self.n)]
            + ["radius"]
            + [f"image{i}" for i in range(self.n)]
            + ["log_accum_scale", "spine"]
        )

    def to_csv(self, path, max_nodes=100_000):
        write_csv(path, self.node_header(), self.node_table(max_nodes))


def uniform_tail_bound(tree: MapTree) -> TailBound:
    return tree.uniform_tail_bound()


def _forced_count(region, rho, fraction, what):
    capacity, _ = forced_capacity(region, rho)
    if capacity == 0:
        raise ScheduleInfeasible(f"no ball of radius {rho} fits the forced lattice of the {what}", radius=rho, capacity=0)
    return max(1, int(math.floor(fraction * capacity)))


def build(domain: BoxDomain, params: ScheduleParams) -> MapTree:
    r"""Build the packing tree of ``F_(params.depth)`` on ``domain``.

    Args:
        domain (BoxDomain): the domain ``Omega``
        params (ScheduleParams): schedule, ``delta0`` and ``q`` are resolved against the domain when missing
    """
    if domain.n != params.n:
        raise DimensionMismatch(f"domain lives in R^{domain.n}, params say n = {params.n}", expected=params.n, got=domain.n)
    params = params.resolved(domain)
    delta_1 = params.delta_k(1)
    if delta_1 > domain.inradius * (1 + REL_TOL):
        raise ScheduleInfeasible(f"delta_1 = {delta_1} exceeds the inradius {domain.inradius}", delta_1=delta_1, inradius=domain.inradius)
    root_seed, template_seed = (int(s) for s in np.random.SeedSequence(params.seed).generate_state(2))
    unit = Ball(np.zeros(params.n), 1.0)
    rho = params.template_delta_max
    knobs = dict(eta=params.eta, max_balls=params.max_balls, samples=params.samples)

    try:
        root_forced = template_forced = None
        if params.forced:
            root_forced = (_forced_count(domain, delta_1, params.forced_fraction, "domain"), delta_1)
            template_forced = (_forced_count(unit, rho, params.forced_fraction, "inner ball"), rho)
        logger.info(f"packing the domain, delta_1={delta_1:.6g}, eta={params.eta}")
        roots = pack(domain, delta_1, forced=root_forced, seed=root_seed, **knobs)
        logger.info(f"packing the template, relative radius cap={rho:.6g}")
        template = pack(unit, rho, forced=template_forced, seed=template_seed, **knobs)
    except InfeasibleForcedCount as e:
        raise ScheduleInfeasible(f"forced branching cannot fit: {e.message}", **e.details) from e

    tree = MapTree(domain, params, roots, template)
    logger.info(f"built {tree}: {len(roots)} roots, {len(template)} children per ball, T={tree.template_coverage:.4f}")
    return tree
