r"""
Analysis
========

Quantitative checks on built trees.

Energies
--------

The annulus energy of a node of generation ``k`` is the unit energy ``E(p)`` of a stretch with ``t = r = 1``
times ``t^p r^n`` with ``t = a^{-(k-1) alpha}``. All nodes of a generation share ``t`` so only the sum
``S_k`` of ``r^n`` over the generation matters, and the self-similar tree gives it in closed form. The
energy of generation ``k`` is therefore exact for every depth, and the ratio of consecutive generations is
``a^{n - p alpha} T`` where ``T`` is the covered fraction of the template. Dividing by ``T`` gives the
normalized ratio ``a^{n - p alpha}`` of an exact packing, which decides the criticality verdict. When the
packings stop short of ``eta`` (``MapTree.fill_reached`` is false) the raw ratios fall below
``a^{n - p alpha}`` by the factor ``T``, ``EnergyReport`` carries the flag and ``slack_predicted_ratio``:

.. code-block:: python

    from wqr.analysis import criticality_sweep

    rows = criticality_sweep(tree, [1.0, 1.5, 2.5])
    # [{'p': 1.0, 'verdict': 'bounded', ...}, ...]

Cantor sets
-----------

With forced branching every spine ball of radius ``delta_(k-1)`` carries ``N`` spine children of radius
``delta_k``. The similarity dimension ``ln N / ln(1 / rho_c)`` with ``rho_c = delta_k / delta_(k-1)`` is
compared with the asymptotic targets and with a box count of the deepest spine centers.

The spine children sit on a cubic lattice inside the unit ball, so ``N`` is the lattice capacity, about
``C0 (a / rho_c)^n`` with a packing constant ``C0 < 1``. The targets ``n / (K + 1)`` (PHI) and ``nK / (K + 1)``
(PSI) are only approached when ``ln(1 / rho_c)`` dwarfs ``ln(1 / C0)``, which takes a small ``a``: PHI with
``K = 2`` and ``a = 0.1`` has a spine of dimension about 0.60 against a target of 1, while ``K = 1`` at
``a = 0.01`` or PSI at ``a = 0.05`` land within 0.1 of their targets. ``DimensionReport.gap`` and ``C0`` make
the shortfall explicit.

Documentation
-------------
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from tqdm.auto import tqdm

from .construction import ANNULUS, INNER_AFFINE, OUTSIDE_ALL, MapTree, ScheduleInfeasible, ScheduleParams
from .geometry import Ball, ball_volume, forced_capacity, forced_grid, sample_ball_in_region
from .radial import RadialStretch, StretchVariant, annulus_energy_quadrature, singular_values
from .utils import WQRError, get_logger, show_progress, spawn_rngs

logger = get_logger(__name__)

VERDICT_MARGIN = 0.02
KP_THETA = 0.01
# spine centers materialised for box counting
MAX_SPINE_POINTS = 2_000_000


class InconclusiveNearCritical(WQRError):
    exit_code = 4


class ScheduleMismatch(WQRError):
    exit_code = 2


class PathNotSpine(WQRError):
    exit_code = 2


# ============= energy =============== #


@dataclass
class EnergyReport:
    p: float
    per_generation: List[dict]
    partial_sums: List[float]
    predicted_ratio: float
    critical_p: float
    raw_ratios: List[float]
    normalized_ratios: List[float]
    outside_energy: float
    template_coverage: float
    root_slack: float
    eta: Optional[float] = None
    fill_reached: bool = True

    @property
    def slack_predicted_ratio(self):
        """what the raw ratios equal for the packings actually built, ``a^(n - p alpha) T``"""
        return self.predicted_ratio * self.template_coverage

    @property
    def total(self):
        return self.partial_sums[-1]

    def to_dict(self):
        return {
            "p": self.p,
            "per_generation": self.per_generation,
            "partial_sums": self.partial_sums,
            "predicted_ratio": self.predicted_ratio,
            "critical_p": self.critical_p,
            "raw_ratios": self.raw_ratios,
            "normalized_ratios": self.normalized_ratios,
            "outside_energy": self.outside_energy,
            "template_coverage": self.template_coverage,
            "root_slack": self.root_slack,
            "slack_predicted_ratio": self.slack_predicted_ratio,
            "eta": self.eta,
            "fill_reached": self.fill_reached,
            "total": self.total,
        }

    def rows(self):
        ratios = [None] + self.raw_ratios
        for g, s, r in zip(self.per_generation, self.partial_sums, ratios):
            yield [self.p, g["k"], g["annulus"], g["affine"], g["annulus"] + g["affine"], s, "" if r is None else r]


def unit_annulus_energy(variant: StretchVariant, n, p, a):
    """annulus energy of the stretch with ``t = r = 1``"""
    unit = RadialStretch(Ball(np.zeros(n), 1.0), np.zeros(n), 0.0, variant)
    return unit.annulus_energy(p, a)


def total_energy(tree: MapTree, p: float) -> EnergyReport:
    """``int |DF|^p`` over the domain, generation by generation"""
    if p < 1:
        raise ValueError(f"p must be >= 1, got: {p}")
    n, a, alpha = tree.n, tree.a, tree.alpha
    V = ball_volume(n)
    S = tree.radius_power_sums()
    T = tree.template_coverage
    E = unit_annulus_energy(tree.variant, n, p, a)

    per_generation = []
    for k, s in enumerate(S, start=1):
        annulus = E * math.exp(p * tree.log_scale(k)) * s
        inner = math.exp(p * k * alpha * tree._log_inv_a) * V * a ** n * s
        # leaf inner balls are affine in full, the others only off their children
        affine = inner if k == tree.depth else inner * (1 - T)
        per_generation.append({"k": k, "annulus": annulus, "affine": affine, "nodes": tree.node_count(k)})

    root_slack = tree.roots.uncovered_fraction_exact
    outside = tree.domain.volume * root_slack
    partial = list(outside + np.cumsum([g["annulus"] + g["affine"] for g in per_generation]))
    raw = [per_generation[k]["annulus"] / per_generation[k - 1]["annulus"] for k in range(1, len(per_generation))]
    normalized = [r / T for r in raw] if T > 0 else []
    return EnergyReport(
        p=float(p),
        per_generation=per_generation,
        partial_sums=[float(x) for x in partial],
        predicted_ratio=a ** (n - p * alpha),
        critical_p=tree.params.critical_p,
        raw_ratios=raw,
        normalized_ratios=normalized,
        outside_energy=outside,
        template_coverage=T,
        root_slack=root_slack,
        eta=tree.params.eta,
        fill_reached=tree.fill_reached,
    )


def energy_oracle(tree: MapTree, p: float, max_nodes: int = 10_000):
    """the same integral summed node by node with quadrature annuli and explicit child volumes"""
    V = ball_volume(tree.n)
    if sum(tree.node_count(k) for k in range(1, tree.depth + 1)) > max_nodes:
        raise ValueError(f"tree has more than {max_nodes} nodes, the oracle is meant for small trees")
    total = tree.domain.volume - V * float(np.sum(tree.roots.radii ** tree.n))
    for node in tree.iter_nodes():
        total += annulus_energy_quadrature(tree.stretch(node), p, tree.a)
        inner = V * (tree.a * node.ball.radius) ** tree.n
        inner -= sum(V * c.ball.radius ** tree.n for c in tree.children(node))
        total += tree.inner_scale(node.generation) ** p * inner
    return total


def criticality_verdict(ratio, margin=VERDICT_MARGIN):
    if ratio < 1 - margin:
        return "bounded"
    if ratio > 1 + margin:
        return "divergent"
    return "inconclusive"


def criticality_sweep(tree: MapTree, p_values, margin: float = VERDICT_MARGIN, strict: bool = False):
    r"""Per-generation growth ratio of the energy and its verdict for every ``p``.

    Args:
        tree (MapTree): tree of depth at least 2
        p_values (List[float]): exponents in ``[1, n)``
        margin (float, optional): inconclusive band around 1
        strict (bool, optional): raise ``InconclusiveNearCritical`` on the first ratio inside the band, by
            default such rows are kept with verdict ``inconclusive``
    """
    p_values = list(p_values)
    if not p_values:
        raise ValueError("p_values is empty")
    if tree.depth < 2:
        raise ValueError("a growth ratio needs a tree of depth >= 2")
    if not tree.fill_reached:
        logger.warning(
            f"packings did not reach eta={tree.params.eta}, raw ratios carry the template coverage T={tree.template_coverage:.4f}"
        )
    rows = []
    for p in p_values:
        if not 1 <= p < tree.n:
            raise ValueError(f"p must be in [1, {tree.n}), got: {p}")
        report = total_energy(tree, p)
        ratio = float(np.exp(np.mean(np.log(report.normalized_ratios))))
        raw = float(np.exp(np.mean(np.log(report.raw_ratios))))
        verdict = criticality_verdict(ratio, margin)
        if verdict == "inconclusive":
            msg = f"growth ratio {ratio:.6f} at p={p} is within {margin} of 1 (critical p = {report.critical_p:.6g})"
            if strict:
                raise InconclusiveNearCritical(msg, p=p, ratio=ratio, margin=margin, critical_p=report.critical_p)
            logger.warning(msg)
        rows.append({"p": float(p), "ratio": ratio, "raw_ratio": raw, "verdict": verdict, "total": report.total, "fill_reached": report.fill_reached})
    return rows


# ============= cantor dimension =============== #


def similarity_dimension(N, ratio):
    """``ln N / ln(1 / ratio)``: dimension of the self-similar set with ``N`` pieces scaled by ``ratio``"""
    return math.log(N) / math.log(1 / ratio)


def box_count(points, size, shifts=4):
    """occupied boxes of side ``size``, the minimum over ``shifts`` diagonal grid offsets"""
    best = None
    for j in range(shifts):
        ids = np.floor(points / size + j / shifts).astype(np.int64)
        c = len(np.unique(ids, axis=0))
        best = c if best is None else min(best, c)
    return best


@dataclass
class DimensionReport:
    N: int
    rho_c: float
    analytic: float
    target: float
    C0: float
    variant: str
    K: float
    depth: Optional[int] = None
    scales: List[float] = field(default_factory=list)
    counts: List[int] = field(default_factory=list)
    empirical: Optional[float] = None
    intercept: Optional[float] = None
    r2: Optional[float] = None

    @property
    def gap(self):
        return self.target - self.analytic

    def to_dict(self):
        return {
            "N": self.N,
            "rho_c": self.rho_c,
            "analytic": self.analytic,
            "target": self.target,
            "gap": self.gap,
            "C0": self.C0,
            "variant": self.variant,
            "K": self.K,
            "depth": self.depth,
            "scales": self.scales,
            "counts": self.counts,
            "empirical": self.empirical,
            "intercept": self.intercept,
            "r2": self.r2,
        }

    def rows(self):
        for s, c in zip(self.scales, self.counts):
            yield [s, c]


def spine_centers(params: ScheduleParams, depth: int):
    """centers of the depth ``depth`` spine balls under a single root ``B(0, delta_1)``"""
    rel = params.template_delta_max
    capacity, _ = forced_capacity(Ball(np.zeros(params.n), 1.0), rel)
    N = max(1, int(math.floor(params.forced_fraction * capacity)))
    offsets = forced_grid(Ball(np.zeros(params.n), 1.0), rel, N)
    centers = np.zeros((1, params.n))
    r = params.delta_k(1)
    for _ in range(depth - 1):
        centers = (centers[:, None, :] + params.a * r * offsets[None, :, :]).reshape(-1, params.n)
        r *= params.ratio
    return centers


def cantor_dimension(params: ScheduleParams, depth: Optional[int] = None, empirical: bool = True) -> DimensionReport:
    r"""Dimension of the Cantor set carried by the forced spine.

    Args:
        params (ScheduleParams): CANTOR schedule with forced branching
        depth (int, optional): depth of the box count, defaults to ``params.depth``
        empirical (bool, optional): also box count the spine centers
    """
    if params.schedule != "CANTOR" or not params.forced:
        raise ScheduleMismatch(
            f"the spine dimension needs a forced CANTOR schedule, got {params.schedule} forced={params.forced}",
            schedule=params.schedule,
            forced=params.forced,
        )
    if params.delta0 is None:
        params = ScheduleParams.from_dict({**params.to_dict(), "delta0": 1.0})
    n = params.n
    rel = params.template_delta_max
    capacity, _ = forced_capacity(Ball(np.zeros(n), 1.0), rel)
    N = max(1, int(math.floor(params.forced_fraction * capacity)))
    if N < 2 or capacity == 0:
        raise ScheduleInfeasible(f"only {N} spine children fit, the spine is a single point", N=N, relative_radius=rel)
    rho_c = params.ratio
    report = DimensionReport(
        N=N,
        rho_c=rho_c,
        analytic=similarity_dimension(N, rho_c),
        target=params.stretch_variant.dimension_target(n),
        C0=N * rel ** n,
        variant=params.variant,
        K=params.K,
    )
    if not empirical:
        return report

    depth = params.depth if depth is None else depth
    while depth > 1 and N ** (depth - 1) > MAX_SPINE_POINTS:
        depth -= 1
    if depth < 3:
        logger.warning(f"{N} children per spine ball leave only depth {depth} for box counting, skipping the fit")
        return report
    points = spine_centers(params, depth)
    scales = [params.delta_k(k) for k in range(1, depth + 1)]
    counts = [box_count(points, s) for s in scales]
    x = np.log(1 / np.array(scales))
    y = np.log(np.array(counts, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = float(np.sum((y - y.mean()) ** 2))
    report.depth = depth
    report.scales = scales
    report.counts = counts
    report.empirical = float(slope)
    report.intercept = float(intercept)
    report.r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    return report


def kp_selector(n: int, p: float, theta: float = KP_THETA):
    """``(variant, K_p)`` whose spine dimension approaches ``n - p`` as ``theta`` goes to 0"""
    if not 1 < p < n:
        raise ValueError(f"p must be in (1, {n}), got: {p}")
    if p >= n / 2:
        return StretchVariant.phi(p / (n - p) * (1 + theta))
    return StretchVariant.psi((n / p - 1) / (1 + theta))


# ============= blow-up =============== #


@dataclass
class BlowupProbe:
    x: List[float]
    path: List[int]
    radii: List[float]
    averages: List[float]
    stderrs: List[float]
    slope: Optional[float]
    intercept: Optional[float]
    predicted_slope: float
    samples: int
    seed: int

    @property
    def increasing(self):
        return all(b > a for a, b in zip(self.averages, self.averages[1:]))

    def to_dict(self):
        return {
            "x": self.x,
            "path": self.path,
            "radii": self.radii,
            "averages": self.averages,
            "stderrs": self.stderrs,
            "slope": self.slope,
            "intercept": self.intercept,
            "predicted_slope": self.predicted_slope,
            "increasing": self.increasing,
            "samples": self.samples,
            "seed": self.seed,
        }

    def rows(self):
        for k, (r, m, s) in enumerate(zip(self.radii, self.averages, self.stderrs), start=1):
            yield [k, r, m, s]


def central_path(tree: MapTree):
    """the path through the root nearest the domain center and then the child nearest each parent center"""
    root = int(np.argmin(np.linalg.norm(tree.roots.centers - np.asarray(tree.domain.center), axis=1)))
    child = int(np.argmin(np.linalg.norm(tree.template.centers, axis=1))) if len(tree.template) else None
    if child is None:
        return (root,)
    return (root,) + (child,) * (tree.depth - 1)


def blowup_probe(tree: MapTree, path=None, radii_count=None, samples=10_000, seed=4, radii=None) -> BlowupProbe:
    r"""Averages of ``|F|`` over balls ``B(x, r_k)`` shrinking to the deepest ball of ``path``.

    Args:
        tree (MapTree): a CANTOR tree with forced branching, or any tree as a control
        path (tuple, optional): node path of length ``tree.depth``, defaults to the spine (CANTOR) or the
            central path
        radii_count (int, optional): use ``r_k = delta_k`` for ``k = 1..radii_count``, defaults to the depth
        samples (int, optional): Monte Carlo samples per radius
        seed (int, optional): seed, one spawned stream per radius
        radii (List[float], optional): explicit radii instead of ``delta_k``
    """
    cantor = tree.params.schedule == "CANTOR"
    if path is None:
        path = tree.spine_path() if cantor else central_path(tree)
        if path is None:
            raise PathNotSpine("the tree has no forced spine", forced=tree.params.forced)
    path = tuple(int(p) for p in path)
    if len(path) != tree.depth:
        raise PathNotSpine(f"path must descend to depth {tree.depth}, got length {len(path)}", path=list(path))
    if path[0] >= len(tree.roots) or any(c >= len(tree.template) for c in path[1:]):
        raise PathNotSpine(f"path {path} leaves the tree", path=list(path))
    node = tree.node(path)
    if cantor and not node.is_cantor_spine:
        raise PathNotSpine(f"path {path} leaves the forced spine", path=list(path))

    if radii is None:
        count = tree.depth if radii_count is None else int(radii_count)
        if count < 1:
            raise ValueError(f"radii_count must be >= 1, got: {count}")
        radii = [tree.params.delta_k(k) for k in range(1, count + 1)]
    radii = [float(r) for r in radii]
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly decreasing")

    x = node.ball.y
    averages, stderrs = [], []
    rngs = spawn_rngs(seed, len(radii))
    for r, rng in tqdm(list(zip(radii, rngs)), desc="blowup", disable=not show_progress(logger), leave=False):
        pts = sample_ball_in_region(Ball(x, r), tree.domain, rng, samples)
        v = np.linalg.norm(tree.evaluate(pts), axis=1)
        averages.append(float(v.mean()))
        stderrs.append(float(v.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0)

    slope = intercept = None
    if len(radii) > 1:
        k = np.arange(1, len(radii) + 1)
        slope, intercept = (float(c) for c in np.polyfit(k, np.log(averages), 1))
    predicted = math.log(1 + tree.params.delta) if cantor else 0.0
    logger.info(f"blowup along {path}: slope={slope} predicted={predicted:.6f}")
    return BlowupProbe(list(x), list(path), radii, averages, stderrs, slope, intercept, predicted, samples, seed)


# ============= audits =============== #


def distortion_audit(tree: MapTree, samples: int = 10_000, seed: int = 4):
    """Singular values of ``DF`` on uniform samples of the domain: the largest observed distortion, the
    share of samples per region class and the measure of ``det DF > 0`` against the exact inner affine
    residual."""
    rng = spawn_rngs(seed, 1)[0]
    X = tree.domain.sample(rng, samples)
    tags, _ = tree.classify(X)
    G = tree.gradient(X, strict=False)
    sv = singular_values(G)
    ratio = sv[:, 0] / sv[:, -1]
    det = np.linalg.det(G)
    vol = tree.domain.volume
    return {
        "samples": samples,
        "seed": seed,
        "max_distortion": float(ratio.max()),
        "max_annulus_distortion": float(ratio[tags == ANNULUS].max()) if np.any(tags == ANNULUS) else None,
        "K": tree.params.K,
        "fractions": {
            "ANNULUS": float(np.mean(tags == ANNULUS)),
            "INNER_AFFINE": float(np.mean(tags == INNER_AFFINE)),
            "OUTSIDE_ALL": float(np.mean(tags == OUTSIDE_ALL)),
        },
        "positive_det_fraction": float(np.mean(det > 0)),
        "negative_det_fraction": float(np.mean(det < 0)),
        "exact_positive_det_fraction": (tree.residual_affine_measure() + vol * tree.roots.uncovered_fraction_exact) / vol,
    }


def boundedness(tree: MapTree, samples: int = 10_000, seed: int = 4):
    """Monte Carlo ``sup |F|`` against ``sup |x| + sum a^(-k alpha) delta_k``; ``sup |x|`` is the diameter
    when the domain has a corner at the origin"""
    rng = spawn_rngs(seed, 1)[0]
    X = tree.domain.sample(rng, samples)
    sup = float(np.linalg.norm(tree.evaluate(X), axis=1).max())
    tail = tree.uniform_tail_bound()
    reach = float(np.linalg.norm(np.maximum(np.abs(tree.domain.lo), np.abs(tree.domain.hi))))
    bound = reach + tail.partial_sums[-1]
    return {
        "sup_abs": sup,
        "bound": bound,
        "diameter": tree.domain.diameter,
        "within": sup <= bound,
        "samples": samples,
        "seed": seed,
    }
