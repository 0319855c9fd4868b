r"""
Degree
======

Orientation of the constructions seen two ways. On the boundary sphere of every node the map is a positive
multiple of the identity plus a translation, so its degree is ``+1``; inside, every annulus point has a
negative Jacobian. ``numeric_degree`` computes the degree of a map on a sphere in ``R^3`` independently of
the sign rule, summing the signed solid angles that the image triangles of a subdivided icosahedron
subtend at the reference point.

The distributional Jacobian

.. math::

    \langle \mathcal{J}_f, \varphi \rangle = -\frac{1}{n} \int (\mathrm{adj}\, Df \cdot f) \cdot D\varphi \, dx

agrees with ``int det(Df) phi`` for Lipschitz maps. ``distributional_pairing`` estimates both by Monte Carlo
against a product bump. A single radial stretch is not Lipschitz at its center; there the pairing is taken
off a small ball around the center and the gap equals a surface integral, computed by ``boundary_flux``.

Documentation
-------------
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, List, Optional, Union

import numpy as np
from tqdm.auto import tqdm

from .construction import ANNULUS, MapTree, OutsideDomain
from .geometry import DimensionMismatch, as_points
from .radial import AffineMap, RadialStretch, adjugate, autograd_jacobian, finite_difference_jacobian
from .utils import WQRError, get_logger, show_progress, spawn_rngs

logger = get_logger(__name__)

SOLID_ANGLE_TOL = 1e-12


class DegenerateImage(WQRError):
    exit_code = 4


# ============= triangulated sphere =============== #


@lru_cache(maxsize=8)
def _icosphere(level):
    if level < 0:
        raise ValueError(f"level must be >= 0, got: {level}")
    g = (1 + math.sqrt(5)) / 2
    verts = [
        (-1, g, 0), (1, g, 0), (-1, -g, 0), (1, -g, 0),
        (0, -1, g), (0, 1, g), (0, -1, -g), (0, 1, -g),
        (g, 0, -1), (g, 0, 1), (-g, 0, -1), (-g, 0, 1),
    ]  # fmt: skip
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]  # fmt: skip
    V = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]

    for _ in range(level):
        cache = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = V[i] + V[j]
                V.append(m / np.linalg.norm(m))
                cache[key] = len(V) - 1
            return cache[key]

        new = []
        for i, j, k in faces:
            a, b, c = midpoint(i, j), midpoint(j, k), midpoint(k, i)
            new += [(i, a, c), (j, b, a), (k, c, b), (a, b, c)]
        faces = new

    V = np.array(V)
    F = np.array(faces, dtype=np.int64)
    # outward: (v1 - v0) x (v2 - v0) points away from the origin
    normal = np.cross(V[F[:, 1]] - V[F[:, 0]], V[F[:, 2]] - V[F[:, 0]])
    flip = np.einsum("ij,ij->i", normal, V[F[:, 0]]) < 0
    F[flip] = F[flip][:, ::-1]
    return V, F


def icosphere(level: int = 4):
    """vertices on the unit sphere and outward oriented faces of the ``level`` times subdivided icosahedron"""
    V, F = _icosphere(level)
    return V.copy(), F.copy()


def solid_angles(A, B, C):
    """signed solid angles of the triangles ``(A, B, C)`` seen from the origin"""
    a, b, c = (np.linalg.norm(v, axis=1) for v in (A, B, C))
    num = np.einsum("ij,ij->i", A, np.cross(B, C))
    den = a * b * c + np.einsum("ij,ij->i", A, B) * c + np.einsum("ij,ij->i", A, C) * b + np.einsum("ij,ij->i", B, C) * a
    return 2 * np.arctan2(num, den)


def numeric_degree(fn: Callable, level: int = 4, center=(0.0, 0.0, 0.0), radius: float = 1.0, reference=None) -> int:
    r"""Degree of ``fn`` on the sphere ``|x - center| = radius`` around ``reference``.

    Args:
        fn (Callable): maps ``(m, 3)`` points to ``(m, 3)`` images
        level (int, optional): icosahedral subdivision level
        center (tuple, optional): sphere center
        radius (float, optional): sphere radius
        reference (tuple, optional): the point the degree is counted around, defaults to ``fn(center)``
    """
    center = np.asarray(center, dtype=float)
    if center.shape != (3,):
        raise DimensionMismatch(f"numeric degree is implemented for spheres in R^3, got center {center.shape}", expected=3)
    V, F = icosphere(level)
    W = np.asarray(fn(center + radius * V), dtype=float)
    as_points(W, 3)
    ref = np.asarray(fn(center[None, :])[0] if reference is None else reference, dtype=float)
    R = W - ref
    if np.any(np.linalg.norm(R, axis=1) <= SOLID_ANGLE_TOL * max(1.0, float(np.abs(W).max()))):
        raise DegenerateImage("the image of the sphere passes through the reference point", reference=list(ref))
    omega = solid_angles(R[F[:, 0]], R[F[:, 1]], R[F[:, 2]])
    if np.any(np.abs(omega) < SOLID_ANGLE_TOL):
        raise DegenerateImage(
            f"{int((np.abs(omega) < SOLID_ANGLE_TOL).sum())} image triangles subtend a vanishing solid angle",
            count=int((np.abs(omega) < SOLID_ANGLE_TOL).sum()),
        )
    total = float(omega.sum()) / (4 * math.pi)
    degree = int(round(total))
    if abs(total - degree) > 0.1:
        raise DegenerateImage(f"winding sum {total:.4f} is not close to an integer, refine the triangulation", winding=total)
    return degree


# ============= audit =============== #


@dataclass
class DegreeReport:
    nodes: List[dict] = field(default_factory=list)
    samples_per_node: int = 0
    seed: int = 0
    level: int = 4

    @property
    def det_negative(self):
        return sum(n["det_negative"] for n in self.nodes)

    @property
    def det_positive(self):
        return sum(n["det_positive"] for n in self.nodes)

    @property
    def interface(self):
        return sum(n["interface"] for n in self.nodes)

    @property
    def annulus_samples(self):
        return sum(n["annulus"] for n in self.nodes)

    @property
    def annulus_negative_fraction(self):
        total = self.annulus_samples
        return sum(n["annulus_negative"] for n in self.nodes) / total if total else float("nan")

    @property
    def degrees(self):
        return sorted({n["degree"] for n in self.nodes})

    @property
    def confirmed(self):
        numeric = all(n["numeric_degree"] in (None, n["degree"]) for n in self.nodes)
        return bool(self.nodes) and self.degrees == [1] and numeric and self.annulus_negative_fraction == 1.0

    @property
    def verdict(self):
        head = "weakly-QR paradox confirmed" if self.confirmed else "weakly-QR paradox NOT confirmed"
        degrees = ",".join(f"{d:+d}" for d in self.degrees)
        return f"{head}: degree={degrees}, det<0 fraction={self.annulus_negative_fraction:.6f}"

    def to_dict(self):
        return {
            "nodes": self.nodes,
            "samples_per_node": self.samples_per_node,
            "seed": self.seed,
            "level": self.level,
            "det_negative": self.det_negative,
            "det_positive": self.det_positive,
            "interface": self.interface,
            "annulus_samples": self.annulus_samples,
            "annulus_negative_fraction": self.annulus_negative_fraction,
            "confirmed": self.confirmed,
            "verdict": self.verdict,
        }

    def rows(self):
        for n in self.nodes:
            yield [
                "/".join(str(p) for p in n["path"]),
                n["generation"],
                n["degree"],
                "" if n["numeric_degree"] is None else n["numeric_degree"],
                n["det_negative"],
                n["det_positive"],
                n["interface"],
                n["annulus"],
                n["annulus_negative"],
            ]


def _random_path(tree: MapTree, rng):
    g = int(rng.integers(1, tree.depth + 1))
    path = [int(rng.integers(len(tree.roots)))]
    path += [int(c) for c in rng.integers(len(tree.template), size=g - 1)] if len(tree.template) else []
    return tuple(path)


def degree_audit(
    tree: MapTree,
    nodes: int = 100,
    samples_per_node: int = 100,
    seed: int = 4,
    level: int = 4,
    numeric: bool = True,
    cross_check: Optional[str] = "autograd",
) -> DegreeReport:
    r"""Boundary degree and interior Jacobian signs on randomly sampled nodes.

    Args:
        tree (MapTree): the tree to audit
        nodes (int, optional): number of nodes, each drawn with a random generation and path
        samples_per_node (int, optional): uniform interior samples per node ball
        seed (int, optional): seed, one spawned stream per node
        level (int, optional): icosahedral level of ``numeric_degree``
        numeric (bool, optional): compute ``numeric_degree`` next to the sign rule (only in ``R^3``)
        cross_check (str, optional): ``"autograd"`` or ``"fd"`` checks the Jacobian of the annulus samples
            of the node itself against an independent derivative, ``None`` skips it
    """
    if nodes < 1 or samples_per_node < 1:
        raise ValueError(f"sample sizes must be >= 1, got nodes={nodes} samples_per_node={samples_per_node}")
    if cross_check not in ("autograd", "fd", None):
        raise ValueError(f"cross_check should be one of 'autograd', 'fd' or None got: {cross_check}")
    if not len(tree.roots):
        raise ValueError("the tree has no balls to audit")
    numeric = numeric and tree.n == 3
    report = DegreeReport(samples_per_node=samples_per_node, seed=seed, level=level)
    rngs = spawn_rngs(seed, nodes)
    for rng in tqdm(rngs, desc="degree audit", disable=not show_progress(logger), leave=False):
        node = tree.node(_random_path(tree, rng))
        boundary = tree.boundary_map(node)
        degree = int(np.sign(boundary.det))
        numeric_value = None
        if numeric:
            numeric_value = numeric_degree(tree.evaluate, level, node.ball.y, node.ball.radius, node.image_center)

        X = node.ball.sample(rng, samples_per_node)
        X = X[tree.domain.contains(X)]
        tags, gens = tree.classify(X)
        hit = tree.on_interface(X)
        det = np.linalg.det(tree.gradient(X, strict=False))
        clean = ~hit
        annulus = clean & (tags == ANNULUS)
        entry = {
            "path": list(node.path),
            "generation": node.generation,
            "radius": node.ball.radius,
            "degree": degree,
            "numeric_degree": numeric_value,
            "det_negative": int(np.sum(clean & (det < 0))),
            "det_positive": int(np.sum(clean & (det > 0))),
            "interface": int(hit.sum()),
            "annulus": int(annulus.sum()),
            "annulus_negative": int(np.sum(annulus & (det < 0))),
            "max_jacobian_error": None,
        }

        own = annulus & (gens == node.generation) & node.ball.contains(X)
        if cross_check is not None and np.any(own):
            stretch = tree.stretch(node)
            P = X[own]
            analytic = tree.gradient(P, strict=False)
            if cross_check == "autograd":
                other = autograd_jacobian(stretch, P)
            else:
                other = finite_difference_jacobian(stretch, P, 1e-7 * node.ball.radius)
                # the sign of the numeric determinant is the independent witness
                entry["fd_det_negative"] = bool(np.all(np.linalg.det(other) < 0))
            scale = np.linalg.norm(analytic, axis=(1, 2))
            entry["max_jacobian_error"] = float(np.max(np.linalg.norm(analytic - other, axis=(1, 2)) / scale))
        report.nodes.append(entry)

    logger.info(report.verdict)
    return report


# ============= distributional jacobian =============== #


@dataclass(frozen=True)
class Bump:
    """``phi(x) = prod_i psi((x_i - c_i) / w)`` with ``psi(s) = exp(-1 / (1 - s^2))`` on ``|s| < 1``"""

    center: tuple
    width: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.ravel(self.center)))
        object.__setattr__(self, "width", float(self.width))
        if not self.width > 0:
            raise ValueError(f"width must be positive, got: {self.width}")

    @property
    def n(self):
        return len(self.center)

    @property
    def c(self):
        return np.array(self.center)

    @property
    def support_volume(self):
        return (2 * self.width) ** self.n

    def _s(self, x):
        return (as_points(x, self.n) - self.c) / self.width

    def __call__(self, x):
        s = self._s(x)
        inside = np.all(np.abs(s) < 1, axis=-1)
        q = np.where(np.abs(s) < 1, 1 - s ** 2, 1.0)
        return np.where(inside, np.exp(-np.sum(1 / q, axis=-1)), 0.0)

    def gradient(self, x):
        s = self._s(x)
        phi = self(x)
        q = np.where(np.abs(s) < 1, 1 - s ** 2, 1.0)
        return phi[..., None] * (-2 * s / q ** 2) / self.width

    def sample(self, rng, count):
        return self.c + self.width * (2 * rng.random((count, self.n)) - 1)

    def inside(self, region):
        corners = np.stack([self.c - self.width, self.c + self.width])
        return bool(np.all(region.contains(corners, tol=0.0)))


Mapping = Union[MapTree, RadialStretch, AffineMap]


def _fields(f: Mapping, X):
    # values, Jacobians and adjugates
    if isinstance(f, MapTree):
        G = f.gradient(X, strict=False)
        return f.evaluate(X), G, adjugate(G)
    if isinstance(f, RadialStretch):
        return f(X), f.jacobian(X), f.adjugate(X)
    G = f.gradient(X)
    return f(X), G, adjugate(G)


def distributional_pairing(f: Mapping, phi: Bump, samples: int = 100_000, seed: int = 4, excise: Optional[float] = None):
    r"""Monte Carlo estimates of ``<J_f, phi>`` and of ``int det(Df) phi``.

    Args:
        f (Mapping): a ``MapTree``, a ``RadialStretch`` or an ``AffineMap``
        phi (Bump): the test function
        samples (int, optional): uniform samples of the support cube of ``phi``
        seed (int, optional): seed
        excise (float, optional): radius of the ball around the center of a ``RadialStretch`` left out of
            both integrals, defaults to half the stretch radius

    Returns:
        dict with ``pairing``, ``ac_part``, ``gap`` and their standard errors
    """
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got: {samples}")
    if isinstance(f, MapTree) and not phi.inside(f.domain):
        raise OutsideDomain(f"support of the bump {phi} leaves the domain", center=list(phi.center), width=phi.width)
    n = phi.n
    rng = spawn_rngs(seed, 1)[0]
    X = phi.sample(rng, samples)
    keep = np.ones(samples, dtype=bool)
    if isinstance(f, RadialStretch):
        excise = 0.5 * f.ball.radius if excise is None else excise
        keep = np.linalg.norm(X - f.ball.y, axis=1) >= excise

    pair = np.zeros(samples)
    ac = np.zeros(samples)
    values, G, adj = _fields(f, X[keep])
    V = np.einsum("mij,mj->mi", adj, values)
    pair[keep] = -np.einsum("mi,mi->m", V, phi.gradient(X[keep])) / n
    ac[keep] = np.linalg.det(G) * phi(X[keep])

    vol = phi.support_volume
    diff = pair - ac

    def _stats(v):
        err = float(v.std(ddof=1)) * vol / math.sqrt(samples) if samples > 1 else 0.0
        return float(v.mean()) * vol, err

    pairing, pairing_err = _stats(pair)
    ac_part, ac_err = _stats(ac)
    gap, gap_err = _stats(diff)
    return {
        "pairing": pairing,
        "pairing_stderr": pairing_err,
        "ac_part": ac_part,
        "ac_stderr": ac_err,
        "gap": gap,
        "stderr": gap_err,
        "excise": excise,
        "samples": samples,
        "seed": seed,
    }


def boundary_flux(stretch: RadialStretch, phi: Bump, excise: Optional[float] = None, level: int = 5):
    r"""``-(1/n) \oint phi (adj Df f) . nu dS`` over the sphere ``|x - y| = excise``, ``nu`` pointing to the
    center, by icosphere quadrature: one node per face at the projected centroid weighted by the face's
    solid angle"""
    if stretch.n != 3:
        raise DimensionMismatch(f"surface quadrature is implemented in R^3, got n = {stretch.n}", expected=3, got=stretch.n)
    eps = 0.5 * stretch.ball.radius if excise is None else excise
    V, F = icosphere(level)
    weights = solid_angles(V[F[:, 0]], V[F[:, 1]], V[F[:, 2]]) * eps ** 2
    u = V[F].mean(axis=1)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    X = stretch.ball.y + eps * u
    flux = np.einsum("mij,mj->mi", stretch.adjugate(X), stretch(X))
    integrand = phi(X) * np.einsum("mi,mi->m", flux, -u)
    return float(-(integrand * weights).sum() / 3)
