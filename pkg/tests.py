import os
import math
import unittest
import tempfile
from functools import lru_cache

import numpy as np
from PIL import Image

from wqr.utils import set_seed, spawn_rngs, join, load_json, read_csv, dump_json
from wqr.geometry import (
    Ball,
    BoxDomain,
    BallIndex,
    BudgetExceeded,
    DimensionMismatch,
    InfeasibleForcedCount,
    Packing,
    ball_volume,
    forced_capacity,
    forced_grid,
    pack,
    uncovered_fraction,
)
from wqr.radial import (
    AffineMap,
    RadialStretch,
    SingularPoint,
    StretchVariant,
    annulus_energy_quadrature,
    autograd_jacobian,
    finite_difference_jacobian,
    singular_values,
)
from wqr.construction import (
    ANNULUS,
    INNER_AFFINE,
    OUTSIDE_ALL,
    MapTree,
    OnInterface,
    OutsideDomain,
    ScheduleInfeasible,
    ScheduleParams,
    build,
)
from wqr.analysis import (
    InconclusiveNearCritical,
    PathNotSpine,
    ScheduleMismatch,
    blowup_probe,
    boundedness,
    box_count,
    cantor_dimension,
    criticality_sweep,
    distortion_audit,
    energy_oracle,
    kp_selector,
    similarity_dimension,
    total_energy,
)
from wqr.degree import (
    Bump,
    DegenerateImage,
    boundary_flux,
    degree_audit,
    distributional_pairing,
    icosphere,
    numeric_degree,
)
from wqr.configs import ConfigError, ExperimentConfig
from wqr.cli import Experiment
from wqr.__main__ import main


set_seed(4)


# ============= shared trees =============== #


@lru_cache()
def summable_tree():
    # depth 6 on the unit cube with loose packings
    return build(BoxDomain.unit_cube(3), ScheduleParams(depth=6, eta=0.5, samples=5000, max_balls=20_000))


@lru_cache()
def default_tree():
    # what a config without keys builds: depth 6, eta 0.05
    config = ExperimentConfig()
    return build(config.domain(), config.schedule_params())


@lru_cache()
def small_tree():
    # delta_1 = 0.5, a handful of roots, depth 2
    delta0 = 0.5 / (0.9 * 0.5 ** 1.5)
    return build(BoxDomain.unit_cube(3), ScheduleParams(depth=2, delta0=delta0, eta=0.45, samples=5000, max_balls=20_000))


@lru_cache()
def cantor_tree():
    # delta_1 = 1 on [-1, 1]^3: a single forced root at the origin and one forced child per spine ball
    domain = BoxDomain([-1.0] * 3, [1.0] * 3)
    params = ScheduleParams(
        K=2.0,
        a=0.25,
        depth=6,
        schedule="CANTOR",
        delta=0.2,
        delta0=1 / (1.2 * 0.25 ** 1.5),
        forced=True,
        eta=0.5,
        samples=20_000,
        max_balls=20_000,
    )
    return build(domain, params)


def single_ball_tree(K=1.0, a=0.5):
    """one root ``B(0, 1)`` in ``[-1, 1]^3`` and an empty template, built by hand"""
    domain = BoxDomain([-1.0] * 3, [1.0] * 3)
    params = ScheduleParams(K=K, a=a, depth=1, delta0=1.0).resolved(domain)
    roots = Packing(domain, np.zeros((1, 3)), [1.0], 0.0, 0.0, 1.0)
    template = Packing(Ball(np.zeros(3), 1.0), np.zeros((0, 3)), np.zeros(0), 1.0, 0.0, params.template_delta_max)
    return MapTree(domain, params, roots, template)


def random_unit(rng, count, n=3):
    g = rng.standard_normal((count, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def random_path(tree, rng, min_generation=1):
    g = int(rng.integers(min_generation, tree.depth + 1))
    return (int(rng.integers(len(tree.roots))),) + tuple(int(c) for c in rng.integers(len(tree.template), size=g - 1))


# ============= tests =============== #


class TestGeometry(unittest.TestCase):
    def test_ball(self):
        b = Ball((1.0, 2.0, 3.0), 2.0)
        self.assertEqual(b.n, 3)
        self.assertAlmostEqual(ball_volume(3), 4 * math.pi / 3)
        self.assertAlmostEqual(b.volume, 32 * math.pi / 3)
        self.assertTrue(b.contains(np.array([1.0, 2.0, 5.0])))
        self.assertFalse(b.contains(np.array([1.0, 2.0, 5.1])))
        self.assertEqual(b.scaled(0.5).radius, 1.0)
        with self.assertRaises(ValueError):
            Ball((0.0, 0.0, 0.0), 0.0)
        with self.assertRaises(DimensionMismatch):
            b.contains(np.zeros(4))

    def test_box(self):
        box = BoxDomain([-1.0, 0.0, 0.0], [1.0, 4.0, 2.0])
        self.assertEqual(box.center, (0.0, 2.0, 1.0))
        self.assertEqual(box.inradius, 1.0)
        self.assertEqual(box.volume, 16.0)
        with self.assertRaises(ValueError):
            BoxDomain([0.0, 0.0, 0.0], [1.0, 0.0, 1.0])

    def test_index_matches_brute_force(self):
        rng = np.random.default_rng(4)
        centers = rng.random((200, 3))
        radii = np.exp(rng.uniform(math.log(0.005), math.log(0.2), 200))
        points = rng.random((500, 3)) * 1.4 - 0.2
        index = BallIndex(centers, radii)
        gap, idx = index.query(points)
        brute = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2) - radii[None, :]
        self.assertTrue(np.allclose(gap, brute.min(axis=1), rtol=0, atol=1e-12))
        self.assertTrue(np.all(idx == brute.argmin(axis=1)))

        inside = index.containing(points)
        self.assertTrue(np.all((inside >= 0) == (brute.min(axis=1) <= 0)))

    def test_pack(self):
        region = BoxDomain.unit_cube(3)
        packing = pack(region, 0.2, 0.3, seed=4, samples=5000)
        self.assertTrue(packing.validate())
        self.assertIsNone(packing.exhausted)
        self.assertLessEqual(packing.uncovered_fraction_estimate, 0.3)
        self.assertLessEqual(packing.radii.max(), 0.2)
        # the statistical and the volume estimates agree
        self.assertLess(abs(packing.uncovered_fraction_estimate - packing.uncovered_fraction_exact), 0.05)

        again = pack(region, 0.2, 0.3, seed=4, samples=5000)
        self.assertTrue(np.array_equal(packing.radii, again.radii))

        estimate, stderr = uncovered_fraction(region, packing, samples=5000, seed=1)
        self.assertLess(abs(estimate - packing.uncovered_fraction_exact), 0.05)
        self.assertGreater(stderr, 0)

    def test_pack_ball(self):
        packing = pack(Ball(np.zeros(3), 1.0), 0.5, 0.4, seed=4, samples=5000)
        self.assertTrue(packing.validate())
        self.assertLessEqual(packing.uncovered_fraction_estimate, 0.4)

    def test_forced(self):
        rho = 1.0001 * 0.1 ** 0.5
        unit = Ball(np.zeros(3), 1.0)
        self.assertEqual(forced_capacity(unit, rho), (8, 0.5))
        grid = forced_grid(unit, rho)
        self.assertTrue(np.allclose(np.abs(grid), rho))
        with self.assertRaises(InfeasibleForcedCount):
            forced_grid(unit, rho, 9)

        packing = pack(unit, rho, 0.5, forced=(8, rho), seed=4, samples=5000)
        self.assertEqual(packing.forced_count, 8)
        self.assertTrue(np.all(packing.radii[:8] == rho))
        self.assertTrue(packing.validate())

    def test_budget(self):
        region = BoxDomain.unit_cube(3)
        packing = pack(region, 0.1, 0.01, max_balls=5, samples=2000)
        self.assertEqual(packing.exhausted, "max_balls")
        self.assertEqual(len(packing), 5)
        with self.assertRaises(BudgetExceeded) as ctx:
            pack(region, 0.1, 0.01, max_balls=5, samples=2000, strict=True)
        self.assertEqual(len(ctx.exception.packing), 5)
        self.assertEqual(ctx.exception.exit_code, 3)

    def test_pack_concentric(self):
        packing = pack(Ball(np.zeros(3), 1.0), 0.5, 0.5, seed=0, samples=20_000)
        self.assertTrue(packing.validate())
        self.assertLessEqual(packing.uncovered_fraction_estimate, 0.5)
        # the only site of the first lattice is the center
        self.assertTrue(np.array_equal(packing.centers[0], np.zeros(3)))
        self.assertEqual(packing.radii[0], 0.5)
        self.assertGreater(len(packing), 1)

    def test_pack_tries_every_free_site(self):
        # 100 samples land in fewer than 125 cells, the first level still fills all of them
        packing = pack(BoxDomain.unit_cube(3), 0.1, 0.7, seed=4, samples=100)
        self.assertEqual(len(packing), 125)
        self.assertTrue(np.allclose(packing.radii, 0.1, rtol=0, atol=1e-12))
        self.assertAlmostEqual(packing.uncovered_fraction_exact, 1 - math.pi / 6)
        self.assertTrue(packing.validate())

    def test_pack_is_monotone_in_eta(self):
        region = BoxDomain.unit_cube(3)
        coarse = pack(region, 0.2, 0.45, seed=3, samples=5000)
        fine = pack(region, 0.2, 0.3, seed=3, samples=5000)
        self.assertGreaterEqual(len(fine), len(coarse))
        self.assertTrue(np.array_equal(fine.centers[: len(coarse)], coarse.centers))
        self.assertTrue(np.array_equal(fine.radii[: len(coarse)], coarse.radii))
        self.assertLessEqual(fine.uncovered_fraction_estimate, coarse.uncovered_fraction_estimate)
        self.assertLessEqual(fine.uncovered_fraction_exact, coarse.uncovered_fraction_exact)

    def test_pack_fine_cube(self):
        region = BoxDomain.unit_cube(3)
        packing = pack(region, 0.1, 0.05, seed=1)
        print("fine cube:", len(packing), packing.uncovered_fraction_estimate, packing.exhausted)
        self.assertGreater(packing.uncovered_fraction_stderr, 0)
        self.assertLessEqual(packing.radii.max(), 0.1)
        if packing.exhausted is None:
            self.assertLessEqual(packing.uncovered_fraction_estimate, 0.05)
        else:
            self.assertIn(packing.exhausted, ("max_balls", "min_radius"))
            self.assertGreater(packing.uncovered_fraction_estimate, 0.05)
        # an independent resampling agrees with the exact volume
        estimate, stderr = uncovered_fraction(region, packing, samples=1_000_000, seed=7)
        self.assertLess(abs(estimate - packing.uncovered_fraction_exact), 4 * stderr + 1e-12)
        self.assertLess(abs(estimate - packing.uncovered_fraction_estimate), 4 * (stderr + packing.uncovered_fraction_stderr))

    def test_packing_csv(self):
        packing = pack(BoxDomain.unit_cube(3), 0.1, 0.7, seed=4, samples=100)
        with tempfile.TemporaryDirectory() as d:
            packing.to_csv(join(d, "packing.csv"), generation=2)
            header, rows = read_csv(join(d, "packing.csv"))
        self.assertEqual(header, ["generation", "index", "x0", "x1", "x2", "radius"])
        self.assertEqual(len(rows), len(packing))
        self.assertEqual(rows[0][0], "2")
        self.assertTrue(np.array_equal(np.array([r[2:5] for r in rows], dtype=float), packing.centers))
        self.assertTrue(np.array_equal(np.array([r[5] for r in rows], dtype=float), packing.radii))

    def test_uncovered_fraction(self):
        region = BoxDomain.unit_cube(3)
        self.assertEqual(uncovered_fraction(region, [], samples=100)[0], 1.0)
        with self.assertRaises(DimensionMismatch):
            uncovered_fraction(region, [Ball(np.zeros(4), 0.1)], samples=100)


class TestRadial(unittest.TestCase):
    def test_distortion_and_orientation(self):
        rng = np.random.default_rng(4)
        for i in range(1000):
            variant = StretchVariant("PHI" if i % 2 else "PSI", rng.uniform(1, 10))
            r = rng.uniform(0.1, 10)
            a = rng.uniform(0.05, 0.95)
            stretch = RadialStretch(Ball(rng.standard_normal(3), r), rng.standard_normal(3), rng.uniform(-3, 3), variant)
            rho = rng.uniform(a * r, r)
            x = stretch.ball.y + rho * random_unit(rng, 1)
            sv = singular_values(stretch.jacobian(x)[0])
            self.assertLess(abs(sv[0] / sv[-1] - variant.K), 1e-9 * variant.K)
            self.assertLess(np.linalg.det(stretch.jacobian(x)[0]), 0)
            s = stretch.singular_structure(x)
            self.assertLess(abs(s.distortion[0] - variant.K), 1e-9 * variant.K)

    def test_jacobian_against_finite_differences(self):
        rng = np.random.default_rng(5)
        a = 0.3
        for variant in [StretchVariant.phi(2.0), StretchVariant.psi(3.0)]:
            r = rng.uniform(0.5, 2)
            stretch = RadialStretch(Ball(rng.standard_normal(3), r), rng.standard_normal(3), rng.uniform(-1, 1), variant)
            rho = rng.uniform(a * r, r, 100)
            X = stretch.ball.y + rho[:, None] * random_unit(rng, 100)
            analytic = stretch.jacobian(X)
            numeric = finite_difference_jacobian(stretch, X, 1e-6 * r)
            err = np.linalg.norm(analytic - numeric, axis=(1, 2)) / np.linalg.norm(analytic, axis=(1, 2))
            self.assertLess(err.max(), 1e-5)

            other = autograd_jacobian(stretch, X)
            err = np.linalg.norm(analytic - other, axis=(1, 2)) / np.linalg.norm(analytic, axis=(1, 2))
            self.assertLess(err.max(), 1e-10)

    def test_adjugate(self):
        rng = np.random.default_rng(6)
        stretch = RadialStretch(Ball(np.zeros(3), 1.0), np.ones(3), 0.2, StretchVariant.phi(2.0))
        X = rng.uniform(0.3, 0.9, (20, 1)) * random_unit(rng, 20)
        J = stretch.jacobian(X)
        prod = np.einsum("mij,mjk->mik", stretch.adjugate(X), J)
        det = np.linalg.det(J)
        self.assertTrue(np.allclose(prod, det[:, None, None] * np.eye(3)[None], rtol=1e-10, atol=1e-10))

    def test_boundary_agreement(self):
        stretch = RadialStretch(Ball((1.0, 0.0, 0.0), 2.0), (3.0, 1.0, 0.0), 0.5, StretchVariant.psi(2.0))
        x = np.array([[1.0, 2.0, 0.0], [-1.0, 0.0, 0.0]])
        self.assertTrue(np.allclose(stretch(x), stretch.affine_extension()(x), rtol=1e-14, atol=1e-14))

    def test_singular_point(self):
        stretch = RadialStretch(Ball((1.0, 0.0, 0.0), 2.0), (0.0, 0.0, 0.0), 0.0, StretchVariant.phi(2.0))
        with self.assertRaises(SingularPoint):
            stretch(np.array([1.0, 0.0, 0.0]))

    def test_energy_closed_form(self):
        # t = r = 1, n = 3, K = 1, p = 1, a = 1/2 gives 2 pi
        unit = RadialStretch(Ball(np.zeros(3), 1.0), np.zeros(3), 0.0, StretchVariant.phi(1.0))
        self.assertLess(abs(unit.annulus_energy(1.0, 0.5) - 2 * math.pi), 1e-8 * 2 * math.pi)

        cases = 0
        for n in [3, 4]:
            for tag in ["PHI", "PSI"]:
                for K in [1.0, 2.0, 4.0]:
                    variant = StretchVariant(tag, K)
                    for p in [1.0, 1.7, variant.critical_p(n)]:
                        if p < 1:
                            continue
                        for a in [0.25, 0.6]:
                            stretch = RadialStretch(Ball(np.zeros(n), 0.7), np.zeros(n), math.log(1.3), variant)
                            closed = stretch.annulus_energy(p, a)
                            quad = annulus_energy_quadrature(stretch, p, a)
                            self.assertLess(abs(closed - quad), 1e-8 * quad, msg=f"{n} {variant} p={p} a={a}")
                            cases += 1
        self.assertGreaterEqual(cases, 50)

    def test_critical_p(self):
        self.assertAlmostEqual(StretchVariant.phi(2.0).critical_p(3), 2.0)
        self.assertAlmostEqual(StretchVariant.psi(2.0).critical_p(3), 1.0)
        with self.assertRaises(ValueError):
            StretchVariant("CHI", 2.0)
        with self.assertRaises(ValueError):
            StretchVariant.phi(0.5)


class TestConstruction(unittest.TestCase):
    def test_schedule_params(self):
        with self.assertRaises(ScheduleInfeasible) as ctx:
            ScheduleParams(schedule="CANTOR", delta=2.0)
        self.assertEqual(ctx.exception.exit_code, 3)
        with self.assertRaises(ScheduleInfeasible):
            ScheduleParams(q=0.5)
        with self.assertRaises(ValueError):
            ScheduleParams(a=1.5)

        params = ScheduleParams().resolved(BoxDomain.unit_cube(3))
        self.assertEqual(params.delta0, 0.125)
        self.assertAlmostEqual(params.q, 0.9 * 0.5 ** 1.5)
        self.assertAlmostEqual(params.delta_k(2), 0.125 * params.q ** 2)
        self.assertEqual(ScheduleParams.from_dict(params.to_dict()), params)

        cantor = ScheduleParams(schedule="CANTOR").resolved(BoxDomain.unit_cube(3))
        self.assertEqual(cantor.delta0, 1.0)
        self.assertAlmostEqual(cantor.tail_term(3), 1.2 ** 3)

    def test_build_errors(self):
        with self.assertRaises(DimensionMismatch):
            build(BoxDomain.unit_cube(4), ScheduleParams())
        with self.assertRaises(ScheduleInfeasible):
            build(BoxDomain.unit_cube(3), ScheduleParams(delta0=10.0))

    def test_tree(self):
        tree = summable_tree()
        self.assertEqual(tree.depth, 6)
        self.assertTrue(tree.roots.validate())
        self.assertTrue(tree.template.validate())
        self.assertEqual(tree.node_count(2), len(tree.roots) * len(tree.template))
        for k in range(1, 7):
            self.assertLessEqual(tree.roots.radii.max() * (tree.a * tree.template.radii.max()) ** (k - 1), tree.params.delta_k(k) * (1 + 1e-9))

        nodes = list(tree.iter_nodes(generation=2, limit=10))
        self.assertEqual(len(nodes), 10)
        self.assertTrue(all(n.generation == 2 for n in nodes))
        self.assertEqual(tree.children(nodes[0])[0].path, nodes[0].path + (0,))

    def test_image_centers(self):
        # the image of a node center is F_(k-1) at that center
        tree = summable_tree()
        rng = np.random.default_rng(4)
        for _ in range(50):
            node = tree.node(random_path(tree, rng, min_generation=2))
            expected = tree.truncate(node.generation - 1).evaluate(node.ball.y)
            self.assertTrue(np.allclose(node.image_center, expected, rtol=1e-12, atol=1e-10))

    def test_continuity(self):
        tree = summable_tree()
        rng = np.random.default_rng(4)
        checked = 0
        for _ in range(200):
            node = tree.node(random_path(tree, rng))
            u = random_unit(rng, 1)[0]
            t = math.exp(node.log_accum_scale)
            for factor in [1.0, tree.a]:
                s = factor * node.ball.radius
                X = node.ball.y + np.outer([1 + 1e-9, 1 - 1e-9], s * u)
                if not np.all(tree.domain.contains(X, tol=0.0)):
                    continue
                F = tree.evaluate(X)
                scale = max(np.linalg.norm(F[0]), t * node.ball.radius)
                self.assertLessEqual(np.linalg.norm(F[0] - F[1]), 1e-6 * scale)
                checked += 1
        self.assertGreater(checked, 300)

    def test_uniform_convergence(self):
        tree = summable_tree()
        X = tree.domain.sample(np.random.default_rng(5), 10_000)
        prev = tree.truncate(1).evaluate(X)
        for k in range(1, tree.depth):
            cur = tree.truncate(k + 1).evaluate(X)
            diff = np.linalg.norm(cur - prev, axis=1).max()
            self.assertLessEqual(diff, tree.params.tail_term(k + 1) * (1 + 1e-9))
            prev = cur

        tail = tree.uniform_tail_bound()
        self.assertTrue(tail.summable)
        self.assertLess(tail.ratio, 1)
        self.assertTrue(all(b > a for a, b in zip(tail.partial_sums, tail.partial_sums[1:])))
        self.assertTrue(boundedness(tree, samples=5000)["within"])

    def test_classify(self):
        tree = summable_tree()
        X = tree.domain.sample(np.random.default_rng(6), 5000)
        tags, gens = tree.classify(X)
        self.assertTrue(set(np.unique(tags)) <= {OUTSIDE_ALL, ANNULUS, INNER_AFFINE})
        self.assertTrue(np.all((gens == 0) == (tags == OUTSIDE_ALL)))
        self.assertTrue(np.all(gens <= tree.depth))

        # the identity away from every ball
        outside = X[tags == OUTSIDE_ALL]
        self.assertTrue(np.array_equal(tree.evaluate(outside), outside))
        region = tree.locate(outside[0])
        self.assertEqual(region.tag, "OUTSIDE_ALL")
        self.assertIsNone(region.node)

        inner = X[tags == INNER_AFFINE]
        if len(inner):
            region = tree.locate(inner[0])
            self.assertEqual(region.tag, "INNER_AFFINE")
            self.assertTrue(region.node.ball.scaled(tree.a).contains(inner[0]))

    def test_interfaces(self):
        tree = summable_tree()
        j = int(np.argmin(np.linalg.norm(tree.roots.centers - 0.5, axis=1)))
        node = tree.node((j,))
        x = node.ball.y + node.ball.radius * np.array([1.0, 0.0, 0.0])
        with self.assertRaises(OnInterface):
            tree.gradient(x)
        G = tree.gradient(x, strict=False)
        self.assertEqual(G.shape, (3, 3))
        self.assertTrue(tree.on_interface(x[None])[0])
        with self.assertRaises(OutsideDomain):
            tree.evaluate(np.array([2.0, 2.0, 2.0]))
        with self.assertRaises(DimensionMismatch):
            tree.evaluate(np.zeros(4))

    def test_serialization(self):
        tree = summable_tree()
        X = tree.domain.sample(np.random.default_rng(7), 1000)
        with tempfile.TemporaryDirectory() as d:
            tree.to_json(join(d, "tree.json"))
            again = MapTree.from_json(join(d, "tree.json"))
            tree.to_csv(join(d, "nodes.csv"), max_nodes=50)
            header, rows = read_csv(join(d, "nodes.csv"))
        self.assertTrue(np.array_equal(tree.evaluate(X), again.evaluate(X)))
        self.assertEqual(tree.hash(), again.hash())
        self.assertEqual(header, tree.node_header())
        self.assertEqual(len(rows), 50)
        self.assertEqual(rows[0][1], "-1")

    def test_residual_measure(self):
        tree = small_tree()
        V = ball_volume(3)
        T = tree.template_coverage
        S = tree.radius_power_sums()
        self.assertAlmostEqual(S[1], S[0] * tree.a ** 3 * T)
        expected = V * tree.a ** 3 * (S[0] * (1 - T) + S[1])
        self.assertAlmostEqual(tree.residual_affine_measure(), expected)


class TestAnalysis(unittest.TestCase):
    def test_single_ball_energy(self):
        tree = single_ball_tree()
        report = total_energy(tree, 1.0)
        g = report.per_generation[0]
        self.assertLess(abs(g["annulus"] - 2 * math.pi), 1e-8)
        # |DF| = 4 on the inner ball of radius 1/2
        self.assertLess(abs(g["affine"] - 2 * math.pi / 3), 1e-8)
        self.assertAlmostEqual(report.outside_energy, 8 - 4 * math.pi / 3)
        self.assertLess(abs(report.total - energy_oracle(tree, 1.0)), 1e-8 * report.total)
        with self.assertRaises(ValueError):
            total_energy(tree, 0.5)
        with self.assertRaises(ValueError):
            criticality_sweep(tree, [1.0])

    def test_energy_against_oracle(self):
        tree = small_tree()
        for p in [1.0, 2.5]:
            exact = total_energy(tree, p).total
            oracle = energy_oracle(tree, p, max_nodes=100_000)
            self.assertLess(abs(exact - oracle), 1e-6 * oracle)

    def test_growth_ratios(self):
        tree = summable_tree()
        slack = tree.template.uncovered_fraction_estimate
        stderr = tree.template.uncovered_fraction_stderr
        for p in [1.0, 1.5, 2.5]:
            report = total_energy(tree, p)
            predicted = 0.5 ** (3 - p * 1.5)
            self.assertAlmostEqual(report.predicted_ratio, predicted)
            self.assertEqual(len(report.raw_ratios), tree.depth - 1)
            # raw ratios follow the slack the template packing reports
            for r in report.raw_ratios:
                self.assertLess(abs(r / predicted - (1 - slack)), 4 * stderr)
            self.assertTrue(all(b >= a for a, b in zip(report.partial_sums, report.partial_sums[1:])))
            self.assertAlmostEqual(report.critical_p, 2.0)
            self.assertEqual(report.fill_reached, tree.fill_reached)

    def test_default_tree(self):
        tree = default_tree()
        eta = tree.params.eta
        print("default tree:", tree, tree.roots.exhausted, tree.template.exhausted, tree.template_coverage)
        reached = tree.roots.uncovered_fraction_estimate <= eta and tree.template.uncovered_fraction_estimate <= eta
        self.assertEqual(tree.fill_reached, reached)
        slack = tree.template.uncovered_fraction_estimate
        stderr = tree.template.uncovered_fraction_stderr
        for p in [1.0, 1.5]:
            report = total_energy(tree, p)
            self.assertEqual(report.fill_reached, reached)
            self.assertEqual(report.to_dict()["fill_reached"], reached)
            for r in report.raw_ratios:
                self.assertLess(abs(r / report.predicted_ratio - (1 - slack)), 4 * stderr)
                self.assertAlmostEqual(r, report.slack_predicted_ratio)
                if reached:
                    self.assertLess(abs(r / report.predicted_ratio - 1), 0.1)
        rows = criticality_sweep(tree, [1.0, 1.5, 1.9, 2.1, 2.5])
        self.assertEqual([r["verdict"] for r in rows], ["bounded"] * 3 + ["divergent"] * 2)
        self.assertTrue(all(r["fill_reached"] == reached for r in rows))

    def test_criticality(self):
        tree = summable_tree()
        rows = criticality_sweep(tree, [1.0, 1.5, 1.9, 2.1, 2.5])
        self.assertEqual([r["verdict"] for r in rows], ["bounded"] * 3 + ["divergent"] * 2)

        rows = criticality_sweep(tree, [2.0])
        self.assertEqual(rows[0]["verdict"], "inconclusive")
        with self.assertRaises(InconclusiveNearCritical) as ctx:
            criticality_sweep(tree, [2.0], strict=True)
        self.assertEqual(ctx.exception.exit_code, 4)

    def test_audits(self):
        tree = summable_tree()
        audit = distortion_audit(tree, samples=10_000)
        self.assertAlmostEqual(audit["max_annulus_distortion"], 2.0, places=9)
        self.assertLess(abs(audit["positive_det_fraction"] - audit["exact_positive_det_fraction"]), 0.03)
        self.assertAlmostEqual(audit["positive_det_fraction"] + audit["negative_det_fraction"], 1.0)

    def test_similarity_dimension(self):
        self.assertAlmostEqual(similarity_dimension(4, 0.25), 1.0)
        points = np.array([[0.1, 0.1], [0.2, 0.2], [0.9, 0.9]])
        self.assertEqual(box_count(points, 0.5), 2)

    def test_cantor_dimension(self):
        phi = ScheduleParams(K=1.0, a=0.01, schedule="CANTOR", delta=1e-4, forced=True)
        report = cantor_dimension(phi, empirical=False)
        self.assertEqual(report.target, 1.5)
        self.assertLess(abs(report.analytic - report.target), 0.1)

        psi = ScheduleParams(K=2.0, a=0.05, variant="PSI", schedule="CANTOR", delta=1e-4, forced=True)
        report = cantor_dimension(psi, empirical=False)
        self.assertEqual(report.target, 2.0)
        self.assertLess(abs(report.analytic - report.target), 0.1)

        with self.assertRaises(ScheduleMismatch):
            cantor_dimension(ScheduleParams())

    def test_box_counting(self):
        params = ScheduleParams(K=2.0, a=0.1, schedule="CANTOR", delta=1e-4, forced=True, depth=6)
        report = cantor_dimension(params)
        self.assertEqual(report.N, 8)
        self.assertEqual(report.depth, 6)
        self.assertEqual(report.counts[-1], 8 ** 5)
        self.assertLess(abs(report.empirical - report.analytic), 0.15)

    def test_box_counting_over_depths(self):
        params = ScheduleParams(K=2.0, a=0.1, schedule="CANTOR", delta=1e-4, forced=True, depth=6)
        for depth in range(3, 7):
            report = cantor_dimension(params, depth=depth)
            self.assertEqual(report.counts[-1], 8 ** (depth - 1))
            self.assertLess(abs(report.empirical - report.analytic), 0.15, msg=f"depth {depth}")

    def test_cubic_lattice_shortfall(self):
        # eight lattice children at a = 0.1 fall well short of n / (K + 1) = 1
        params = ScheduleParams(K=2.0, a=0.1, schedule="CANTOR", delta=1e-4, forced=True)
        report = cantor_dimension(params, empirical=False)
        rho_c = 1.0001 * 0.1 ** 1.5
        self.assertAlmostEqual(report.analytic, math.log(8) / math.log(1 / rho_c))
        self.assertLess(abs(report.analytic - 0.602), 0.01)
        self.assertEqual(report.target, 1.0)
        self.assertGreater(report.gap, 0.3)
        self.assertAlmostEqual(report.C0, 8 * (rho_c / 0.1) ** 3)

    def test_kp_selector(self):
        v = kp_selector(3, 2.0)
        self.assertEqual(v.tag, "PHI")
        self.assertAlmostEqual(v.K, 2.02)
        self.assertLess(abs(v.dimension_target(3) - 1.0), 0.05)

        v = kp_selector(3, 1.2)
        self.assertEqual(v.tag, "PSI")
        self.assertAlmostEqual(v.K, 1.5 / 1.01)
        self.assertLess(abs(v.dimension_target(3) - 1.8), 0.05)
        with self.assertRaises(ValueError):
            kp_selector(3, 3.0)

    def test_blowup(self):
        tree = cantor_tree()
        self.assertEqual(tree.root_forced, 1)
        self.assertEqual(tree.template_forced, 1)
        walk = blowup_probe(tree, samples=20_000)
        print("blowup averages:", walk.averages, "slope:", walk.slope)
        self.assertEqual(walk.path, [0] * 6)
        self.assertTrue(walk.increasing)
        self.assertLess(abs(walk.slope - math.log(1.2)), 0.15 * math.log(1.2))

        with self.assertRaises(PathNotSpine):
            blowup_probe(tree, path=(0,) * 5 + (1,), samples=10)
        with self.assertRaises(PathNotSpine):
            blowup_probe(tree, path=(0, 0, 0), samples=10)

    def test_blowup_control(self):
        tree = summable_tree()
        walk = blowup_probe(tree, samples=2000)
        self.assertEqual(walk.predicted_slope, 0.0)
        self.assertLessEqual(max(walk.averages), boundedness(tree, samples=100)["bound"])


class TestDegree(unittest.TestCase):
    def test_fixtures(self):
        self.assertEqual(numeric_degree(lambda x: x), 1)
        self.assertEqual(numeric_degree(lambda x: -x), -1)
        V, F = icosphere(2)
        self.assertTrue(np.allclose(np.linalg.norm(V, axis=1), 1.0))
        self.assertEqual(len(F), 20 * 4 ** 2)

    def test_affine_maps(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            Q1, _ = np.linalg.qr(rng.standard_normal((3, 3)))
            Q2, _ = np.linalg.qr(rng.standard_normal((3, 3)))
            A = Q1 @ np.diag(rng.uniform(0.5, 2, 3)) @ Q2
            f = AffineMap(A, rng.standard_normal(3))
            d = numeric_degree(f, 3, rng.standard_normal(3), rng.uniform(0.5, 2))
            self.assertEqual(d, int(np.sign(f.det)))

    def test_degenerate(self):
        V, _ = icosphere(2)
        with self.assertRaises(DegenerateImage):
            numeric_degree(lambda x: x, 2, reference=V[0])
        with self.assertRaises(DegenerateImage):
            numeric_degree(lambda x: np.ones_like(x), 2, reference=(0.0, 0.0, 0.0))
        with self.assertRaises(DimensionMismatch):
            numeric_degree(lambda x: x, 2, center=(0.0, 0.0, 0.0, 0.0))

    def test_audit(self):
        tree = summable_tree()
        report = degree_audit(tree, nodes=100, samples_per_node=20, seed=4)
        print(report.verdict)
        self.assertTrue(report.confirmed)
        self.assertEqual(report.degrees, [1])
        self.assertTrue(all(n["numeric_degree"] == 1 for n in report.nodes))
        self.assertEqual(report.annulus_negative_fraction, 1.0)
        self.assertTrue(report.verdict.startswith("weakly-QR paradox confirmed"))
        errors = [n["max_jacobian_error"] for n in report.nodes if n["max_jacobian_error"] is not None]
        self.assertTrue(errors)
        self.assertLess(max(errors), 1e-8)

        again = degree_audit(tree, nodes=5, samples_per_node=10, seed=4, level=2, numeric=False, cross_check="fd")
        self.assertTrue(all(n["numeric_degree"] is None for n in again.nodes))

    def test_pairing_lipschitz(self):
        phi = Bump((0.0, 0.0, 0.0), 1.0)
        res = distributional_pairing(AffineMap(np.eye(3), np.zeros(3)), phi, samples=100_000, seed=4)
        self.assertLessEqual(abs(res["gap"]), 3 * res["stderr"])

        rng = np.random.default_rng(4)
        for i in range(10):
            f = AffineMap(rng.standard_normal((3, 3)), rng.standard_normal(3))
            res = distributional_pairing(f, phi, samples=100_000, seed=10 + i)
            # ten fixtures, a wider band keeps the family wise error small
            self.assertLessEqual(abs(res["gap"]), 4 * res["stderr"])

    def test_pairing_stretch(self):
        stretch = RadialStretch(Ball((0.0, 0.0, 0.0), 1.0), (0.0, 0.0, 0.0), 0.0, StretchVariant.phi(2.0))
        phi = Bump((0.0, 0.0, 0.0), 1.0)
        flux = boundary_flux(stretch, phi)
        self.assertGreater(flux, 0)
        res = distributional_pairing(stretch, phi, samples=100_000, seed=4)
        self.assertEqual(res["excise"], 0.5)
        self.assertGreater(abs(res["gap"]), 10 * res["stderr"])
        self.assertLessEqual(abs(res["gap"] - flux), 3 * res["stderr"] + 1e-3 * flux)

    def test_bump(self):
        phi = Bump((0.5, 0.5, 0.5), 0.25)
        self.assertEqual(phi(np.array([[0.9, 0.5, 0.5]]))[0], 0.0)
        self.assertAlmostEqual(phi(np.array([0.5, 0.5, 0.5])), math.exp(-3))
        self.assertTrue(phi.inside(BoxDomain.unit_cube(3)))
        with self.assertRaises(OutsideDomain):
            distributional_pairing(summable_tree(), Bump((0.5, 0.5, 0.5), 0.6), samples=10)


class TestConfig(unittest.TestCase):
    def test_defaults(self):
        config = ExperimentConfig()
        self.assertEqual(config.n, 3)
        self.assertEqual(config.K, 2.0)
        self.assertEqual(config.a, 0.5)
        self.assertEqual(config.variant, "PHI")
        self.assertEqual(config.depth, 6)
        self.assertEqual(config.domain(), BoxDomain.unit_cube(3))
        self.assertFalse(config.schedule_params().forced)
        self.assertTrue(ExperimentConfig(schedule="CANTOR").schedule_params().forced)

    def test_errors(self):
        with self.assertRaises(ConfigError) as ctx:
            ExperimentConfig.from_dict({"bogus": 1})
        self.assertEqual(ctx.exception.details["keys"], ["bogus"])
        self.assertEqual(ctx.exception.exit_code, 2)
        with self.assertRaises(ConfigError) as ctx:
            ExperimentConfig(a=1.5)
        self.assertEqual(ctx.exception.details["key"], "a")
        with self.assertRaises(ConfigError):
            ExperimentConfig(p_grid=[3.5])
        with self.assertRaises(ConfigError):
            ExperimentConfig.from_json("/does/not/exist.json")

    def test_json(self):
        config = ExperimentConfig(schedule="CANTOR", a=0.1, delta=1e-4, out="x")
        with tempfile.TemporaryDirectory() as d:
            config.to_json(join(d, "config.json"))
            again = ExperimentConfig.from_json(join(d, "config.json"))
        self.assertEqual(again.get_dict(), config.get_dict())
        self.assertEqual(again["a"], 0.1)
        # the output folder does not change the hash
        self.assertEqual(ExperimentConfig(out="x").hash(), ExperimentConfig(out="y").hash())
        self.assertNotEqual(ExperimentConfig(seed=1).hash(), ExperimentConfig(seed=2).hash())


SMALL = {
    "depth": 2,
    "delta0": 1.0,
    "eta": 0.5,
    "samples": 2000,
    "max_balls": 5000,
    "degree_nodes": 5,
    "degree_samples": 10,
    "level": 2,
    "blowup_samples": 200,
    "audit_samples": 500,
    "p_grid": [1.0, 2.5],
    "max_table_nodes": 200,
    "slice_resolution": 8,
}


class TestCLI(unittest.TestCase):
    def _config(self, d, **overrides):
        path = join(d, "config.json")
        dump_json({**SMALL, **overrides}, path)
        return path

    def test_reruns_are_byte_identical(self):
        with tempfile.TemporaryDirectory() as d:
            config = self._config(d)
            for name in ["run0", "run1"]:
                exp = Experiment(config=config, out=join(d, name))
                exp.build()
                exp.energy()
                exp.degree()
                exp.blowup()
                exp.slice(resolution=4)
            files = sorted(os.listdir(join(d, "run0")))
            self.assertEqual(files, sorted(os.listdir(join(d, "run1"))))
            for f in ["tree.json", "nodes.csv", "roots.csv", "template.csv", "summary.json", "energy.csv", "energy.json"]:
                self.assertIn(f, files)
            for f in ["degree.csv", "degree.json", "blowup.csv", "blowup.json", "slice.pgm", "slice.json"]:
                self.assertIn(f, files)
            for f in files:
                with open(join(d, "run0", f), "rb") as a, open(join(d, "run1", f), "rb") as b:
                    self.assertEqual(a.read(), b.read(), msg=f)

            summary = load_json(join(d, "run0", "summary.json"))
            self.assertTrue(summary["boundedness"]["within"])
            self.assertEqual(summary["meta"]["seed"], 4)
            self.assertEqual(summary["eta"], 0.5)
            packings = [summary["root_packing"], summary["template_packing"]]
            self.assertEqual(summary["fill_reached"], all(p["uncovered_fraction_estimate"] <= 0.5 for p in packings))

            tree = MapTree.from_json(join(d, "run0", "tree.json"))
            self.assertEqual(summary["meta"]["tree_hash"], tree.hash())
            self.assertEqual(load_json(join(d, "run0", "tree.json"))["meta"]["tree_hash"], tree.hash())
            self.assertEqual(load_json(join(d, "run0", "roots.meta.json"))["meta"]["tree_hash"], tree.hash())
            header, rows = read_csv(join(d, "run0", "roots.csv"))
            self.assertEqual(header, tree.roots.header())
            self.assertEqual(len(rows), len(tree.roots))
            _, rows = read_csv(join(d, "run0", "template.csv"))
            self.assertTrue(np.array_equal(np.array([r[-1] for r in rows], dtype=float), tree.template.radii))

    def test_verbs(self):
        with tempfile.TemporaryDirectory() as d:
            exp = Experiment(config=self._config(d), out=join(d, "run"))
            exp.build()
            out = exp.energy()
            self.assertEqual(out["verdicts"], {1.0: "bounded", 2.5: "divergent"})
            out = exp.degree()
            self.assertTrue(out["verdict"].startswith("weakly-QR paradox confirmed"))
            self.assertEqual(load_json(join(d, "run", "degree.json"))["antipodal_fixture"], -1)

            exp.slice(field="abs", resolution=4)
            with open(join(d, "run", "slice.pgm"), "rb") as f:
                self.assertEqual(f.read(2), b"P5")
            img = Image.open(join(d, "run", "slice.pgm"))
            self.assertEqual(img.size, (4, 4))
            sidecar = load_json(join(d, "run", "slice.json"))
            self.assertLessEqual(sidecar["vmin"], sidecar["vmax"])
            with self.assertRaises(OutsideDomain):
                exp.slice(offset=2.0)

            with self.assertRaises(ScheduleMismatch):
                exp.dimension()

            # a second driver reads the tree back
            other = Experiment(config=self._config(d), tree=join(d, "run", "tree.json"), out=join(d, "run"))
            other.report(["energy"])
            self.assertIn("energy", load_json(join(d, "run", "report.json"))["results"])

    def test_cantor_dimension_verb(self):
        with tempfile.TemporaryDirectory() as d:
            config = self._config(d, schedule="CANTOR", a=0.1, delta=1e-4, delta0=None, depth=4)
            out = Experiment(config=config, out=join(d, "run")).dimension()
            self.assertLess(abs(out["empirical"] - out["analytic"]), 0.2)
            self.assertTrue(os.path.exists(join(d, "run", "dimension.csv")))

    def test_exit_codes(self):
        with tempfile.TemporaryDirectory() as d:
            config = self._config(d, schedule="CANTOR", delta=2.0)
            with self.assertRaises(SystemExit) as ctx:
                main(["build", "--config", config, "--out", join(d, "bad")])
            self.assertEqual(ctx.exception.code, 3)
            self.assertEqual(load_json(join(d, "bad", "error.json"))["error"], "ScheduleInfeasible")

            config = self._config(d, bogus=1)
            with self.assertRaises(SystemExit) as ctx:
                main(["build", "--config", config, "--out", join(d, "typo")])
            self.assertEqual(ctx.exception.code, 2)
            self.assertEqual(load_json(join(d, "typo", "error.json"))["error"], "ConfigError")


if __name__ == "__main__":
    unittest.main()
