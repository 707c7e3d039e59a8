"""The nine acceptance criteria, each at its stated tolerance and runtime budget.

Every test records one PASS/FAIL line, printed in the terminal summary.
"""
import time

import numpy as np
import pytest
import sympy as sp

from polyinv import boundary as bd
from polyinv import cgo
from polyinv import geometry as geo
from polyinv import raytransform as rt
from polyinv import recovery as rc
from polyinv.fields import OneFormD, PairField, ScalarFieldD

from conftest import ACCEPTANCE_LINES


class Criterion:
    def __init__(self, number, title, budget):
        self.number, self.title, self.budget = number, title, budget
        self.facts = []
        self.ok = True

    def check(self, label, ok, detail):
        self.ok &= bool(ok)
        self.facts.append(f"{label} {detail}{'' if ok else ' [x]'}")

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        wall = time.perf_counter() - self.t0
        if exc_type is None:
            self.check("runtime", wall < self.budget, f"{wall:.1f}s<{self.budget:.0f}s")
        else:
            self.ok = False
            self.facts.append(f"error {exc_type.__name__}")
        line = (f"[{'PASS' if self.ok else 'FAIL'}] {self.number}. {self.title}: " + "; ".join(self.facts))
        ACCEPTANCE_LINES.append(line)
        print(line)
        if exc_type is None:
            assert self.ok, line


def test_1_santalo_adjoint_identity():
    with Criterion(1, "adjoint identity", 120) as c:
        for name in ("euclidean_disk", "conformal_bump"):
            metric = geo.metric_by_name(name)
            coarse = rt.SantaloSetup.build(metric)
            fine = rt.SantaloSetup.build(metric, n_s=256, n_phi=128)
            d0, d1 = [], []
            for k in range(5):
                pair, h = rt.random_santalo_couple(k)
                lam = (-0.3, 0.0, 0.3, 0.5, -0.5)[k]
                d0.append(rt.santalo_check(lam, pair, h, coarse)[0])
                d1.append(rt.santalo_check(lam, pair, h, fine)[0])
            gain = min(a / b for a, b in zip(d0, d1))
            c.check(name, max(d0) < 1e-5 and gain >= 8, f"max {max(d0):.2e}<1e-5, refinement gain {gain:.1f}>=8")


def test_2_kernel_vanishing():
    with Criterion(2, "kernel vanishing", 60) as c:
        for name in ("euclidean_disk", "conformal_bump"):
            metric = geo.metric_by_name(name)
            plan = rt.ray_plan(metric, geo.influx_grid(metric, 64, 32))
            worst = max(rt.kernel_ratio(lam, p, plan)
                        for p in rt.kernel_potentials(5, seed=11) for lam in (-0.3, 0.0, 0.3))
            c.check(name, worst < 1e-6, f"{worst:.2e}<1e-6")


def test_3_fanbeam_closed_forms():
    with Criterion(3, "fan-beam closed forms", 60) as c:
        metric = geo.metric_by_name("euclidean_disk")
        grid = geo.influx_grid(metric, 64, 32)
        x0, v0 = grid.flat()
        L = -2 * np.sum(x0 * v0, axis=1)
        one = PairField(ScalarFieldD(values=lambda x: np.ones(np.shape(x)[:-1], complex)), OneFormD.zero())
        plan = rt.ray_plan(metric, grid, n_points=64)
        worst = 0.0
        for lam in (0.0, 0.1, 0.5, 1.0, -0.4):
            exact = L if lam == 0 else (1 - np.exp(-lam * L)) / lam
            vals = rt.forward_T(lam, one, grid, metric, plan=plan).values.ravel()
            worst = max(worst, float(np.max(np.abs(vals - exact))))
        c.check("max error", worst < 1e-9, f"{worst:.2e}<1e-9")


def test_4_cgo_scaling():
    with Criterion(4, "conjugated residual scaling", 300) as c:
        hl = np.geomspace(0.1, 0.01, 7)
        amp_f = lambda z: np.exp(0.7j * z)  # noqa: E731
        flat = geo.product_by_name("euclidean_disk")
        cart = cgo.Phase(omega=None)
        G = cgo.build_chart_grid(flat, cart, (-1, 1), (-0.6, 0.6), (-0.6, 0.6), (40, 40, 24))
        s_flat = cgo.conjugated_residual_scaling(cgo.holomorphic_amplitude(amp_f, cart, b=np.cos),
                                                 cart, None, 2, hl, G).slope
        c.check("flat", s_flat >= 2.8, f"slope {s_flat:.2f}>=2.8")

        bump = geo.product_by_name("conformal_bump")
        polar = cgo.Phase(omega=np.array([-1.6, 0.0]))
        G2 = cgo.build_chart_grid(bump, polar, (-1, 1), (1.0, 2.0), (-0.35, 0.35), (40, 40, 24))
        pert = cgo.Perturbation(X=lambda a, b, t: np.stack([np.sin(a + b), 0.5 * np.cos(b * t), 0.3 * a * b]),
                                q=lambda a, b, t: 1 + a * b + np.cos(t))
        s_bump = cgo.conjugated_residual_scaling(cgo.holomorphic_amplitude(amp_f, polar, b=np.cos),
                                                 polar, pert, 2, hl, G2).slope
        c.check("conformal_bump", s_bump >= 2.8, f"slope {s_bump:.2f}>=2.8")

        bad = cgo.Phase(omega=None, psi_scale=0.7)
        one = cgo.Amplitude(a0=lambda a, b: np.ones_like(a) + 0j, integrating_factor=False)
        s_ctl = cgo.conjugated_residual_scaling(one, bad, None, 2, hl, G).slope
        c.check("eikonal-violating control", s_ctl <= 0.2, f"slope {s_ctl:.2f}<=0.2")


def test_5_carleman_ratio():
    with Criterion(5, "Carleman L2 ratio", 60) as c:
        hl = np.geomspace(0.1, 0.01, 7)
        best = min(cgo.carleman_ratio(cgo.random_carleman_function(seed), hl)[0] for seed in range(5))
        c.check("min over 5 functions", best >= 0.3, f"{best:.2f}>=0.3")


def test_6_boundary_recovery():
    with Criterion(6, "boundary recovery round trip", 60) as c:
        xs = bd.coordinate_symbols(3)
        x1, x2, x3 = xs
        r = sp.Rational
        rng = np.random.default_rng(6)
        pts = np.column_stack([rng.uniform(-0.5, 0.5, (5, 2)), np.zeros(5)])

        flat = bd.SymbolRecursion(bd.BoundaryNormalMetric.flat(3), bd.PerturbationJet.constant((1, 2, 3), 5, 2))
        g = sp.Matrix([[1 + r(1, 10) * x1 ** 2 + r(1, 5) * x3, r(1, 20) * x1 * x2],
                       [r(1, 20) * x1 * x2, 1 + r(1, 10) * x2 ** 2 - r(1, 10) * x3 + r(1, 20) * x3 ** 2]])
        jet = bd.PerturbationJet((1 + x1 * x2, x2 + x3 - x1 ** 2 / 2, r(1, 2) - x1 * x3 + x2 ** 2),
                                 2 + x1 ** 2 - x3 * x2, 2, xs)
        curved = bd.SymbolRecursion(bd.BoundaryNormalMetric.from_sympy(g, xs), jet)
        xr = rng.uniform(-0.5, 0.5, (5, 3))
        xi = rng.normal(size=(5, 2))
        for label, rec, tol in (("flat", flat, 1e-10), ("polynomial", curved, 1e-6)):
            res = bd.recover_Xq_boundary(rec.b0, rec.bm1, rec.metric, pts, 2)
            X_true, q_true = rec.jet.values(pts)
            err = max(np.max(np.abs(res.X - X_true)), np.max(np.abs(res.q - q_true)))
            c.check(label, err < tol, f"{err:.1e}<{tol:.0e}")
            rel = bd.relation_residuals(rec, xr, xi).max
            c.check(f"{label} relations", rel < 1e-8, f"{rel:.1e}<1e-8")


def test_7_gauge_pipeline():
    with Criterion(7, "gauge pipeline", 180) as c:
        product = geo.product_by_name("conformal_bump")
        metric = product.base
        lams = rc.DEFAULT_LAMBDAS
        plan = rt.ray_plan(metric, geo.influx_grid(metric, 32, 16), n_points=64, panels=2)
        rng = np.random.default_rng(7)
        ray = closed = roundtrip = 0.0
        for k in range(3):
            phi, dphi, sup, rad = rc.separable_potential(k)
            ray = max(ray, rc.gauge_vanishing_check(dphi, product, lams, x1_support=sup, radius=rad,
                                                    plan=plan).max)
            X = rc.VectorFieldM.gradient(dphi, product, x1_support=sup, radius=rad)
            closed = max(closed, rc.closedness_check(X, lams, seed=k).max)
            pts = rng.uniform(-0.6, 0.6, (16, 3))
            pot = rc.integrate_potential(X.flat, np.array([-0.95, 0.0, 0.0]), pts)
            shift = pot(pts) - phi(pts)
            roundtrip = max(roundtrip, pot.differential_defect(pts), np.ptp(shift.real) + np.ptp(shift.imag))
        c.check("ray integrals", ray < 1e-7, f"{ray:.1e}<1e-7")
        c.check("closedness", closed < 1e-6, f"{closed:.1e}<1e-6")
        c.check("potential round trip", roundtrip < 1e-6, f"{roundtrip:.1e}<1e-6")
        form, sup, rad = rc.rotational_form()
        ctl = rc.ray_identity_max(rc.VectorFieldM.from_flat(form, product, x1_support=sup, radius=rad),
                                  lams, plan=plan).max
        c.check("non-gradient control", ctl >= 1e-2, f"{ctl:.3f}>=1e-2")


def test_8_green_identity():
    with Criterion(8, "Green identity", 120) as c:
        metric = geo.metric_by_name("conformal_bump")
        u = rc.cutoff_bump((0.1, -0.2), 0.7, 12, (1.0, 0.5, -0.3))
        v = rc.cutoff_bump((-0.15, 0.1), 0.75, 12, (0.5, 0.2, 0.7))

        def X(x):
            return np.stack([0.3 + 0.2 * x[..., 1], -0.1 + 0.4 * x[..., 0] ** 2], axis=-1) + 0j

        def q(x):
            return 1 + x[..., 0] * x[..., 1] + 0j

        d = [rc.green_identity_check(metric, u, v, X, q, 2, n).defect for n in (65, 129, 257)]
        order = float(np.log2(d[1] / d[2]))
        c.check("defect at 129", d[1] < 1e-6, f"{d[1]:.1e}<1e-6")
        c.check("observed order", order >= 3.8, f"{order:.2f}~4")


def test_9_geometry():
    with Criterion(9, "geometry", 60) as c:
        drift = 0.0
        rng = np.random.default_rng(9)
        for name in geo.METRICS:
            metric = geo.metric_by_name(name)
            rep = geo.simplicity_diagnostics(metric)
            expected = name not in geo.CONTROLS
            c.check(name, rep.passed == expected, "simple" if rep.passed else "not simple")
            if not expected:
                continue
            for _ in range(4):
                x = metric.domain.sample(1, rng, margin=0.1)[0]
                v = metric.unit_vector(x[None], rng.uniform(0, 2 * np.pi, 1))[0]
                path = geo.shoot_geodesic(metric, geo.UnitTangent(x, v))
                drift = max(drift, path.energy_drift(metric) / path.tau)
        c.check("energy drift per unit length", drift < 1e-10, f"{drift:.1e}<1e-10")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
