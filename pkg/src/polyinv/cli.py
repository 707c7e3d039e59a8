"""Batch driver: each subcommand runs a study, writes tables and a pass/fail summary.

Exit status is 0 when every check passes, 1 when a check fails and 2 on
usage or configuration errors.
"""
import argparse
import configparser
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import sympy as sp

from polyinv import __version__
from polyinv import _accel
from polyinv import boundary as bd
from polyinv import cgo
from polyinv import geometry as geo
from polyinv import raytransform as rt
from polyinv import recovery as rc
from polyinv.fields import OneFormD, PairField, ScalarFieldD

SUBCOMMANDS = ("transform", "kernel", "cgo", "carleman", "boundary", "recover")
OUTPUT_ENV = "POLYINV_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text).strip()
    return [float(v) for v in text.split(",") if v.strip()] if text else []


def _ints(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


@dataclass
class ExperimentConfig:
    """Settings shared by all studies.  Keys match the ``[experiment]`` config section."""
    metric: str = "conformal_bump"
    seed: int = 0
    output_dir: str = "polyinv_out"
    n_s: int = 128                  # influx nodes in boundary arclength
    n_phi: int = 64                 # influx nodes in incidence angle
    n_points: int = 64              # quadrature nodes per ray
    couples: int = 5                # random (pair, h) couples for the adjoint identity
    basis_size: int = 12            # conditioning basis
    lambda_list: list = field(default_factory=lambda: [-0.3, 0.0, 0.3])
    gauge_lambdas: list = field(default_factory=lambda: list(np.round(np.linspace(-0.5, 0.5, 11), 12)))
    h_list: list = field(default_factory=lambda: list(np.round(np.geomspace(0.1, 0.01, 7), 12)))
    m: int = 2
    samples: int = 5                # random test functions per study
    cgo_shape: list = field(default_factory=lambda: [40, 40, 24])
    green_n: int = 129

    _LISTS = {"lambda_list": _floats, "gauge_lambdas": _floats, "h_list": _floats, "cgo_shape": _ints}

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    def update(self, mapping):
        for key, raw in mapping.items():
            if key not in self.keys():
                raise ConfigError(f"unknown config key {key!r}")
            if raw is None:
                continue
            conv = self._LISTS.get(key)
            if conv is not None:
                value = conv(raw)
            else:
                kind = type(getattr(self, key))
                try:
                    value = kind(raw)
                except ValueError:
                    raise ConfigError(f"bad value for {key}: {raw!r}") from None
            setattr(self, key, value)
        return self

    def validate(self):
        if self.metric not in geo.METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}; known: {', '.join(sorted(geo.METRICS))}")
        for key in ("n_s", "n_phi", "n_points", "couples", "basis_size", "m", "samples", "green_n"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive")
        if len(self.cgo_shape) != 3 or min(self.cgo_shape) <= 0:
            raise ConfigError("cgo_shape needs three positive sizes")
        if not self.h_list:
            raise ConfigError("h_list is empty")
        if any(h <= 0 for h in self.h_list) or any(b >= a for a, b in zip(self.h_list, self.h_list[1:])):
            raise ConfigError("h_list must be positive and strictly decreasing")
        if not self.lambda_list or not self.gauge_lambdas:
            raise ConfigError("lambda lists must be non-empty")
        return self

    def settings(self):
        """Everything that affects results (the output location does not)."""
        d = asdict(self)
        d.pop("output_dir")
        return d

    def digest(self):
        blob = json.dumps(self.settings(), sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# --------------------------------------------------------------------------
# reporting
# --------------------------------------------------------------------------

@dataclass
class CheckRecord:
    name: str
    value: float
    tolerance: float
    relation: str          # "<" means pass when value < tolerance
    wall: float = 0.0

    @property
    def passed(self):
        if not np.isfinite(self.value):
            return False
        return self.value < self.tolerance if self.relation == "<" else self.value >= self.tolerance


@dataclass
class RunReport:
    subcommand: str
    config_hash: str
    version: str = __version__
    checks: list = field(default_factory=list)
    files: list = field(default_factory=list)

    def add(self, name, value, tolerance, relation="<", wall=0.0):
        if any(c.name == name for c in self.checks):
            raise ValueError(f"duplicate check {name!r}")
        rec = CheckRecord(name, float(value), float(tolerance), relation, wall)
        self.checks.append(rec)
        return rec

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def lines(self):
        for c in self.checks:
            flag = "PASS" if c.passed else "FAIL"
            yield f"{flag}  {c.name:<44s} {c.value:.3e} {c.relation} {c.tolerance:.1e}  ({c.wall:.1f}s)"


class Writer:
    """Deterministic table writer (no timestamps or wall times in files)."""

    def __init__(self, out_dir, fmt="csv"):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.fmt = fmt
        self.sep = "," if fmt == "csv" else "\t"

    def table(self, stem, header, rows):
        path = self.dir / f"{stem}.{self.fmt}"
        with open(path, "w", newline="") as fh:
            fh.write(self.sep.join(header) + "\n")
            for row in rows:
                fh.write(self.sep.join(_cell(v) for v in row) + "\n")
        return str(path)


def _cell(v):
    if isinstance(v, (str, bool)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10e}"


class _Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.wall = time.perf_counter() - self.t0


# --------------------------------------------------------------------------
# studies
# --------------------------------------------------------------------------

def study_transform(cfg, report, out):
    metric = geo.metric_by_name(cfg.metric)
    flat = geo.metric_by_name("euclidean_disk")
    with _Timer() as t:
        grid = geo.influx_grid(flat, 32, 16)
        plan = rt.ray_plan(flat, grid, n_points=cfg.n_points, panels=4)
        rows, worst = [], 0.0
        one = PairField(ScalarFieldD(values=lambda x: np.ones(x.shape[:-1], complex)), OneFormD.zero())
        for lam in cfg.lambda_list:
            vals = plan.apply(lam, one).values.ravel()
            x0, v0 = grid.flat()
            L = -2 * np.sum(x0 * v0, axis=-1)          # exact chord length on the unit disk
            exact = L if lam == 0 else (1 - np.exp(-lam * L)) / lam
            err = np.abs(vals - exact)
            worst = max(worst, float(err.max()))
            rows.append((lam, float(err.max())))
    report.add("fanbeam closed form", worst, 1e-9, wall=t.wall)
    report.files.append(out.table("transform_closed_form", ["lambda", "max_error"], rows))

    with _Timer() as t:
        rep = geo.simplicity_diagnostics(metric)
    report.add(f"simplicity min jacobi ({cfg.metric})", rep.min_jacobi, 1e-12, ">=", t.wall)
    report.add(f"simplicity min curvature ({cfg.metric})", rep.min_curvature, 1e-12, ">=")

    with _Timer() as t:
        setup = rt.SantaloSetup.build(metric, n_s=cfg.n_s, n_phi=cfg.n_phi, n_points=cfg.n_points)
        rows = []
        for k in range(cfg.couples):
            pair, h = rt.random_santalo_couple(cfg.seed + k)
            lam = cfg.lambda_list[k % len(cfg.lambda_list)]
            defect, lhs, rhs, _ = rt.santalo_check(lam, pair, h, setup)
            rows.append((k, lam, lhs.real, lhs.imag, rhs.real, rhs.imag, defect))
    report.add(f"santalo defect ({cfg.metric})", max(r[-1] for r in rows), 1e-5, wall=t.wall)
    report.files.append(out.table("santalo", ["couple", "lambda", "lhs_re", "lhs_im", "rhs_re", "rhs_im",
                                              "defect"], rows))


def study_kernel(cfg, report, out):
    metric = geo.metric_by_name(cfg.metric)
    with _Timer() as t:
        plan = rt.ray_plan(metric, geo.influx_grid(metric, 64, 32), n_points=cfg.n_points)
        rows = []
        for k, p in enumerate(rt.kernel_potentials(cfg.samples, cfg.seed)):
            for lam in cfg.lambda_list:
                rows.append((k, lam, rt.kernel_ratio(lam, p, plan)))
    report.add(f"kernel ratio ({cfg.metric})", max(r[-1] for r in rows), 1e-6, wall=t.wall)
    report.files.append(out.table("kernel", ["potential", "lambda", "ratio"], rows))
    with _Timer() as t:
        rows = []
        for lam in cfg.lambda_list:
            rep = rt.conditioning_study(lam, cfg.basis_size, metric, plan=plan, seed=cfg.seed)
            rows += [(lam, j, s) for j, s in enumerate(rep.singular_values)]
            smallest = rep.smallest
    report.add("conditioning smallest singular value", smallest, 1e-12, ">=", t.wall)
    report.files.append(out.table("conditioning", ["lambda", "index", "singular_value"], rows))


def study_cgo(cfg, report, out):
    hl = np.asarray(cfg.h_list)
    shape = tuple(cfg.cgo_shape)
    rows = []
    with _Timer() as t:
        flat = geo.product_by_name("euclidean_disk")
        cart = cgo.Phase(omega=None)
        G = cgo.build_chart_grid(flat, cart, (-1, 1), (-0.6, 0.6), (-0.6, 0.6), shape)
        amp = cgo.holomorphic_amplitude(lambda z: np.exp(0.7j * z), cart, b=np.cos)
        res = cgo.conjugated_residual_scaling(amp, cart, None, cfg.m, hl, G)
        rows += [("flat", h, nrm) for h, nrm in zip(res.h, res.norms)]
        flat_slope = res.slope
        bad = cgo.Phase(omega=None, psi_scale=0.7)
        one = cgo.Amplitude(a0=lambda a, b: np.ones_like(a) + 0j, integrating_factor=False)
        ctl = cgo.conjugated_residual_scaling(one, bad, None, cfg.m, hl, G)
        rows += [("control", h, nrm) for h, nrm in zip(ctl.h, ctl.norms)]
    report.add("cgo slope (flat)", flat_slope, cfg.m + 0.8, ">=", t.wall)
    report.add("cgo slope (eikonal-violating control)", ctl.slope, 0.2, "<")

    with _Timer() as t:
        product = geo.product_by_name(cfg.metric)
        polar = cgo.Phase(omega=np.array([-1.6, 0.0]))
        r_range, th_range = (1.0, 2.0), (-0.35, 0.35)
        eik, gauss = cgo.eikonal_residual(polar, product, r_range, th_range)
        G2 = cgo.build_chart_grid(product, polar, (-1, 1), r_range, th_range, shape)
        amp2 = cgo.holomorphic_amplitude(lambda z: np.exp(0.7j * z), polar, b=np.cos)
        tr = cgo.transport_residual(amp2, polar, cfg.m, G2)
        pert = cgo.Perturbation(X=lambda a, b, c: np.stack([np.sin(a + b), 0.5 * np.cos(b * c), 0.3 * a * b]),
                                q=lambda a, b, c: 1 + a * b + np.cos(c))
        res2 = cgo.conjugated_residual_scaling(amp2, polar, pert, cfg.m, hl, G2)
        rows += [(cfg.metric, h, nrm) for h, nrm in zip(res2.h, res2.norms)]
    report.add(f"eikonal residual ({cfg.metric})", max(eik, gauss), 1e-8, wall=t.wall)
    report.add(f"transport residual ({cfg.metric})", tr, 1e-6)
    report.add(f"cgo slope ({cfg.metric})", res2.slope, cfg.m + 0.8, ">=")
    report.files.append(out.table("cgo_scaling", ["case", "h", "residual_norm"], rows))


def study_carleman(cfg, report, out):
    rows = []
    with _Timer() as t:
        for k in range(cfg.samples):
            u = cgo.random_carleman_function(cfg.seed + k)
            best, ratios = cgo.carleman_ratio(u, cfg.h_list, m=1)
            rows += [(k, h, r) for h, r in zip(cfg.h_list, ratios)]
    report.add("carleman min ratio", min(r[-1] for r in rows), 0.3, ">=", t.wall)
    report.files.append(out.table("carleman", ["function", "h", "ratio"], rows))


def _poly_boundary_case():
    xs = bd.coordinate_symbols(3)
    x1, x2, x3 = xs
    r = sp.Rational
    g = sp.Matrix([[1 + r(1, 10) * x1 ** 2 + r(1, 5) * x3, r(1, 20) * x1 * x2],
                   [r(1, 20) * x1 * x2, 1 + r(1, 10) * x2 ** 2 - r(1, 10) * x3 + r(1, 20) * x3 ** 2]])
    metric = bd.BoundaryNormalMetric.from_sympy(g, xs, "polynomial")
    jet = bd.PerturbationJet((1 + x1 * x2, x2 + x3 - x1 ** 2 / 2, r(1, 2) - x1 * x3 + x2 ** 2),
                             2 + x1 ** 2 - x3 * x2, 2, xs)
    return metric, jet


def study_boundary(cfg, report, out):
    rng = np.random.default_rng(cfg.seed)
    pts = np.column_stack([rng.uniform(-0.5, 0.5, (cfg.samples, 2)), np.zeros(cfg.samples)])
    cases = [("flat", bd.BoundaryNormalMetric.flat(3), bd.PerturbationJet.constant((1, 2, 3), 5, cfg.m), 1e-10),
             ("polynomial",) + _poly_boundary_case() + (1e-6,)]
    for label, metric, jet, tol in cases:
        with _Timer() as t:
            rec = bd.SymbolRecursion(metric, jet)
            res = bd.recover_Xq_boundary(rec.b0, rec.bm1, metric, pts, jet.m)
            X_true, q_true = jet.values(pts)
            err = max(float(np.max(np.abs(res.X - X_true))), float(np.max(np.abs(res.q - q_true))))
            xr = rng.uniform(-0.5, 0.5, (cfg.samples, 3))
            xi = rng.normal(size=(cfg.samples, 2))
            rel = bd.relation_residuals(rec, xr, xi)
            hom = max(s.homogeneity_defect(xr, xi) for s in (rec.b1, rec.b0, rec.bm1))
        report.add(f"boundary recovery ({label})", err, tol, wall=t.wall)
        report.add(f"symbol relations ({label})", rel.max, 1e-8)
        report.add(f"symbol homogeneity ({label})", hom, 1e-10)
        path = out.dir / f"boundary_{label}.{out.fmt}"
        res.to_csv(path, X_true, q_true, delimiter=out.sep)
        report.files.append(str(path))


def study_recover(cfg, report, out):
    product = geo.product_by_name(cfg.metric)
    metric = product.base
    lams = np.asarray(cfg.gauge_lambdas)
    with _Timer() as t:
        plan = rt.ray_plan(metric, geo.influx_grid(metric, 32, 16), n_points=64, panels=2)
        per_lam = np.zeros(lams.size)
        closed = np.zeros(lams.size)
        rt_defect = 0.0
        rng = np.random.default_rng(cfg.seed)
        for k in range(3):
            phi, dphi, sup, rad = rc.separable_potential(cfg.seed + k)
            g = rc.gauge_vanishing_check(dphi, product, lams, x1_support=sup, radius=rad, plan=plan)
            per_lam = np.maximum(per_lam, g.max_ray)
            X = rc.VectorFieldM.gradient(dphi, product, x1_support=sup, radius=rad)
            cl = rc.closedness_check(X, lams, seed=cfg.seed + k)
            closed = np.maximum(closed, np.maximum(cl.fourier, max(cl.transversal, cl.full)))
            pts = rng.uniform(-0.6, 0.6, (16, 3))
            pot = rc.integrate_potential(X.flat, np.array([-0.95, 0.0, 0.0]), pts)
            shift = pot(pts) - phi(pts)
            rt_defect = max(rt_defect, pot.differential_defect(pts), float(np.ptp(shift.real) + np.ptp(shift.imag)))
        form, sup, rad = rc.rotational_form()
        ctl = rc.ray_identity_max(rc.VectorFieldM.from_flat(form, product, x1_support=sup, radius=rad),
                                  lams, plan=plan)
    report.add(f"gauge ray integrals ({cfg.metric})", per_lam.max(), 1e-7, wall=t.wall)
    report.add("closedness residual", closed.max(), 1e-6)
    report.add("potential round trip", rt_defect, 1e-6)
    report.add("non-gradient control", ctl.max, 1e-2, ">=")
    report.files.append(out.table(
        "recover", ["lambda", "max_ray_integral", "closedness_residual", "potential_roundtrip_defect"],
        [(lam, a, b, rt_defect) for lam, a, b in zip(lams, per_lam, closed)]))

    with _Timer() as t:
        u = rc.cutoff_bump((0.1, -0.2), 0.7, 12, (1.0, 0.5, -0.3))
        v = rc.cutoff_bump((-0.15, 0.1), 0.75, 12, (0.5, 0.2, 0.7))

        def Xf(x):
            return np.stack([0.3 + 0.2 * x[..., 1], -0.1 + 0.4 * x[..., 0] ** 2], axis=-1) + 0j

        def qf(x):
            return 1 + x[..., 0] * x[..., 1] + 0j

        rows = []
        for n in (cfg.green_n // 2 + 1, cfg.green_n, 2 * cfg.green_n - 1):
            r = rc.green_identity_check(metric, u, v, Xf, qf, cfg.m, n)
            rows.append((n, r.lhs.real, r.lhs.imag, r.rhs.real, r.rhs.imag, r.defect))
    report.add(f"green identity defect ({cfg.metric})", rows[1][-1], 1e-6, wall=t.wall)
    report.files.append(out.table("green", ["n", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "defect"], rows))


STUDIES = {"transform": study_transform, "kernel": study_kernel, "cgo": study_cgo,
           "carleman": study_carleman, "boundary": study_boundary, "recover": study_recover}


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def run(subcommand, cfg: ExperimentConfig, fmt="csv", echo=print):
    """Run one subcommand (or ``all``); returns the report."""
    names = SUBCOMMANDS if subcommand == "all" else (subcommand,)
    out = Writer(cfg.output_dir, fmt)
    report = RunReport(subcommand, cfg.digest())
    for name in names:
        STUDIES[name](cfg, report, out)
    rows = [(c.name, c.value, c.tolerance, c.relation, c.passed) for c in report.checks]
    report.files.append(out.table(f"summary_{subcommand}", ["check", "value", "tolerance", "relation", "pass"],
                                  rows))
    with open(out.dir / f"provenance_{subcommand}.json", "w") as fh:
        json.dump({"config_hash": report.config_hash, "version": report.version,
                   "config": cfg.settings()}, fh, indent=1, sort_keys=True, default=float)
    for line in report.lines():
        echo(line)
    return report


def build_parser():
    # SUPPRESS keeps a subparser from resetting options given before the subcommand
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="INI file with an [experiment] section (and optional per-study sections)")
    common.add_argument("--metric", help=f"gallery metric: {', '.join(sorted(geo.METRICS))}")
    common.add_argument("--seed", type=int, help="seed for random test families (default 0)")
    common.add_argument("--output-dir", help=f"output directory (env {OUTPUT_ENV} overrides the config file)")
    common.add_argument("--format", choices=("csv", "tsv"), help="table format (default csv)")
    common.add_argument("--threads", type=int, help="numba thread count")
    common.add_argument("--h-list", help="comma separated, strictly decreasing (default 0.1 .. 0.01)")
    common.add_argument("--lambda-list", help="comma separated attenuations (default -0.3,0,0.3)")
    common.add_argument("--m", type=int, help="polyharmonic order (default 2)")
    p = argparse.ArgumentParser(prog="polyinv", description=__doc__, parents=[common],
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    helps = {"transform": "fan-beam closed forms, simplicity, adjoint identity",
             "kernel": "kernel-pair vanishing and conditioning",
             "cgo": "eikonal, transport and conjugated residual scaling",
             "carleman": "Carleman L2 ratio on the flat product",
             "boundary": "boundary symbol recursion and X, q recovery",
             "recover": "gauge pipeline and Green identity",
             "all": "every study"}
    for name, text in helps.items():
        sub.add_parser(name, help=text, parents=[common])
    return p


def load_config(args):
    cfg = ExperimentConfig()
    if getattr(args, "config", None):
        ini = configparser.ConfigParser()
        if not ini.read(getattr(args, "config")):
            raise ConfigError(f"cannot read config {args.config!r}")
        if ini.has_section("experiment"):
            cfg.update(dict(ini.items("experiment")))
        if args.command != "all" and ini.has_section(args.command):
            cfg.update(dict(ini.items(args.command)))
    env = os.environ.get(OUTPUT_ENV)
    if env:
        cfg.output_dir = env
    cfg.update({key: getattr(args, key, None)
                for key in ("metric", "seed", "output_dir", "h_list", "lambda_list", "m")})
    return cfg.validate()


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"polyinv: error: {exc}", file=sys.stderr)
        return 2
    if getattr(args, "threads", None):
        _accel.set_threads(args.threads)
    report = run(args.command, cfg, fmt=getattr(args, "format", "csv"))
    print("all checks passed" if report.passed else "some checks FAILED")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
