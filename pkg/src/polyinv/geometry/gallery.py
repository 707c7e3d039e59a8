"""Named metrics used by tests and the command line driver."""
import numpy as np
import sympy as sp

from polyinv.geometry.metric import ConformalProduct, MetricField2D, unit_disk

_X, _Y = sp.symbols("x y", real=True)
_X1 = sp.Symbol("x1", real=True)


def _conformal(name, factor, **kw):
    return MetricField2D.from_sympy(name, sp.Matrix([[factor, 0], [0, factor]]), (_X, _Y), **kw)


def euclidean_disk():
    return MetricField2D.from_sympy("euclidean_disk", sp.eye(2), (_X, _Y), flat=True)


def conformal_bump(amplitude=0.05, width=0.4, center=(0.2, -0.1)):
    u = amplitude * sp.exp(-((_X - center[0]) ** 2 + (_Y - center[1]) ** 2) / width ** 2)
    return _conformal("conformal_bump", sp.exp(2 * u))


def sphere_cap(angle, name=None):
    """Round unit-sphere cap of angular radius ``angle`` in stereographic coordinates."""
    s = sp.tan(sp.Rational(1, 2) * sp.nsimplify(angle))
    factor = 4 * s ** 2 / (1 + s ** 2 * (_X ** 2 + _Y ** 2)) ** 2
    return _conformal(name or f"sphere_cap_{angle:g}", factor)


def perturbed_disk(eps=0.05):
    return MetricField2D.from_sympy(
        "perturbed_disk",
        sp.Matrix([[1 + eps * _Y ** 2, 0], [0, 1 + eps * _X ** 2]]),
        (_X, _Y))


def gaussian_conformal(eps=0.1):
    return _conformal("gaussian_conformal", 1 + eps * sp.exp(-(_X ** 2 + _Y ** 2)))


def exponential_conformal():
    """``e^{2x} I``: not simple on the unit disk in general; used for Christoffel checks."""
    return _conformal("exponential_conformal", sp.exp(2 * _X))


METRICS = {
    "euclidean_disk": euclidean_disk,
    "conformal_bump": conformal_bump,
    "sphere_cap_small": lambda: sphere_cap(1.0, "sphere_cap_small"),
    "perturbed_disk": perturbed_disk,
    "sphere_cap_large": lambda: sphere_cap(2.4, "sphere_cap_large"),
}

# metrics expected to fail the simplicity diagnostics
CONTROLS = frozenset({"sphere_cap_large"})


def metric_by_name(name):
    try:
        return METRICS[name]()
    except KeyError:
        raise KeyError(f"unknown metric {name!r}; known: {', '.join(sorted(METRICS))}") from None


def product_by_name(name, x1_range=(-1.0, 1.0)):
    """Admissible product ``c (1 ⊕ g0)`` paired with the named transversal metric."""
    base = metric_by_name(name)
    if name == "conformal_bump":
        bump = sp.exp(-(_X1 ** 2 + _X ** 2 + _Y ** 2) / 0.5)
        c = 1 + sp.Rational(1, 5) * bump
    else:
        c = sp.Integer(1)
    return ConformalProduct.from_sympy(name, base, c, x1_range=x1_range, symbols=(_X1, _X, _Y))
