"""Scalar radiating gas model: fluxes, coupling constant, end states, assumptions.

u_t + f(u)_x + L q_x = 0,   -q_xx + q + M(u)_x = 0.

Fluxes are polynomials with exact coefficient lists so derivatives are analytic.
"""
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction

import numpy as np
from numpy.polynomial import Polynomial

CHECK_POINTS = 256
TOL_RH = 1e-12


class ModelError(ValueError):
    pass


class EvaluationError(ModelError):
    pass


def _coeffs(c):
    """Coerce a coefficient list (ascending powers) to floats, accepting
    decimal/rational strings like '0.5' or '1/10'."""
    out = []
    for v in c:
        if isinstance(v, str):
            v = float(Fraction(Decimal(v)) if "/" not in v else Fraction(v))
        out.append(float(v))
    while len(out) > 1 and out[-1] == 0.0:
        out.pop()
    return tuple(out)


@dataclass(frozen=True)
class ModelSpec:
    """Model definition. f_coeffs and M_coeffs are ascending power coefficients."""

    f_coeffs: tuple
    M_coeffs: tuple
    L: float
    u_minus: float
    u_plus: float
    name: str = "custom"
    s: float = 0.0
    _poly: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "f_coeffs", _coeffs(self.f_coeffs))
        object.__setattr__(self, "M_coeffs", _coeffs(self.M_coeffs))
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "u_minus", float(self.u_minus))
        object.__setattr__(self, "u_plus", float(self.u_plus))
        if self.s != 0.0:
            raise ModelError("only stationary profiles (s = 0) are supported")
        f = Polynomial(self.f_coeffs)
        M = Polynomial(self.M_coeffs)
        object.__setattr__(self, "_poly", {
            "f": f, "df": f.deriv(1), "d2f": f.deriv(2), "d3f": f.deriv(3),
            "M": M, "dM": M.deriv(1), "d2M": M.deriv(2),
        })

    def f(self, u):
        return self._poly["f"](u)

    def df(self, u):
        return self._poly["df"](u)

    def d2f(self, u):
        return self._poly["d2f"](u)

    def d3f(self, u):
        return self._poly["d3f"](u)

    def M(self, u):
        return self._poly["M"](u)

    def dM(self, u):
        return self._poly["dM"](u)

    def d2M(self, u):
        return self._poly["d2M"](u)

    def poly(self, name):
        return self._poly[name]

    @property
    def jump(self):
        """[u] = u_plus - u_minus."""
        return self.u_plus - self.u_minus

    def end_data(self, side):
        """(a, b) = (df(u), dM(u)) at the end state on `side` ('plus'/'minus')."""
        u = self.u_plus if side == "plus" else self.u_minus
        return float(self.df(u)), float(self.dM(u))

    def as_dict(self):
        return {"name": self.name, "f": list(self.f_coeffs), "M": list(self.M_coeffs),
                "L": self.L, "u_minus": self.u_minus, "u_plus": self.u_plus}


PRESETS = ("burgers-linear", "burgers-cubic")


def preset(name, eps=0.2, L=1.0):
    """Built-in models with end states u_minus = eps, u_plus = -eps."""
    if name == "burgers-linear":
        M = (0.0, 1.0)
    elif name == "burgers-cubic":
        M = (0.0, 1.0, 0.0, 0.1)
    else:
        raise ModelError(f"unknown preset {name!r}; choose from {PRESETS}")
    return ModelSpec((0.0, 0.0, 0.5), M, L, eps, -eps, name=name)


@dataclass
class Check:
    passed: bool
    margin: float
    detail: str = ""


@dataclass
class AssumptionReport:
    checks: dict
    grid_points: int

    @property
    def passed(self):
        return all(c.passed for c in self.checks.values())

    def failed(self):
        return [k for k, c in self.checks.items() if not c.passed]

    def as_dict(self):
        return {"grid_points": self.grid_points, "passed": self.passed,
                "checks": {k: {"pass": c.passed, "margin": c.margin, "detail": c.detail}
                           for k, c in self.checks.items()}}


def _check(margin, detail=""):
    margin = float(margin)
    return Check(margin > 0, margin, detail)


def _grid_values(fun, ugrid, label):
    vals = np.asarray(fun(ugrid), dtype=float)
    bad = ~np.isfinite(vals)
    if bad.any():
        raise EvaluationError(f"{label} is not finite at u = {ugrid[bad][0]!r}")
    return vals


def check_assumptions(spec, aprime0=None, b0=None, n=CHECK_POINTS):
    """Margins for (A0)-(A4), (A5_k) k=1..4 and Lb(0) + 2a'(0) > 0.

    aprime0, b0 come from a computed profile; without them the profile
    dependent checks are skipped.  Every margin is positive iff the check passes.
    """
    lo, hi = sorted((spec.u_plus, spec.u_minus))
    ugrid = np.linspace(lo, hi, n)
    vals = {k: _grid_values(getattr(spec, k), ugrid, k) for k in ("f", "df", "d2f", "M", "dM")}
    checks = {}
    checks["A0"] = Check(True, 1.0, "polynomial fluxes, finite on the check grid")
    checks["A1"] = _check(vals["d2f"].min(), "min d2f on [u+, u-]")
    scale = max(np.abs(vals["f"]).max(), np.finfo(float).tiny)
    res = abs(float(spec.f(spec.u_minus) - spec.f(spec.u_plus)))
    checks["A2"] = _check(TOL_RH * scale - res, f"|f(u-) - f(u+)| = {res:.3e}")
    checks["A3"] = _check(spec.u_minus - spec.u_plus, "u- - u+")
    LdM = spec.L * vals["dM"]
    checks["A4"] = _check(LdM.min(), "min L dM on [u+, u-]")
    pts = [spec.u_plus, spec.u_minus]
    if checks["A1"].passed and checks["A3"].passed:
        from scipy.optimize import brentq
        pts.append(brentq(spec.df, spec.u_plus, spec.u_minus, xtol=1e-15))
    checks["A4_points"] = _check(min(spec.L * spec.dM(u) for u in pts),
                                 "min L dM at u+, u-, u*")
    if aprime0 is not None and b0 is not None:
        Lb0 = spec.L * b0
        for k in range(1, 5):
            checks[f"A5_{k}"] = _check(Lb0 + (k + 0.5) * aprime0, f"Lb(0) + {k + 0.5} a'(0)")
        checks["LM+2a'(0)"] = _check(Lb0 + 2 * aprime0, "Lb(0) + 2 a'(0)")
    return AssumptionReport(checks, n)


class NormalizationError(ModelError):
    pass


def coefficient_functions(spec, profile):
    """a_i = df(U_i), b_i = dM(U_i) on the profile grid."""
    a = spec.df(profile.U)
    b = spec.dM(profile.U)
    s = np.sign(a)
    nz = s != 0
    changes = np.count_nonzero(np.diff(s[nz]) != 0)
    if changes != 1:
        raise NormalizationError(f"a changes sign {changes} times, expected once")
    i0 = int(np.argmin(np.abs(profile.x)))
    ok = (s[i0] == 0) or (i0 + 1 < len(s) and s[i0] != s[i0 + 1]) or (i0 > 0 and s[i0 - 1] != s[i0])
    if not ok:
        raise NormalizationError("sign change of a is not at the node nearest x = 0")
    return a, b
