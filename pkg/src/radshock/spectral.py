"""Constant-coefficient spectral data at x = +-inf.

pi(mu) = mu^3 + a^-1 (lam + Lb) mu^2 - mu - a^-1 lam, roots labelled by
continuation from lam = 0 where they are {+-theta1, 0, -+theta3}.
"""
import itertools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

COLLISION_TOL = 1e-9


class LabelingError(RuntimeError):
    pass


class SplittingError(RuntimeError):
    pass


def asymptotic_matrix(spec, side, lam):
    a, b = spec.end_data(side)
    L = spec.L
    return np.array([[-(lam + L * b) / a, 0, L / a],
                     [b, 0, -1],
                     [0, -1, 0]], dtype=complex)


def char_coeffs(spec, side, lam):
    """(B, C, D) of the monic cubic mu^3 + B mu^2 + C mu + D."""
    a, b = spec.end_data(side)
    lam = np.asarray(lam, dtype=complex)
    return (lam + spec.L * b) / a, -np.ones_like(lam), -lam / a


def cubic_roots(B, C, D):
    """Closed-form (Cardano) roots of mu^3 + B mu^2 + C mu + D, vectorized,
    followed by one Newton polish step.  Returns shape (..., 3)."""
    B, C, D = (np.asarray(v, dtype=complex) for v in (B, C, D))
    p = C - B * B / 3
    q = 2 * B ** 3 / 27 - B * C / 3 + D
    disc = np.sqrt(q * q / 4 + p ** 3 / 27)
    w1 = -q / 2 + disc
    w2 = -q / 2 - disc
    w = np.where(np.abs(w1) >= np.abs(w2), w1, w2)
    s = w ** (1 / 3)
    omega = np.exp(2j * np.pi / 3)
    roots = []
    for k in range(3):
        sk = s * omega ** k
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(sk != 0, sk - p / (3 * sk), 0)
        roots.append(t - B / 3)
    r = np.stack(roots, axis=-1)
    Bx, Cx, Dx = B[..., None], C[..., None], D[..., None]
    f = ((r + Bx) * r + Cx) * r + Dx
    fp = (3 * r + 2 * Bx) * r + Cx
    with np.errstate(divide="ignore", invalid="ignore"):
        step = np.where(fp != 0, f / fp, 0)
    return r - step


def theta(spec, side):
    """Positive rates theta1, theta3 of the fast roots at lam = 0."""
    a, b = spec.end_data(side)
    c = spec.L * b / a
    s = np.sqrt(c * c + 4)
    if side == "plus":
        return 0.5 * (-c + s), 0.5 * (c + s)
    return 0.5 * (c + s), 0.5 * (-c + s)


def anchors(spec, side):
    t1, t3 = theta(spec, side)
    if side == "plus":
        return np.array([t1, 0.0, -t3], dtype=complex)
    return np.array([-t1, 0.0, t3], dtype=complex)


def eigvec(spec, side, mu):
    _, b = spec.end_data(side)
    mu = np.asarray(mu, dtype=complex)
    return np.stack([(1 - mu * mu) / b, -mu, np.ones_like(mu)], axis=0)


@dataclass
class ModeSet:
    side: str
    lam: complex
    mu: np.ndarray          # (mu1, mu2, mu3)
    V: np.ndarray           # columns V1, V2, V3
    theta1: float
    theta3: float
    min_gap: float


_PERMS = list(itertools.permutations(range(3)))


def _assign(prev, cand):
    costs = [np.sum(np.abs(cand[list(p)] - prev)) for p in _PERMS]
    order = np.argsort(costs)
    return cand[list(_PERMS[order[0]])], costs[order[0]], costs[order[1]]


def track_roots(spec, side, lam, max_steps=20000):
    """Roots at lam labelled by continuation along the segment [0, lam] with
    adaptive steps: a step is accepted when every root moves by less than
    0.3 of its distance to the nearest other root."""
    lam = complex(lam)
    cur = anchors(spec, side)
    t, dt = 0.0, 1.0 / 32
    min_gap = np.inf
    for _ in range(max_steps):
        if t >= 1.0:
            return cur, min_gap
        tn = min(1.0, t + dt)
        r = cubic_roots(*char_coeffs(spec, side, lam * tn))
        g = min(abs(r[0] - r[1]), abs(r[0] - r[2]), abs(r[1] - r[2]))
        if g < COLLISION_TOL:
            raise LabelingError(f"root collision (gap {g:.2e}) on the path to lam={lam}; "
                                "use smaller path steps or move the contour")
        new, _, _ = _assign(cur, r)
        near = np.array([min(abs(new[j] - new[k]) for k in range(3) if k != j)
                         for j in range(3)])
        if np.any(np.abs(new - cur) > 0.3 * near):
            dt *= 0.5
            if dt < 1e-14:
                break
            continue
        cur, t = new, tn
        min_gap = min(min_gap, g)
        dt *= 1.5
    raise LabelingError(f"root labelling did not resolve along [0, {lam}]")


def char_roots(spec, side, lam):
    lam = complex(lam)
    if lam == 0:
        mu = anchors(spec, side)
        gap = min(abs(mu[0] - mu[1]), abs(mu[0] - mu[2]), abs(mu[1] - mu[2]))
    else:
        mu, gap = track_roots(spec, side, lam)
        # polish on the exact cubic
        B, C, D = (complex(v) for v in char_coeffs(spec, side, lam))
        for _ in range(2):
            mu = mu - (((mu + B) * mu + C) * mu + D) / ((3 * mu + 2 * B) * mu + C)
    t1, t3 = theta(spec, side)
    return ModeSet(side, lam, mu, eigvec(spec, side, mu), t1, t3, float(gap))


def splitting_dimensions(spec, side, lam):
    """(number of roots with Re mu > 0, number with Re mu < 0)."""
    if essential_spectrum_margin(spec, lam) <= 0:
        warnings.warn(f"lam={lam} is not inside the consistent splitting region", stacklevel=2)
    B, C, D = char_coeffs(spec, side, complex(lam))
    r = cubic_roots(B, C, D)
    re = np.real(r)
    if np.any(np.abs(re) < 1e-12):
        raise SplittingError(f"root on the imaginary axis at lam={lam}: {r}")
    return int(np.sum(re > 0)), int(np.sum(re < 0))


def branch_points(spec, side):
    """Values of lam where two roots of pi coincide (zeros of the
    discriminant, a quartic in lam)."""
    from numpy.polynomial import Polynomial as P
    a, b = spec.end_data(side)
    lam = P([0.0, 1.0])
    B = (lam + spec.L * b) / a
    Cc = P([-1.0])
    D = -lam / a
    disc = B * B * Cc * Cc - 4 * Cc ** 3 - 4 * B ** 3 * D - 27 * D * D + 18 * B * Cc * D
    return disc.roots()


def dispersion_curve(spec, side, xi):
    a, b = spec.end_data(side)
    xi = np.asarray(xi, dtype=float)
    return -1j * a * xi - spec.L * b * xi ** 2 / (1 + xi ** 2)


def essential_spectrum_margin(spec, lam, n=4001, xmax=1e3):
    """Signed distance of lam to the dispersion curves: positive when lam lies
    to the right of both (inside the consistent splitting region)."""
    lam = complex(lam)
    t = np.linspace(-1, 1, n)
    xi = np.sinh(t * np.arcsinh(xmax))
    out = np.inf
    for side in ("plus", "minus"):
        a, b = spec.end_data(side)
        c = dispersion_curve(spec, side, xi)
        d = np.min(np.abs(c - lam))
        # refine locally around the closest sample
        k = int(np.argmin(np.abs(c - lam)))
        res = minimize_scalar(lambda z: abs(dispersion_curve(spec, side, z) - lam),
                              bounds=(xi[max(k - 1, 0)], xi[min(k + 1, n - 1)]),
                              method="bounded", options={"xatol": 1e-13})
        d = min(d, float(res.fun))
        x0 = -lam.imag / a
        edge = -spec.L * b * x0 ** 2 / (1 + x0 ** 2)
        sgn = 1.0 if lam.real > edge else -1.0
        if lam == 0:
            sgn, d = 1.0, 0.0
        out = min(out, sgn * d)
    return float(out)
