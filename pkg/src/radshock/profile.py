"""Stationary shock profile by phase-plane shooting.

With Z' = -LQ = F(U), F(u) = f(u) - f(u_pm), the profile equations become the
planar system Z' = F(U), (f(U))' = Z - LM(U).  Both saddle manifolds are
followed in the desingularized time dtau = dx / f'(U):

    dZ/dtau = f'(U) F(U),   dU/dtau = Z - LM(U),   dx/dtau = f'(U)

which stays regular where f'(U) = 0.  Each branch ends at U = u* where Z' = -m.
"""
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .model import coefficient_functions

TAIL_TOL = 1e-10
LAUNCH_REL = 1e-7


class ProfileError(RuntimeError):
    pass


class GeometryError(ProfileError):
    pass


class ShootingError(ProfileError):
    pass


class MatchingError(ProfileError):
    pass


@dataclass
class FluxGeometry:
    u_star: float
    m: float
    h_plus: object
    h_minus: object
    H: object


def flux_geometry(spec):
    """u*, m and the branch inverses h+, h- of F and the inverse H of L M(u)."""
    up, um = spec.u_plus, spec.u_minus
    dfp, dfm = spec.df(up), spec.df(um)
    if not (dfp < 0 < dfm):
        raise GeometryError(f"df has no sign change on [u+, u-]: df(u+)={dfp}, df(u-)={dfm}")
    u_star = brentq(spec.df, up, um, xtol=1e-16, rtol=4 * np.finfo(float).eps)
    fpm = 0.5 * (spec.f(up) + spec.f(um))
    m = float(fpm - spec.f(u_star))
    if m <= 0:
        raise GeometryError("m <= 0")

    def F(u):
        return spec.f(u) - fpm

    def h_plus(y):
        if y >= 0:
            return up
        if y <= -m:
            return u_star
        return brentq(lambda u: F(u) - y, up, u_star, xtol=1e-16)

    def h_minus(y):
        if y >= 0:
            return um
        if y <= -m:
            return u_star
        return brentq(lambda u: F(u) - y, u_star, um, xtol=1e-16)

    LMp, LMm = spec.L * spec.M(up), spec.L * spec.M(um)
    lo, hi = sorted((LMp, LMm))
    width = hi - lo

    def H(z):
        a, b = up - (um - up), um + (um - up)
        return brentq(lambda u: spec.L * spec.M(u) - z, a, b, xtol=1e-16)

    return FluxGeometry(float(u_star), m, h_plus, h_minus, H)


@dataclass
class PhaseTrajectory:
    """Saddle manifold branch.  Z, Zp sampled along the trajectory; x is the
    abscissa relative to the launch point; sol is the dense solution in tau."""

    side: str
    tau: np.ndarray
    Z: np.ndarray
    Zp: np.ndarray
    U: np.ndarray
    x: np.ndarray
    sol: object
    launch: dict
    terminal: dict
    u_star: float
    m: float


def _rhs(spec, fpm):
    f, df, M, L = spec.poly("f"), spec.poly("df"), spec.poly("M"), spec.L

    def rhs(t, y):
        Z, U, _ = y
        a = df(U)
        return [a * (f(U) - fpm), Z - L * M(U), a]

    return rhs


def saddle_data(spec, side):
    """Saddle point, unstable eigenvalue (tau-time) and eigenvector in (Z, U)."""
    u = spec.u_plus if side == "plus" else spec.u_minus
    a, b = spec.end_data(side)
    Lb = spec.L * b
    mu = 0.5 * (-Lb + np.sqrt(Lb * Lb + 4 * a * a))
    v = np.array([a * a / mu, 1.0])
    v /= np.hypot(*v)
    if side == "minus":
        v = -v
    return {"Z0": spec.L * spec.M(u), "U0": u, "mu": mu, "v": v, "rate": mu / a,
            "J": np.array([[0.0, a * a], [1.0, -Lb]])}


def shoot_saddle(spec, side, step=None, rtol=1e-13, atol=1e-15, direction=1.0):
    """Follow the unstable manifold of the saddle (LM(u_pm), u_pm) until U = u*.

    step bounds the tau step (None = adaptive only).  direction=-1 launches
    along the wrong half of the eigendirection and is rejected.
    """
    geo = flux_geometry(spec)
    u_star, m = geo.u_star, geo.m
    fpm = 0.5 * (spec.f(spec.u_plus) + spec.f(spec.u_minus))
    sd = saddle_data(spec, side)
    dLM = abs(spec.L * (spec.M(spec.u_minus) - spec.M(spec.u_plus)))
    delta = LAUNCH_REL * dLM
    y0 = [sd["Z0"] + direction * delta * sd["v"][0], sd["U0"] + direction * delta * sd["v"][1], 0.0]
    width = spec.u_minus - spec.u_plus
    node_tol = 1e-13 * width
    sgn = 1.0 if side == "plus" else -1.0   # sign of U - u_star along the branch... before u*

    def ev_star(t, y):
        return y[1] - u_star
    ev_star.terminal = True

    def ev_node(t, y):
        return abs(y[1] - u_star) - node_tol
    ev_node.terminal = True

    def ev_wrong(t, y):
        # Z' = F(U) must stay <= 0; F > 0 once U leaves [u+, u-]
        return -(spec.f(y[1]) - fpm) + 1e-3 * delta * abs(sd["J"][0, 1])
    ev_wrong.terminal = True

    fpp = spec.d2f(u_star)
    Lbs = spec.L * spec.dM(u_star)
    disc = Lbs * Lbs - 4 * m * fpp
    slow = (-Lbs + np.sqrt(disc)) / 2 if disc > 0 else -Lbs / 2
    tau_max = 80.0 / abs(slow) + 80.0 / sd["mu"]
    # dense output is only as good as the step is short relative to the
    # slowest time scale; keep the interpolant accurate near the node
    kw = {"max_step": step if step is not None else 0.05 / max(abs(slow), 1e-300)}
    sol = solve_ivp(_rhs(spec, fpm), (0.0, tau_max), y0, method="DOP853", rtol=rtol,
                    atol=atol, dense_output=True, events=[ev_star, ev_node, ev_wrong], **kw)
    if sol.status == -1:
        raise ShootingError(f"{side}: integration failed: {sol.message}")
    if len(sol.t_events[2]):
        raise ShootingError(f"{side}: trajectory left the strip -m <= Z' <= 0 upward "
                            f"(Z' > 0 at tau={sol.t_events[2][0]:.3g}, step {len(sol.t)})")
    hit_star = len(sol.t_events[0]) > 0
    hit_node = len(sol.t_events[1]) > 0
    if not (hit_star or hit_node):
        raise ShootingError(f"{side}: Z' did not reach -m within tau budget {tau_max:.3g}")
    Z, U, x = sol.y
    Zp = spec.f(U) - fpm
    if hit_star:
        kind = "crossing"
        x_end = x[-1]
    else:
        # remaining x along the slow eigendirection of the node
        kind = "node"
        x_end = x[-1] + fpp * (U[-1] - u_star) / (-slow)
    term = {"kind": kind, "tau": sol.t[-1], "Z": Z[-1], "U": U[-1], "x": x_end, "Zp": -m}
    return PhaseTrajectory(side, sol.t, Z, Zp, U, x, sol.sol,
                           {"delta": delta, "rate": sd["rate"], "U": y0[1], "Z": y0[0]},
                           term, u_star, m)


@dataclass
class Match:
    Z_hat: float
    Y_hat: float
    subshock: bool


def _phi(tr, z):
    """Z' on branch tr as a function of Z (Z monotone along the branch)."""
    Zs = tr.Z if tr.Z[-1] > tr.Z[0] else tr.Z[::-1]
    Zps = tr.Zp if tr.Z[-1] > tr.Z[0] else tr.Zp[::-1]
    return np.interp(z, Zs, Zps)


def match_trajectories(tp, tm, tol=1e-10):
    """Intersection of the graphs Z' = phi_+(Z) and Z' = phi_-(Z)."""
    if tp.side == tm.side or not (tp.side == "plus" and tm.side == "minus"):
        raise MatchingError("need one plus and one minus trajectory")
    m = tp.m
    zp_end, zm_end = tp.terminal["Z"], tm.terminal["Z"]
    scale = max(abs(tp.Z[0] - tm.Z[0]), 1e-300)
    if tp.terminal["kind"] == "node" and tm.terminal["kind"] == "node":
        if abs(zp_end - zm_end) > 1e-6 * scale:
            raise MatchingError("node terminals disagree")
        return Match(0.5 * (zp_end + zm_end), -m, False)
    lo, hi = zm_end, zp_end
    if not lo < hi:
        raise MatchingError(f"graphs do not overlap in Z: Z-(0)={lo!r}, Z+(0)={hi!r}")
    g = lambda z: _phi(tp, z) - _phi(tm, z)
    if g(lo) * g(hi) > 0:
        raise MatchingError("no transversal intersection in the overlap")
    z = brentq(g, lo, hi, xtol=tol * scale)
    y = float(_phi(tp, z))
    return Match(z, y, y > -m + 1e-8 * m)


@dataclass
class Profile:
    """Sampled profile on a uniform grid, normalized so a(0) = 0."""

    x: np.ndarray
    U: np.ndarray
    Q: np.ndarray
    Z: np.ndarray
    Up: np.ndarray
    a: np.ndarray
    b: np.ndarray
    da: np.ndarray
    subshock: bool
    eta_decay: dict
    x_match: float
    shift: float
    u_star: float
    m: float
    h: float
    computed: tuple = (None, None)
    meta: dict = field(default_factory=dict)

    @property
    def X(self):
        return float(self.x[-1])

    @property
    def i0(self):
        return int(np.argmin(np.abs(self.x)))

    @property
    def aprime0(self):
        return float(self.da[self.i0])

    @property
    def b0(self):
        return float(self.b[self.i0])

    def wbar_prime(self, L):
        """Columns (U', Q', -Q) of the derivative of the profile, a lambda = 0 solution."""
        return np.vstack([self.Up, -self.a * self.Up / L, -self.Q])


def _sample_branch(spec, tr, xs):
    """Sample the branch at abscissae xs (relative to the branch's own x)."""
    xk = tr.x
    inc = xk[-1] > xk[0]
    xo = xk if inc else xk[::-1]
    to = tr.tau if inc else tr.tau[::-1]
    tau = np.interp(xs, xo, to)
    # bracket each target between neighbouring solver points
    j = np.clip(np.searchsorted(xo, xs), 1, len(xo) - 1)
    ta, tb = to[j - 1], to[j]
    t_lo, t_hi = np.minimum(ta, tb), np.maximum(ta, tb)
    for _ in range(30):
        y = tr.sol(tau)
        r = y[2] - xs
        if np.all(np.abs(r) <= 1e-14 * np.maximum(1.0, np.abs(xs))):
            break
        d = spec.df(y[1])
        with np.errstate(divide="ignore", invalid="ignore"):
            new = tau - r / d
        bad = ~np.isfinite(new) | (new < t_lo) | (new > t_hi)
        new[bad] = 0.5 * (t_lo[bad] + t_hi[bad])
        # keep the bracket consistent with the sign of r
        up = (r > 0) == (d > 0)
        t_hi = np.where(up, np.minimum(t_hi, tau), t_hi)
        t_lo = np.where(up, t_lo, np.maximum(t_lo, tau))
        tau = new
    y = tr.sol(tau)
    return y[0], y[1]


def reconstruct_profile(spec, tp, tm, match, h=1e-3, tail_tol=TAIL_TOL):
    """Concatenate both branches on a uniform grid and attach exponential tails."""
    fpm = 0.5 * (spec.f(spec.u_plus) + spec.f(spec.u_minus))
    L = spec.L
    if match.subshock:
        # branches end where Z = Z_hat on each graph
        x_ends = {}
        for tr in (tp, tm):
            i = np.argmin(np.abs(tr.Z - match.Z_hat))
            x_ends[tr.side] = np.interp(match.Z_hat, *(
                (tr.Z, tr.x) if tr.Z[-1] > tr.Z[0] else (tr.Z[::-1], tr.x[::-1])))
    else:
        x_ends = {"plus": tp.terminal["x"], "minus": tm.terminal["x"]}
    # branch-local abscissa: xi = x_branch - x_end, so the junction sits at 0
    spans = {}
    for tr in (tp, tm):
        xl = -x_ends[tr.side]                     # launch abscissa after the shift
        rate = tr.launch["rate"]                  # d log|U - u_pm| / dx
        dU0 = abs(tr.launch["U"] - (spec.u_plus if tr.side == "plus" else spec.u_minus))
        ext = np.log(dU0 / tail_tol) / abs(rate)
        spans[tr.side] = (xl, abs(xl) + ext)
    X = max(s[1] for s in spans.values())
    n = int(np.ceil(X / h))
    x = np.arange(-n, n + 1) * h
    U = np.empty_like(x)
    Z = np.empty_like(x)
    Up = np.empty_like(x)
    computed = {}
    for tr in (tp, tm):
        s = 1.0 if tr.side == "plus" else -1.0
        u_end = spec.u_plus if tr.side == "plus" else spec.u_minus
        xl = spans[tr.side][0]
        sel = (s * x > 0) & (s * x <= s * xl)
        xs = x[sel]
        Zs, Us = _sample_branch(spec, tr, xs + x_ends[tr.side])
        Z[sel], U[sel] = Zs, Us
        Up[sel] = (Zs - L * spec.M(Us)) / spec.df(Us)
        computed[tr.side] = xl
        tail = s * x > s * xl
        k = tr.launch["rate"]
        e = np.exp(k * (x[tail] - xl))
        U[tail] = u_end + (tr.launch["U"] - u_end) * e
        Z[tail] = L * spec.M(u_end) + (tr.launch["Z"] - L * spec.M(u_end)) * e
        Up[tail] = k * (U[tail] - u_end)
    i0 = n
    if match.subshock:
        U[i0] = 0.5 * (spec.u_plus + spec.u_minus)
        Z[i0] = match.Z_hat
        Up[i0] = np.nan
    else:
        us = tp.u_star
        fpp = spec.d2f(us)
        Lbs = L * spec.dM(us)
        U[i0] = us
        Z[i0] = L * spec.M(us)
        Up[i0] = (-Lbs + np.sqrt(Lbs * Lbs - 4 * fpp * tp.m)) / (2 * fpp)
    Q = (fpm - spec.f(U)) / L
    prof = Profile(x=x, U=U, Q=Q, Z=Z, Up=Up, a=spec.df(U), b=spec.dM(U), da=spec.d2f(U) * Up,
                   subshock=match.subshock, eta_decay={}, x_match=0.0,
                   shift=float(x_ends["plus"]), u_star=tp.u_star, m=tp.m, h=h,
                   computed=(computed["minus"], computed["plus"]))
    coefficient_functions(spec, prof)
    prof.eta_decay = measure_tail_rates(prof, spec)
    return prof


def _fit_rate(x, v):
    ok = v > 0
    return -np.polyfit(np.abs(x[ok]), np.log(v[ok]), 1)[0]


def measure_tail_rates(prof, spec, window=(1e-7, 1e-3), stride_len=1.0, orders=4):
    """Exponential decay rates of U - u_pm, Q and derivatives up to `orders`,
    fitted on the shooting region (not on the attached tails)."""
    out = {}
    stride = max(1, int(round(stride_len / prof.h)))
    for side, lim in (("minus", prof.computed[0]), ("plus", prof.computed[1])):
        s = 1.0 if side == "plus" else -1.0
        u_end = spec.u_plus if side == "plus" else spec.u_minus
        d = np.abs(prof.U - u_end)
        sel = (s * prof.x > 0) & (s * prof.x <= s * lim) & (d > window[0]) & (d < window[1])
        idx = np.nonzero(sel)[0][::stride]
        xs, v = prof.x[idx], prof.U[idx] - u_end
        rates = {"U": _fit_rate(xs, np.abs(v)), "Q": _fit_rate(xs, np.abs(prof.Q[idx]))}
        H = stride * prof.h
        w = v.copy()
        xw = xs.copy()
        for k in range(1, orders + 1):
            w = np.diff(w) / H
            xw = 0.5 * (xw[1:] + xw[:-1])
            rates[f"d{k}U"] = _fit_rate(xw, np.abs(w))
        out[side] = rates
    return out


def theoretical_tail_rate(spec, side):
    """Hyperbolic eigenvalue of A_Q = [[0, 1], [1, -Lb/a]] governing the decay."""
    a, b = spec.end_data(side)
    c = spec.L * b / a
    roots = np.roots([1.0, c, -1.0])
    r = roots[roots < 0] if side == "plus" else roots[roots > 0]
    return float(abs(r[0]))


def build_profile(spec, h=1e-3, rtol=1e-13, atol=1e-15, tail_tol=TAIL_TOL):
    tp = shoot_saddle(spec, "plus", rtol=rtol, atol=atol)
    tm = shoot_saddle(spec, "minus", rtol=rtol, atol=atol)
    match = match_trajectories(tp, tm)
    return reconstruct_profile(spec, tp, tm, match, h=h, tail_tol=tail_tol)


def verify_profile(prof, spec):
    """Diagnostics: residual, monotonicity, U(0) - u*, LQ identity, tail rates."""
    L, h = spec.L, prof.h
    fpm = 0.5 * (spec.f(spec.u_plus) + spec.f(spec.u_minus))
    U, Z = prof.U, prof.Z
    F = spec.f(U) - fpm
    G = Z - L * spec.M(U)
    fU = spec.f(U)
    r1 = np.diff(Z) / h - 0.5 * (F[1:] + F[:-1])
    r2 = np.diff(fU) / h - 0.5 * (G[1:] + G[:-1])
    if prof.subshock:
        j = prof.i0
        r1[j - 1:j + 1] = 0
        r2[j - 1:j + 1] = 0
    dU = np.diff(U)
    viol = int(np.count_nonzero(dU >= 0))
    rates = {side: {k: float(v) for k, v in r.items()} for side, r in prof.eta_decay.items()}
    theo = {side: theoretical_tail_rate(spec, side) for side in ("plus", "minus")}
    rel = max(abs(v / theo[s] - 1) for s, r in rates.items() for v in r.values())
    return {
        "residual": float(max(np.abs(r1).max(), np.abs(r2).max())),
        "monotonicity_violations": viol,
        "U0_error": float(abs(U[prof.i0] - prof.u_star)),
        "LQ_identity": float(np.max(np.abs(L * prof.Q - (fpm - fU)))),
        "tail_rates": rates,
        "tail_rates_theory": theo,
        "tail_rate_max_rel_error": float(rel),
        "Up0": float(prof.Up[prof.i0]),
        "X_inf": prof.X,
        "subshock": bool(prof.subshock),
    }


CSV_COLUMNS = ("x", "U", "Q", "a", "b", "Z", "Up", "da")


def fmt(v):
    return format(float(v), ".17g")


def save_profile(prof, path_csv, path_json=None):
    cols = [getattr(prof, c) for c in CSV_COLUMNS]
    with open(path_csv, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in zip(*cols):
            fh.write(",".join(fmt(v) for v in row) + "\n")
    path_json = path_json or str(path_csv).rsplit(".", 1)[0] + ".json"
    meta = {"eta_decay": prof.eta_decay, "x_match": prof.x_match, "subshock": prof.subshock,
            "shift": prof.shift, "u_star": prof.u_star, "m": prof.m, "h": prof.h,
            "computed": list(prof.computed), "meta": prof.meta}
    with open(path_json, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path_csv, path_json


def load_profile(path_csv, path_json=None):
    data = np.loadtxt(path_csv, delimiter=",", skiprows=1, ndmin=2)
    path_json = path_json or str(path_csv).rsplit(".", 1)[0] + ".json"
    with open(path_json, encoding="utf-8") as fh:
        meta = json.load(fh)
    cols = {c: np.ascontiguousarray(data[:, i]) for i, c in enumerate(CSV_COLUMNS)}
    return Profile(**cols, subshock=meta["subshock"], eta_decay=meta["eta_decay"],
                   x_match=meta["x_match"], shift=meta["shift"], u_star=meta["u_star"],
                   m=meta["m"], h=meta["h"], computed=tuple(meta["computed"]), meta=meta["meta"])
