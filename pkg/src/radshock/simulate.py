"""Nonlinear runs of u_t + f(u)_x + L q_x = 0, -q_xx + q + M(u)_x = 0.

MUSCL (minmod) reconstruction with local Lax-Friedrichs flux, centered
-L q_x source, SSP-RK2 in time, tridiagonal solve for q.  A twin run started
from the unperturbed profile provides the discrete reference state.
"""
import math
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np
from numba import njit
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar


class SimError(RuntimeError):
    pass


class GuardError(SimError):
    pass


class TrackingError(SimError):
    pass


class CFLError(SimError):
    def __init__(self, msg, dt_max):
        super().__init__(msg)
        self.dt_max = dt_max


@dataclass
class SimConfig:
    amplitude: float = 1e-2          # relative to |u- - u+|
    kind: str = "gaussian"           # gaussian | bump | uprime | odd | even
    center: float = 0.0
    width: float = 2.0
    T_final: float = 400.0
    h: float = 0.02
    cfl: float = 0.45
    dt_log: float = 1.0
    X_dom: float = None
    k: int = 1
    M_w: float = 1.0
    delta: float = 0.1
    seed: int = 0


@dataclass
class SimState:
    x: np.ndarray
    h: float
    u: np.ndarray
    q: np.ndarray
    t: float
    alpha: float
    cfl: float


# ---------------------------------------------------------------- kernels

@njit(cache=True)
def _poly(c, u):
    s = 0.0
    for k in range(c.shape[0] - 1, -1, -1):
        s = s * u + c[k]
    return s


@njit(cache=True)
def _thomas(h, rhs, out):
    """(-d^2 + 1) q = rhs with q = 0 outside the grid, via Thomas."""
    n = rhs.shape[0]
    lo = -1.0 / (h * h)
    di = 1.0 + 2.0 / (h * h)
    cp = np.empty(n)
    dp = np.empty(n)
    cp[0] = lo / di
    dp[0] = rhs[0] / di
    for i in range(1, n):
        m = di - lo * cp[i - 1]
        cp[i] = lo / m
        dp[i] = (rhs[i] - lo * dp[i - 1]) / m
    out[n - 1] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        out[i] = dp[i] - cp[i] * out[i + 1]


@njit(cache=True)
def _elliptic(u, h, Mc, uL, uR, q):
    n = u.shape[0]
    rhs = np.empty(n)
    for i in range(n):
        ml = _poly(Mc, u[i - 1]) if i > 0 else _poly(Mc, uL)
        mr = _poly(Mc, u[i + 1]) if i < n - 1 else _poly(Mc, uR)
        rhs[i] = -(mr - ml) / (2 * h)
    _thomas(h, rhs, q)


@njit(cache=True)
def _minmod(a, b):
    if a * b <= 0.0:
        return 0.0
    return a if abs(a) < abs(b) else b


@njit(cache=True)
def _rhs(u, q, h, fc, dfc, L, uL, uR, out):
    """-(F_{i+1/2} - F_{i-1/2})/h - L (q_{i+1} - q_{i-1})/(2h); ghost cells hold
    the end states (inflow) and q = 0."""
    n = u.shape[0]
    g = np.empty(n + 4)
    g[0] = uL
    g[1] = uL
    g[n + 2] = uR
    g[n + 3] = uR
    for i in range(n):
        g[i + 2] = u[i]
    sl = np.empty(n + 2)
    for j in range(1, n + 3):
        sl[j - 1] = _minmod(g[j] - g[j - 1], g[j + 1] - g[j])
    # interfaces between ghost-extended cells j and j+1, j = 1..n+1
    F = np.empty(n + 1)
    for k in range(n + 1):
        j = k + 1
        ul = g[j] + 0.5 * sl[j - 1]
        ur = g[j + 1] - 0.5 * sl[j]
        s = max(abs(_poly(dfc, ul)), abs(_poly(dfc, ur)))
        F[k] = 0.5 * (_poly(fc, ul) + _poly(fc, ur)) - 0.5 * s * (ur - ul)
    for i in range(n):
        ql = q[i - 1] if i > 0 else 0.0
        qr = q[i + 1] if i < n - 1 else 0.0
        out[i] = -(F[i + 1] - F[i]) / h - L * (qr - ql) / (2 * h)
    return F[0], F[n]


@njit(cache=True)
def _step(u, q, h, dt, fc, dfc, Mc, L, uL, uR):
    """One SSP-RK2 step; q is refreshed for the new u.  Returns the boundary
    flux integral used for the conservation check."""
    n = u.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    q00 = q[0]
    q0n = q[n - 1]
    Fl1, Fr1 = _rhs(u, q, h, fc, dfc, L, uL, uR, k1)
    u1 = u + dt * k1
    q1 = np.empty(n)
    _elliptic(u1, h, Mc, uL, uR, q1)
    Fl2, Fr2 = _rhs(u1, q1, h, fc, dfc, L, uL, uR, k2)
    for i in range(n):
        u[i] = 0.5 * (u[i] + u1[i] + dt * k2[i])
    _elliptic(u, h, Mc, uL, uR, q)
    # boundary contributions of flux and of the telescoped centered source
    src1 = -L * (q0n - q00) / 2.0
    src2 = -L * (q1[n - 1] - q1[0]) / 2.0
    return 0.5 * dt * ((Fl1 - Fr1 + src1) + (Fl2 - Fr2 + src2))


# ---------------------------------------------------------------- API

def _coef_arrays(spec):
    return (np.array(spec.poly("f").coef, float), np.array(spec.poly("df").coef, float),
            np.array(spec.poly("M").coef, float))


def make_grid(X, h):
    n = int(round(2 * X / h))
    return -X + h * (np.arange(n) + 0.5)


def elliptic_solve(u, h, spec, uL=None, uR=None):
    """q for the current u (far-field q = 0, end states as ghost values)."""
    uL = spec.u_minus if uL is None else uL
    uR = spec.u_plus if uR is None else uR
    q = np.empty_like(u)
    _elliptic(np.ascontiguousarray(u, dtype=float), h, _coef_arrays(spec)[2], uL, uR, q)
    return q


def elliptic_residual(u, q, h, spec):
    Mg = np.concatenate([[spec.M(spec.u_minus)], spec.M(u), [spec.M(spec.u_plus)]])
    qg = np.concatenate([[0.0], q, [0.0]])
    r = -(qg[2:] - 2 * qg[1:-1] + qg[:-2]) / h ** 2 + q + (Mg[2:] - Mg[:-2]) / (2 * h)
    return float(np.max(np.abs(r)))


def max_dt(state, spec):
    return state.cfl * state.h / max(np.max(np.abs(spec.df(state.u))), 1e-300)


def hyperbolic_step(state, spec, dt=None):
    """Advance one step (in place copy).  Returns (new_state, boundary_mass_flux)."""
    dtm = max_dt(state, spec)
    if dt is None:
        dt = dtm
    elif dt > dtm * (1 + 1e-12):
        raise CFLError(f"dt={dt} exceeds the CFL limit", dtm)
    fc, dfc, Mc = _coef_arrays(spec)
    u = state.u.copy()
    q = state.q.copy()
    bflux = _step(u, q, state.h, dt, fc, dfc, Mc, spec.L, spec.u_minus, spec.u_plus)
    return SimState(state.x, state.h, u, q, state.t + dt, state.alpha, state.cfl), bflux


def profile_on(profile, x):
    """Profile values U(x) on an arbitrary grid (end states outside)."""
    return np.interp(x, profile.x, profile.U, left=profile.U[0], right=profile.U[-1])


def initial_perturbation(cfg, x, profile, spec):
    amp = cfg.amplitude * abs(spec.u_minus - spec.u_plus)
    z = (x - cfg.center) / cfg.width
    if cfg.kind == "gaussian":
        return amp * np.exp(-z * z)
    if cfg.kind == "bump":
        out = np.zeros_like(x)
        m = np.abs(z) < 1
        out[m] = amp * np.exp(1 - 1 / (1 - z[m] ** 2))
        return out
    if cfg.kind == "uprime":
        up = np.interp(x, profile.x, profile.Up)
        return amp * up / np.max(np.abs(up))
    if cfg.kind == "odd":
        return amp * z * np.exp(-z * z) * math.sqrt(2 * math.e)
    if cfg.kind == "even":
        return amp * (1 - 2 * z * z) * np.exp(-z * z)
    raise SimError(f"unknown perturbation class {cfg.kind!r}")


def _shifted(interp, x, a):
    return interp(x + a)


def track_shock_location(u, x, U_ref, guess=0.0, span=2.0, jump=None):
    """alpha = argmin_a ||u(. + a) - U_ref||_L2 by bounded Brent search
    (golden section with parabolic steps) on [guess - span, guess + span]."""
    h = x[1] - x[0]
    interp = PchipInterpolator(x, u, extrapolate=True)
    core = (x > x[0] + span + 1) & (x < x[-1] - span - 1)
    xc, Uc = x[core], U_ref[core]

    def obj(a):
        return float(np.sum((interp(xc + a) - Uc) ** 2) * h)

    lo, hi = guess - span, guess + span
    res = minimize_scalar(obj, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12, "maxiter": 500})
    a = float(res.x)
    if min(a - lo, hi - a) < 1e-3 * span:
        raise TrackingError(f"shift minimizer at bracket edge ({a:.4g})")
    return a


def mass_shift(u, U_ref, h, jump):
    return float(-np.sum(u - U_ref) * h / jump)


@dataclass
class DecayReport:
    t: np.ndarray
    L1: np.ndarray
    L2: np.ndarray
    Linf: np.ndarray
    alpha: np.ndarray
    alpha_mass: np.ndarray
    alpha_dot: np.ndarray
    q_ratio: np.ndarray
    fits: dict
    window: tuple
    sup_alpha: float
    mass_drift: float
    aborted: bool = False
    message: str = ""


@dataclass
class EnergyReport:
    t: np.ndarray
    E: np.ndarray
    dEdt: np.ndarray
    Hk2: np.ndarray
    L22: np.ndarray
    eta3: float
    C: float
    violations: int
    ratio_min: float
    ratio_max: float
    band: tuple
    k: int


def power_fit(t, y, window):
    """Least-squares slope of log y vs log(1 + t) on the window; returns
    (exponent p with y ~ (1+t)^-p, 95% half-width)."""
    m = (t >= window[0]) & (t <= window[1]) & (y > 0) & np.isfinite(y)
    X = np.log1p(t[m])
    Y = np.log(y[m])
    if m.sum() < 3:
        return float("nan"), float("nan")
    A = np.vstack([X, np.ones_like(X)]).T
    coef, res, *_ = np.linalg.lstsq(A, Y, rcond=None)
    n = len(X)
    r = Y - A @ coef
    s2 = float(r @ r) / max(n - 2, 1)
    se = math.sqrt(s2 / float(np.sum((X - X.mean()) ** 2)))
    return float(-coef[0]), 1.96 * se


def energy(u, a_hat, h, k, M_w, delta):
    """E = sum_{i<=k} delta^i <(1 + M_w |a_hat|^{2k+1}) d^i u, d^i u>."""
    w = 1.0 + M_w * np.abs(a_hat) ** (2 * k + 1)
    E = 0.0
    H = 0.0
    d = u
    for i in range(k + 1):
        E += delta ** i * float(np.sum(w * d * d) * h)
        H += float(np.sum(d * d) * h)
        d = np.gradient(d, h)
    return E, H


def _domain(cfg, spec, profile):
    if cfg.X_dom:
        return float(cfg.X_dom)
    eta = min(v["U"] for v in profile.eta_decay.values())
    a = max(abs(spec.df(spec.u_minus)), abs(spec.df(spec.u_plus)))
    return float(max(4 * a * cfg.T_final, 10.0 / eta))


def energy_order(cfg, profile):
    """Energy order actually monitored: k <= 4, and k = 1 when h does not
    resolve the tail scale (h > 1/(20 eta))."""
    k = cfg.k
    if k > 4:
        warnings.warn(f"energy order k={k} reduced to 4", stacklevel=2)
        k = 4
    eta = max(v["U"] for v in profile.eta_decay.values())
    if k > 1 and cfg.h > 1.0 / (20.0 * eta):
        warnings.warn(f"h={cfg.h} does not resolve derivatives of order {k}; "
                      "energy monitored with k=1", stacklevel=2)
        k = 1
    return k


def run(cfg, spec, profile, callback=None):
    """Perturbed run plus unperturbed twin.  Returns (DecayReport, EnergyReport)."""
    if cfg.T_final < 8 * cfg.dt_log:
        raise SimError("T_final too small for the fit window")
    kE = energy_order(cfg, profile)
    X = _domain(cfg, spec, profile)
    h = cfg.h
    x = make_grid(X, h)
    U0 = profile_on(profile, x)
    u = U0 + initial_perturbation(cfg, x, profile, spec)
    ub = U0.copy()
    fc, dfc, Mc = _coef_arrays(spec)
    L, uL, uR = spec.L, spec.u_minus, spec.u_plus
    q = elliptic_solve(u, h, spec)
    qb = elliptic_solve(ub, h, spec)
    jump = spec.jump
    width = abs(spec.u_minus - spec.u_plus)
    amax = max(abs(spec.df(uL)), abs(spec.df(uR)))
    # headroom for the perturbation amplitude and for overshoot of the end states
    dt = cfg.cfl * h / (amax * (1.05 + 2 * cfg.amplitude))
    nlog = max(1, int(round(cfg.dt_log / dt)))
    dt = cfg.dt_log / nlog
    nsteps = int(round(cfg.T_final / cfg.dt_log)) * nlog
    rows = []
    alpha = 0.0
    mass0 = float(np.sum(u - ub) * h)
    bsum = 0.0
    aborted, msg = False, ""
    for n in range(nsteps + 1):
        if n % nlog == 0:
            t = n * dt
            try:
                alpha = track_shock_location(u, x, ub, alpha)
            except TrackingError as e:
                aborted, msg = True, f"perturbation guard tripped at t={t:.3f}: {e}"
                break
            interp = PchipInterpolator(x, u)
            interq = PchipInterpolator(x, q)
            core = (x + alpha > x[0]) & (x + alpha < x[-1])
            pert = np.where(core, interp(x + alpha) - ub, 0.0)
            qp = np.where(core, interq(x + alpha) - qb, 0.0)
            sup = float(np.max(np.abs(pert)))
            if sup >= 0.5 * width or not np.isfinite(sup):
                aborted, msg = True, f"perturbation guard tripped at t={t:.3f}: sup={sup:.3e}"
                break
            ux = np.gradient(pert, h)
            a_hat = spec.df(interp(x + alpha))
            E, H = energy(pert, a_hat, h, kE, cfg.M_w, cfg.delta)
            rows.append((t, float(np.sum(np.abs(pert)) * h), math.sqrt(float(np.sum(pert ** 2)) * h),
                         sup, alpha, mass_shift(u, ub, h, jump),
                         math.sqrt(float(np.sum(qp ** 2)) * h),
                         math.sqrt(float(np.sum(ux ** 2)) * h), E, H))
            if callback:
                callback(rows[-1])
            if n == nsteps:
                break
        if np.max(np.abs(spec.df(u))) * dt > cfg.cfl * h * (1 + 1e-9):
            raise CFLError("CFL limit exceeded during the run", cfg.cfl * h / np.max(np.abs(spec.df(u))))
        bsum += _step(u, q, h, dt, fc, dfc, Mc, L, uL, uR)
        bsum -= _step(ub, qb, h, dt, fc, dfc, Mc, L, uL, uR)
    R = np.array(rows, dtype=float).reshape(-1, 10)
    t = R[:, 0]
    al = R[:, 4]
    adot = np.gradient(al, t) if len(t) > 2 else np.zeros_like(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        qratio = np.where(R[:, 7] > 0, R[:, 6] / R[:, 7], 0.0)
    window = (cfg.T_final / 4, cfg.T_final)
    fits = {}
    if not aborted:
        for name, col in (("L1", R[:, 1]), ("L2", R[:, 2]), ("Linf", R[:, 3]),
                          ("alpha_dot", np.abs(adot))):
            p, ci = power_fit(t, col, window)
            fits[name] = {"exponent": p, "ci95": ci}
    mass_drift = float(np.sum(u - ub) * h) - mass0
    sup_alpha = float(np.max(np.abs(al))) if len(al) else float("nan")
    dec = DecayReport(t, R[:, 1], R[:, 2], R[:, 3], al, R[:, 5], adot, qratio, fits, window,
                      sup_alpha, mass_drift, aborted, msg)
    en = energy_report(t, R[:, 8], R[:, 9], R[:, 2] ** 2, cfg, amax, k=kE)
    return dec, en


def energy_report(t, E, Hk2, L22, cfg, amax, slack=0.05, k=None):
    """Fit dE/dt = -eta3 E + C |u|^2 on the first half, take the smallest C
    that makes the inequality hold there, count violations on the second half."""
    k = cfg.k if k is None else k
    if len(t) < 5:
        z = np.zeros_like(t)
        return EnergyReport(t, E, z, Hk2, L22, 0.0, 0.0, 0, 1.0, 1.0, (0.0, 0.0), k)
    dE = np.gradient(E, t)
    half = len(t) // 2
    A = np.vstack([-E[:half], L22[:half]]).T
    coef = np.linalg.lstsq(A, dE[:half], rcond=None)[0] if np.any(E[:half] > 0) else np.zeros(2)
    eta3 = float(max(coef[0], 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        need = np.where(L22[:half] > 0, (dE[:half] + eta3 * E[:half]) / L22[:half], 0.0)
    C = float(max(np.max(need), 0.0))
    tol = slack * float(np.max(np.abs(dE))) if len(dE) else 0.0
    lhs = dE[half:] + eta3 * E[half:] - C * L22[half:]
    violations = int(np.count_nonzero(lhs > tol))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(Hk2 > 0, E / Hk2, np.nan)
    lo = min(1.0, cfg.delta ** k)
    hi = (1 + cfg.M_w * (1.05 * amax) ** (2 * k + 1)) * max(1.0, cfg.delta)
    r = ratio[np.isfinite(ratio)]
    return EnergyReport(t, E, dE, Hk2, L22, eta3, C, violations,
                        float(r.min()) if r.size else 1.0, float(r.max()) if r.size else 1.0,
                        (lo, hi), k)


def measure_decay(cfg, spec, profile, callback=None):
    return run(cfg, spec, profile, callback)[0]


def energy_monitor(cfg, spec, profile):
    return run(cfg, spec, profile)[1]
