"""Evans functions D-(lam), D+(lam) for the degenerate spectral system

    a u' = -(lam + a' + L b) u + L p,   q' = b u - p,   p' = -q,

with a(x) = f'(U(x)) vanishing at x = 0.

Decaying modes W1+ (from +inf) and W3- (from -inf) are integrated toward the
singular point, where the system is regular in s = ln|x| (dW/ds = x A(x)).
The fast modes W2-+ are integrated outward from x = 0 in the scaled variable
w_hat = W2 / rho, rho' = -(omega/a) rho, omega = lam + a' + L b.  The fast
mode is normalized by u2(-+1) = 1, and

    D-+(lam) = det(W1+, W2+-, W3-)(-+1) = -(q1 p3 - q3 p1)(0) / w_hat_u(-+1)

by Abel's formula.  The determinant is also evaluated at |y| = delta0 with
the slow local Taylor basis ("band" route) as an independent check.

Linear stiff integration uses 3-stage Radau IIA with step doubling.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from numpy.polynomial import chebyshev as C

from . import spectral

X_TINY = 1e-14
DELTA0 = 1e-2
RTOL = 1e-10


class EvansError(RuntimeError):
    pass


class SeedingError(EvansError):
    pass


class LocalBasisError(EvansError):
    pass


# ---------------------------------------------------------------- numba core

S6 = math.sqrt(6.0)
RC = np.array([(4 - S6) / 10, (4 + S6) / 10, 1.0])
RA = np.array([[(88 - 7 * S6) / 360, (296 - 169 * S6) / 1800, (-2 + 3 * S6) / 225],
               [(296 + 169 * S6) / 1800, (88 + 7 * S6) / 360, (-2 - 3 * S6) / 225],
               [(16 - S6) / 36, (16 + S6) / 36, 1.0 / 9]])


@njit(cache=True, nogil=True)
def _clenshaw(c, t):
    b1 = 0.0
    b2 = 0.0
    for k in range(c.shape[0] - 1, 0, -1):
        b1, b2 = 2 * t * b1 - b2 + c[k], b1
    return t * b1 - b2 + c[0]


@njit(cache=True, nogil=True)
def _coef(x, P, tab, cheb):
    """(a/x, a, a', b) at x.  P = (x0, h, r0, L); tab rows a, da, b;
    cheb rows: r = a/x, r', b on [-r0, r0]."""
    r0 = P[2]
    if abs(x) <= r0:
        t = x / r0
        r = _clenshaw(cheb[0], t)
        rp = _clenshaw(cheb[1], t)
        b = _clenshaw(cheb[2], t)
        return r, r * x, r + x * rp, b
    x0 = P[0]
    h = P[1]
    n = tab.shape[1]
    s = (x - x0) / h
    i = int(math.floor(s))
    if i < 1:
        i = 1
    if i > n - 3:
        i = n - 3
    t = s - i
    if t < -1.0:
        t = -1.0
    if t > 2.0:
        t = 2.0
    w0 = -t * (t - 1) * (t - 2) / 6
    w1 = (t + 1) * (t - 1) * (t - 2) / 2
    w2 = -(t + 1) * t * (t - 2) / 2
    w3 = (t + 1) * t * (t - 1) / 6
    a = w0 * tab[0, i - 1] + w1 * tab[0, i] + w2 * tab[0, i + 1] + w3 * tab[0, i + 2]
    da = w0 * tab[1, i - 1] + w1 * tab[1, i] + w2 * tab[1, i + 1] + w3 * tab[1, i + 2]
    b = w0 * tab[2, i - 1] + w1 * tab[2, i] + w2 * tab[2, i + 1] + w3 * tab[2, i + 2]
    return a / x, a, da, b


@njit(cache=True, nogil=True)
def _mat(mode, t, lam, sg, P, tab, cheb, M):
    """System matrix.  mode 0: x variable; 1: s = ln|x|, x = sg e^s;
    2: scaled fast mode w_hat in s."""
    L = P[3]
    if mode == 0:
        x = t
    else:
        x = sg * math.exp(t)
    r, a, da, b = _coef(x, P, tab, cheb)
    om = lam + da + L * b
    for i in range(3):
        for j in range(3):
            M[i, j] = 0.0
    if mode == 0:
        M[0, 0] = -om / a
        M[0, 2] = L / a
        M[1, 0] = b
        M[1, 2] = -1.0
        M[2, 1] = -1.0
    elif mode == 1:
        M[0, 0] = -om / r
        M[0, 2] = L / r
        M[1, 0] = x * b
        M[1, 2] = -x
        M[2, 1] = -x
    else:
        M[0, 2] = L / r
        M[1, 0] = x * b
        M[1, 1] = om / r
        M[1, 2] = -x
        M[2, 1] = -x
        M[2, 2] = om / r


@njit(cache=True, nogil=True)
def _solve(A, y):
    n = A.shape[0]
    for k in range(n):
        p = k
        best = abs(A[k, k])
        for i in range(k + 1, n):
            v = abs(A[i, k])
            if v > best:
                best = v
                p = i
        if p != k:
            for j in range(n):
                A[k, j], A[p, j] = A[p, j], A[k, j]
            y[k], y[p] = y[p], y[k]
        piv = A[k, k]
        for i in range(k + 1, n):
            f = A[i, k] / piv
            if f != 0:
                for j in range(k, n):
                    A[i, j] -= f * A[k, j]
                y[i] -= f * y[k]
    for k in range(n - 1, -1, -1):
        s = y[k]
        for j in range(k + 1, n):
            s -= A[k, j] * y[j]
        y[k] = s / A[k, k]


@njit(cache=True, nogil=True)
def _radau_step(mode, t, h, y, lam, sg, P, tab, cheb, RA, RC, out):
    Ms = np.empty((3, 3, 3), dtype=np.complex128)
    M = np.empty((3, 3), dtype=np.complex128)
    for j in range(3):
        _mat(mode, t + RC[j] * h, lam, sg, P, tab, cheb, M)
        Ms[j] = M
    A = np.zeros((9, 9), dtype=np.complex128)
    rhs = np.empty(9, dtype=np.complex128)
    for i in range(3):
        for j in range(3):
            c = h * RA[i, j]
            for r in range(3):
                for s in range(3):
                    A[3 * i + r, 3 * j + s] = -c * Ms[j, r, s]
        for r in range(3):
            A[3 * i + r, 3 * i + r] += 1.0
            rhs[3 * i + r] = y[r]
    _solve(A, rhs)
    for r in range(3):
        out[r] = rhs[6 + r]


@njit(cache=True, nogil=True)
def _integrate(mode, t0, t1, y0, lam, sg, P, tab, cheb, RA, RC, rtol, h0, hmax, maxsteps):
    """Adaptive Radau IIA from t0 to t1.  Returns (y unit-normalized, log of
    the accumulated norm, accepted steps, status)."""
    y = y0.copy()
    nrm = 0.0
    for r in range(3):
        nrm = max(nrm, abs(y[r]))
    logs = 0.0
    if nrm == 0.0:
        return y, logs, 0, 0
    for r in range(3):
        y[r] /= nrm
    logs = math.log(nrm)
    t = t0
    direction = 1.0 if t1 > t0 else -1.0
    h = min(abs(h0), abs(t1 - t0)) * direction
    yf = np.empty(3, dtype=np.complex128)
    ya = np.empty(3, dtype=np.complex128)
    yb = np.empty(3, dtype=np.complex128)
    nacc = 0
    ntot = 0
    while (t1 - t) * direction > 0:
        ntot += 1
        if ntot > maxsteps:
            return y, logs, nacc, 1
        if (t + h - t1) * direction > 0:
            h = t1 - t
        _radau_step(mode, t, h, y, lam, sg, P, tab, cheb, RA, RC, yf)
        _radau_step(mode, t, 0.5 * h, y, lam, sg, P, tab, cheb, RA, RC, ya)
        _radau_step(mode, t + 0.5 * h, 0.5 * h, ya, lam, sg, P, tab, cheb, RA, RC, yb)
        err = 0.0
        sc = 0.0
        for r in range(3):
            err = max(err, abs(yb[r] - yf[r]))
            sc = max(sc, abs(yb[r]))
        if not (sc > 0.0) or not math.isfinite(sc):
            return y, logs, nacc, 2
        err = err / 31.0 / sc
        if err <= rtol:
            t = t + h
            nacc += 1
            for r in range(3):
                y[r] = yb[r] + (yb[r] - yf[r]) / 31.0
            nrm = 0.0
            for r in range(3):
                nrm = max(nrm, abs(y[r]))
            for r in range(3):
                y[r] /= nrm
            logs += math.log(nrm)
        if err == 0.0:
            fac = 5.0
        else:
            fac = min(5.0, max(0.2, 0.9 * (rtol / err) ** (1.0 / 6.0)))
        h = h * fac
        if abs(h) > hmax:
            h = hmax * direction
        if abs(h) < 1e-14 * max(1.0, abs(t)):
            return y, logs, nacc, 3
    return y, logs, nacc, 0


# ---------------------------------------------------------------- context

@dataclass
class EvansContext:
    """Immutable coefficient data derived from a profile."""

    spec: object
    profile: object
    P: np.ndarray
    tab: np.ndarray
    cheb: np.ndarray
    alpha: np.ndarray      # Taylor coefficients of a at 0 (alpha[0] = 0)
    beta: np.ndarray       # Taylor coefficients of b at 0
    X: float
    fit_error: float
    delta0: float = DELTA0
    rtol: float = RTOL
    x_tiny: float = X_TINY
    hmax: float = 1.0
    maxsteps: int = 200000

    @property
    def aprime0(self):
        return float(self.alpha[1])

    @property
    def b0(self):
        return float(self.beta[0])

    def nu(self, lam):
        L = self.spec.L
        return (lam + self.aprime0 + L * self.b0) / abs(self.aprime0)

    def coef(self, x):
        return _coef(float(x), self.P, self.tab, self.cheb)


def make_context(spec, profile, r0=1.0, deg=40, ntaylor=12, **kw):
    if profile.subshock:
        raise EvansError("profile has a subshock; the Evans construction needs a smooth profile")
    x = profile.x
    sel = (np.abs(x) <= r0 + 1e-12) & (np.abs(x) >= 1e-3 - 1e-15)
    i0 = profile.i0
    xs = np.concatenate([x[sel], [0.0]])
    rs = np.concatenate([profile.a[sel] / x[sel], [profile.da[i0]]])
    t = xs / r0
    cr = C.chebfit(t, rs, deg)
    sb = np.abs(x) <= r0 + 1e-12
    cb = C.chebfit(x[sb] / r0, profile.b[sb], deg)
    crp = C.chebder(cr) / r0
    crp = np.concatenate([crp, [0.0]])
    err = max(np.max(np.abs(C.chebval(t, cr) - rs)),
              np.max(np.abs(C.chebval(x[sb] / r0, cb) - profile.b[sb])))
    if err > 1e-9:
        raise EvansError(f"local Chebyshev fit near x=0 is poor (max error {err:.2e})")
    cheb = np.vstack([cr, crp, cb])
    # Taylor coefficients at 0: a = sum alpha_k x^k with alpha_k = r_{k-1}
    rpoly = C.cheb2poly(cr)[:ntaylor] / r0 ** np.arange(min(len(cr), ntaylor))
    bpoly = C.cheb2poly(cb)[:ntaylor] / r0 ** np.arange(min(len(cb), ntaylor))
    alpha = np.concatenate([[0.0], rpoly])
    tab = np.vstack([profile.a, profile.da, profile.b])
    P = np.array([x[0], profile.h, r0, spec.L])
    return EvansContext(spec, profile, P, np.ascontiguousarray(tab), np.ascontiguousarray(cheb),
                        alpha, bpoly, float(profile.X), float(err), **kw)


# ---------------------------------------------------------------- modes

@dataclass
class ModeSolution:
    """W stored unit-normalized; true solution = W * exp(scale_log)."""

    x: float
    W: np.ndarray
    scale_log: complex
    origin: str
    steps: int = 0

    def true(self):
        return self.W * np.exp(self.scale_log)


def seed_at_infinity(ctx, side, lam, mode_index=3):
    """Asymptotic decaying mode at x = +-X_inf: value V_j(lam), with the
    factor e^{mu_j x} carried in scale_log."""
    ms = spectral.char_roots(ctx.spec, side, lam)
    mu = ms.mu[mode_index - 1]
    sgn = 1.0 if side == "plus" else -1.0
    # decaying toward x -> sgn*inf means sgn*Re(mu) < 0; only the fast
    # mode 3 does this in the splitting region
    if mode_index != 3 or sgn * mu.real >= 0:
        raise SeedingError(f"mode {mode_index} on the {side} side does not decay at "
                           f"{'+' if sgn > 0 else '-'}inf (mu = {mu})")
    X = sgn * ctx.X
    return ModeSolution(X, ms.V[:, mode_index - 1].astype(complex), complex(mu * X),
                        f"{side}-inf mode {mode_index}")


def _run(ctx, mode, t0, t1, y, lam, sg, h0=0.05):
    yo, logs, n, status = _integrate(mode, float(t0), float(t1), np.asarray(y, np.complex128),
                                     complex(lam), float(sg), ctx.P, ctx.tab, ctx.cheb, RA, RC,
                                     ctx.rtol, h0, ctx.hmax, ctx.maxsteps)
    if status == 1:
        raise EvansError(f"step budget exhausted integrating mode {mode} from {t0} to {t1}")
    if status == 2:
        raise EvansError(f"non-finite values integrating mode {mode} at lam={lam}")
    if status == 3:
        raise EvansError(f"step size underflow (mode {mode}); try a larger delta0")
    return yo, logs, n


def integrate_mode(ctx, ms, lam, to):
    """Advance a mode solution to abscissa `to` (same sign as ms.x, or 0 for
    the one-sided limit at the singular point).  Uses x as variable for
    |x| >= 1 and s = ln|x| inside."""
    x0 = ms.x
    sg = 1.0 if x0 > 0 else -1.0
    if to != 0 and np.sign(to) != sg:
        raise EvansError("integrate_mode does not cross x = 0; use cross_singularity")
    target = abs(to) if to != 0 else ctx.x_tiny
    W = ms.W
    logs = ms.scale_log
    n = 0
    ax = abs(x0)
    if ax > 1.0:
        stop = sg * max(target, 1.0)
        W, l, k = _run(ctx, 0, x0, stop, W, lam, sg)
        logs += l
        n += k
        ax = abs(stop)
    if target < ax:
        W, l, k = _run(ctx, 1, math.log(ax), math.log(target), W, lam, sg)
        logs += l
        n += k
    elif target > ax:
        if target <= 1.0:
            W, l, k = _run(ctx, 1, math.log(ax), math.log(target), W, lam, sg)
        else:
            if ax < 1.0:
                W, l, k0 = _run(ctx, 1, math.log(ax), 0.0, W, lam, sg)
                logs += l
                n += k0
                ax = 1.0
            W, l, k = _run(ctx, 0, sg * ax, sg * target, W, lam, sg)
        logs += l
        n += k
    return ModeSolution(0.0 if to == 0 else float(to), W, logs, ms.origin, ms.steps + n)


def decaying_mode_at_zero(ctx, side, lam, stop=0.0):
    """W1+ (side='plus') or W3- (side='minus') carried from infinity to
    |x| = stop (0 = limit at the singular point)."""
    ms = seed_at_infinity(ctx, side, lam)
    sg = 1.0 if side == "plus" else -1.0
    return integrate_mode(ctx, ms, lam, sg * stop if stop else 0)


def fast_mode(ctx, lam, side, to=(1.0,)):
    """Scaled fast mode w_hat = W2 / rho on the `side` of 0 ('minus' for x<0),
    integrated outward from |x| = x_tiny with w_hat -> (1, 0, 0).  Returns the
    true w_hat values at each |x| in `to` (increasing)."""
    sg = 1.0 if side == "plus" else -1.0
    s = math.log(ctx.x_tiny)
    W = np.array([1.0, 0.0, 0.0], dtype=complex)
    logs = 0.0
    out = []
    for target in to:
        W, l, _ = _run(ctx, 2, s, math.log(target), W, lam, sg)
        logs += l
        s = math.log(target)
        out.append(W * math.exp(logs))
    return out


# ---------------------------------------------------------------- local basis

def _series_slow(ctx, lam, q0, p0, K):
    L = ctx.spec.L
    al, be = ctx.alpha, ctx.beta
    u = np.zeros(K + 1, complex)
    q = np.zeros(K + 2, complex)
    p = np.zeros(K + 2, complex)
    q[0], p[0] = q0, p0
    for n in range(K + 1):
        den = lam + L * be[0] + (n + 1) * al[1]
        s = L * p[n]
        for k in range(2, n + 2):
            if k < len(al):
                s -= (n + 1) * al[k] * u[n + 1 - k]
        for k in range(1, n + 1):
            if k < len(be):
                s -= L * be[k] * u[n - k]
        u[n] = s / den
        bu = sum(be[k] * u[n - k] for k in range(0, n + 1) if k < len(be))
        q[n + 1] = (bu - p[n]) / (n + 1)
        p[n + 1] = -q[n] / (n + 1)
    return u, q[:K + 1], p[:K + 1]


@dataclass
class LocalBasis:
    lam: complex
    side: str
    nu: complex
    slow: list            # two (u, q, p) Taylor coefficient arrays
    fast_hat: np.ndarray  # scaled fast mode at |x| = delta0
    delta0: float
    order: int

    def slow_at(self, j, x):
        u, q, p = self.slow[j]
        pw = x ** np.arange(len(u))
        return np.array([u @ pw, q @ pw, p @ pw])

    def fast_at_delta0(self):
        """Fast local solution normalized to u = 1 at |x| = delta0."""
        return self.fast_hat / self.fast_hat[0]


def local_basis_near_zero(ctx, lam, side, K=8):
    """Two slow local solutions with (q, p)(0) = (1, 0), (0, 1) as Taylor
    series, and the fast solution at |x| = delta0."""
    L = ctx.spec.L
    om0 = lam + ctx.aprime0 + L * ctx.b0
    if abs(om0) < 1e-8 * max(1.0, abs(L * ctx.b0)):
        raise LocalBasisError(f"indicial degeneracy: lam + a'(0) + Lb(0) = {om0}")
    # keep the series below the first resonance lam + Lb0 + (n+1) a'(0) = 0
    Keff = K
    for n in range(K + 1):
        if (lam + L * ctx.b0 + (n + 1) * ctx.aprime0).real < 0.1 * abs(L * ctx.b0):
            Keff = max(n - 1, 1)
            break
    slow = [_series_slow(ctx, lam, 1.0, 0.0, Keff), _series_slow(ctx, lam, 0.0, 1.0, Keff)]
    fh = fast_mode(ctx, lam, side, to=(ctx.delta0,))[0]
    return LocalBasis(complex(lam), side, ctx.nu(lam), slow, fh, ctx.delta0, Keff)


def cross_singularity(ctx, ms, lam, basis=None):
    """Carry a mode that reached x = 0 from one side to the far side at
    |x| = delta0: (q, p) continue through 0 and the fast coefficient on the
    far side is set to zero."""
    far = "minus" if ms.x >= 0 and not ms.origin.startswith("minus") else "plus"
    if ms.origin.startswith("plus"):
        far = "minus"
    elif ms.origin.startswith("minus"):
        far = "plus"
    basis = basis or local_basis_near_zero(ctx, lam, far)
    y = (-1.0 if far == "minus" else 1.0) * ctx.delta0
    q0, p0 = ms.W[1], ms.W[2]
    W = q0 * basis.slow_at(0, y) + p0 * basis.slow_at(1, y)
    return ModeSolution(y, W, ms.scale_log, ms.origin + " crossed")


# ---------------------------------------------------------------- Evans

@dataclass
class EvansSample:
    """D_minus, D_plus are mantissas; true values are mantissa * exp(scale_log)."""

    lam: complex
    D_minus: complex
    D_plus: complex
    scale_log: float
    rel: float             # |q1 p3 - q3 p1| / (|(q1,p1)| |(q3,p3)|)
    steps: int = 0

    def value(self, side):
        return (self.D_minus if side == "minus" else self.D_plus) * math.exp(self.scale_log)


def _limit_data(ctx, lam):
    w1 = decaying_mode_at_zero(ctx, "plus", lam)
    w3 = decaying_mode_at_zero(ctx, "minus", lam)
    return w1, w3


def evans_pair(ctx, lam, method="limit"):
    """Both Evans functions at lam.  method='band' evaluates the determinant
    at y = -+delta0 with the slow Taylor representative of W1+."""
    lam = complex(lam)
    w1, w3 = _limit_data(ctx, lam)
    S = w1.scale_log + w3.scale_log
    q1, p1 = w1.W[1], w1.W[2]
    q3, p3 = w3.W[1], w3.W[2]
    wm_d, wm_1 = fast_mode(ctx, lam, "minus", to=(ctx.delta0, 1.0))
    wp_d, wp_1 = fast_mode(ctx, lam, "plus", to=(ctx.delta0, 1.0))
    if method == "limit":
        E = -(q1 * p3 - q3 * p1)
        Dm = E / wm_1[0]
        Dp = E / wp_1[0]
    elif method == "band":
        Dm = _band_det(ctx, lam, w1, "minus", wm_d) / wm_1[0]
        Dp = _band_det(ctx, lam, w1, "plus", wp_d) / wp_1[0]
        # band route carries W3- (or W1+) to delta0 with its own scale
        Dm, Dp = Dm * np.exp(-w3.scale_log), Dp * np.exp(-w3.scale_log)
    else:
        raise ValueError(method)
    rel = abs(q1 * p3 - q3 * p1) / (math.hypot(abs(q1), abs(p1)) * math.hypot(abs(q3), abs(p3)))
    ph = np.exp(1j * S.imag)
    return EvansSample(lam, complex(Dm * ph), complex(Dp * ph), float(S.real), float(rel),
                       w1.steps + w3.steps)


def band_columns(ctx, lam, side, w1=None):
    """The three determinant columns at y = -+delta0 (true scale except for
    the common exp(scale) factors returned separately)."""
    y = (-1.0 if side == "minus" else 1.0) * ctx.delta0
    w1 = w1 or decaying_mode_at_zero(ctx, "plus", lam)
    w3 = decaying_mode_at_zero(ctx, "minus", lam)
    wf = fast_mode(ctx, lam, side, to=(ctx.delta0,))[0]
    basis = local_basis_near_zero(ctx, lam, side)
    if side == "minus":
        c1 = cross_singularity(ctx, w1, lam, basis)
        c3 = integrate_mode(ctx, seed_at_infinity(ctx, "minus", lam), lam, y)
    else:
        c1 = integrate_mode(ctx, seed_at_infinity(ctx, "plus", lam), lam, y)
        c3 = cross_singularity(ctx, w3, lam, basis)
    return c1, wf, c3


def _band_det(ctx, lam, w1, side, wf):
    c1, _, c3 = band_columns(ctx, lam, side, w1)
    d = np.linalg.det(np.column_stack([c1.W, wf, c3.W]))
    return d * np.exp(c1.scale_log + c3.scale_log - w1.scale_log)


def evans_D(ctx, lam, side, method="limit"):
    s = evans_pair(ctx, lam, method)
    return s.value(side)


def derivative_formula(ctx, side="minus"):
    """d/dlam D-+(-+1, 0) = kappa3 L^-1 [u] det[[u1, u2], [p1, p2]](-+1),
    built from the computed modes at lam = 0."""
    spec, prof = ctx.spec, ctx.profile
    L = spec.L
    y = -1.0 if side == "minus" else 1.0
    w1 = decaying_mode_at_zero(ctx, "plus", 0.0)
    w3 = decaying_mode_at_zero(ctx, "minus", 0.0)
    # W_bar' at 0 = (U'(0), 0, -m/L); kappa from the p-components
    wb0p = -prof.Q[prof.i0]
    k1 = (w1.W[2] * np.exp(w1.scale_log)) / wb0p
    k3 = (w3.W[2] * np.exp(w3.scale_log)) / wb0p
    wb = prof.wbar_prime(L)
    iy = int(np.argmin(np.abs(prof.x - y)))
    u1, p1 = k1 * wb[0, iy], k1 * wb[2, iy]
    wh = fast_mode(ctx, 0.0, side, to=(1.0,))[0]
    u2, p2 = 1.0, wh[2] / wh[0]
    return k3 / L * spec.jump * (u1 * p2 - u2 * p1), k1, k3


# ---------------------------------------------------------------- contours

@dataclass
class ContourSpec:
    R: float
    r: float
    kind: str = "punctured"   # or "circle", "box"
    n_init: int = 48
    max_refine: int = 14
    center: complex = 0.0
    box: tuple = None         # (re0, re1, im0, im1) for kind="box"


def default_contour(spec, profile=None, kind="punctured", R=None, r=None):
    if profile is not None:
        # indicial point of the local problem at x = 0 must sit off the contour
        ind = -spec.L * profile.b0 - profile.aprime0
        if ind >= 0:
            raise EvansError(f"indicial point {ind:.3g} lies in Re lam >= 0")
    vals = []
    for side in ("plus", "minus"):
        a, b = spec.end_data(side)
        vals += [a * a, spec.L * b]
    scale = max(vals)
    r = r if r is not None else 1e-3 * scale
    if kind == "circle":
        # the full circle crosses Re lam < 0, where the asymptotic roots have
        # a branch point near the origin; stay inside it
        bp = min(abs(v) for side in ("plus", "minus") for v in spectral.branch_points(spec, side))
        r = min(r, 0.5 * bp)
    return ContourSpec(R if R is not None else 10.0 * scale, r, kind)


def contour_pieces(c):
    """Upper half of the contour as (parameter -> lam) pieces, traversed
    counterclockwise around the enclosed region; the lower half follows by
    conjugate symmetry."""
    R, r = c.R, c.r
    if c.kind == "box":
        x0, x1, y0, y1 = c.box
        corners = [complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1)]
        return [(lambda t, p=p, q=q: p + (q - p) * t)
                for p, q in zip(corners, corners[1:] + corners[:1])]
    if c.kind == "circle":
        return [lambda t: c.center + r * np.exp(1j * np.pi * t)]
    return [
        lambda t: R * np.exp(1j * (np.pi / 2) * t),            # arc: R -> iR
        lambda t: 1j * (R + (r - R) * t),                     # iR -> ir
        lambda t: r * np.exp(1j * (np.pi / 2) * (1 - t)),     # ir -> r
    ]


@dataclass
class WindingResult:
    winding: int
    raw: float
    max_jump: float
    samples: list
    conclusive: bool
    side: str
    n_samples: int = 0


def _angle_step(z0, z1):
    return float(np.angle(z1 / z0))


def sample_contour(ctx, contour, method="limit", workers=None, budget=None, max_samples=None):
    """Adaptive sampling of the upper half contour (whole contour for boxes).
    budget caps refinement levels, max_samples the samples per piece.
    Returns list of (t_global, EvansSample) sorted by parameter and a
    conclusive flag."""
    pieces = contour_pieces(contour)
    budget = contour.max_refine if budget is None else budget
    pool = ThreadPoolExecutor(max_workers=workers) if (workers or 0) != 1 else None

    def evaluate(lams):
        if pool is None:
            return [evans_pair(ctx, l, method) for l in lams]
        return list(pool.map(lambda l: evans_pair(ctx, l, method), lams))

    samples = []
    conclusive = True
    for k, piece in enumerate(pieces):
        n0 = contour.n_init + 1
        if max_samples is not None:
            n0 = max(2, min(n0, max_samples))
        ts = list(np.linspace(0.0, 1.0, n0))
        vals = dict(zip(ts, evaluate([piece(t) for t in ts])))
        for level in range(budget + 1):
            ts = sorted(vals)
            bad = []
            for t0, t1 in zip(ts[:-1], ts[1:]):
                for side in ("minus", "plus"):
                    z0 = vals[t0].D_minus if side == "minus" else vals[t0].D_plus
                    z1 = vals[t1].D_minus if side == "minus" else vals[t1].D_plus
                    if abs(_angle_step(z0, z1)) >= np.pi / 2:
                        bad.append(0.5 * (t0 + t1))
                        break
            if not bad:
                break
            if level == budget or (max_samples is not None
                                   and len(vals) + len(bad) > max_samples):
                conclusive = False
                break
            new = evaluate([piece(t) for t in bad])
            vals.update(zip(bad, new))
        samples += [(k + t, vals[t]) for t in sorted(vals)]
    if pool is not None:
        pool.shutdown()
    return samples, conclusive


def winding_from_samples(samples, side, kind="punctured"):
    """Accumulated argument over the full contour built by reflection."""
    z = [s.D_minus if side == "minus" else s.D_plus for _, s in samples]
    if kind == "box":
        full = z + z[:1]
    else:
        # upper half traversed; lower half is the conjugate traversed in reverse
        full = z + [np.conj(v) for v in z[::-1]][1:]
    steps = [_angle_step(a, b) for a, b in zip(full[:-1], full[1:])]
    total = float(np.sum(steps))
    return total / (2 * np.pi), max(abs(s) for s in steps)


def winding_number(ctx, contour, side="minus", method="limit", workers=None, samples=None,
                   budget=None, max_samples=None):
    conclusive = True
    if samples is None:
        samples, conclusive = sample_contour(ctx, contour, method, workers, budget, max_samples)
    raw, jump = winding_from_samples(samples, side, contour.kind)
    w = int(round(raw))
    ok = conclusive and jump < np.pi / 2 and abs(raw - w) < 1e-6
    return WindingResult(w, raw, jump, samples, ok, side, len(samples))


def localize_zeros(ctx, box, side="minus", method="limit", workers=None, depth=3,
                   n_init=16, max_refine=10):
    """Recursive quadrisection of a box (re0, re1, im0, im1); returns the
    leaf boxes with nonzero winding as (box, winding, conclusive)."""
    c = ContourSpec(0.0, 0.0, "box", n_init, max_refine, box=tuple(box))
    w = winding_number(ctx, c, side, method, workers)
    if w.winding == 0 and w.conclusive:
        return []
    if depth == 0:
        return [(tuple(box), w.winding, w.conclusive)]
    x0, x1, y0, y1 = box
    xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    out = []
    for b in ((x0, xm, y0, ym), (xm, x1, y0, ym), (x0, xm, ym, y1), (xm, x1, ym, y1)):
        out += localize_zeros(ctx, b, side, method, workers, depth - 1, n_init, max_refine)
    return out


# ---------------------------------------------------------------- oracles

def _grid_coeffs(profile, X, N):
    x = np.linspace(-X, X, N + 2)[1:-1]
    h = x[1] - x[0]
    a = np.interp(x, profile.x, profile.a)
    b = np.interp(x, profile.x, profile.b)
    return x, h, a, b


def integrated_operator(profile, L, X=None, N=2000):
    """Dense matrix of lam u = -a u' - L q', q = -(1 - d^2)^{-1}(b u'),
    centered differences, homogeneous Dirichlet data at both ends."""
    eta = min(v["U"] for v in profile.eta_decay.values())
    X = X or min(profile.X, 12.0 / eta)
    x, h, a, b = _grid_coeffs(profile, X, N)
    D1 = (np.eye(N, k=1) - np.eye(N, k=-1)) / (2 * h)
    D2 = (np.eye(N, k=1) - 2 * np.eye(N) + np.eye(N, k=-1)) / h ** 2
    K = np.linalg.solve(np.eye(N) - D2, np.eye(N))
    A = -a[:, None] * D1 + L * D1 @ K @ (b[:, None] * D1)
    return A, x


def integrated_eigen_oracle(profile, L, region=None, N=2000, X=None):
    """Eigenvalues of the integrated-coordinate operator; region is a
    predicate on lam (default: Re lam > 1e-3)."""
    A, _ = integrated_operator(profile, L, X, N)
    ev = np.linalg.eigvals(A)
    region = region or (lambda l: l.real > 1e-3)
    return np.sort_complex(ev[[region(l) for l in ev]]), ev


def frozen_oracle(a, b, L, N=256, length=40.0):
    """Same discretization with frozen coefficients on a periodic grid, and the
    exact curve values lam(xi) at the grid wavenumbers."""
    h = length / N
    I = np.eye(N)
    S = np.roll(I, 1, axis=1)
    D1 = (S - S.T) / (2 * h)
    D2 = (S - 2 * I + S.T) / h ** 2
    K = np.linalg.inv(I - D2)
    A = -a * D1 + L * b * D1 @ K @ D1
    xi = 2 * np.pi * np.fft.fftfreq(N, d=h)
    exact = -1j * a * xi - L * b * xi ** 2 / (1 + xi ** 2)
    return np.linalg.eigvals(A), exact, h


def resolvent_probe(profile, spec, lam, phi=None, psi=None, h=None, X=None):
    """Solve lam u + (a u)' + L q' = phi, -q'' + q + (b u)' = psi on a uniform
    grid (homogeneous Dirichlet data).  phi, psi are callables of x.
    Returns (x, u, q, norms)."""
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla
    eta = min(v["U"] for v in profile.eta_decay.values())
    X = X or min(profile.X, 10.0 / eta)
    lam = complex(lam)
    if h is None:
        h = min(2e-3, 0.2 / max(1.0, abs(lam)))
    N = int(round(2 * X / h)) - 1
    x = -X + h * np.arange(1, N + 1)
    a = np.interp(x, profile.x, profile.a)
    b = np.interp(x, profile.x, profile.b)
    D1 = sp.diags([-np.ones(N - 1), np.ones(N - 1)], [-1, 1]) / (2 * h)
    D2 = sp.diags([np.ones(N - 1), -2 * np.ones(N), np.ones(N - 1)], [-1, 0, 1]) / h ** 2
    I = sp.identity(N)
    A = sp.bmat([[lam * I + D1 @ sp.diags(a), spec.L * D1],
                 [D1 @ sp.diags(b), I - D2]], format="csc")
    f = np.zeros(N) if phi is None else phi(x)
    g = np.zeros(N) if psi is None else psi(x)
    rhs = np.concatenate([f, g]).astype(complex)
    sol = spla.spsolve(A, rhs)
    u, q = sol[:N], sol[N:]
    res = np.linalg.norm(A @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)
    l2 = lambda v: math.sqrt(h * np.sum(np.abs(v) ** 2))
    norms = {"u_L2": l2(u), "q_L2": l2(q), "phi_L2": l2(f), "psi_L2": l2(g),
             "phi_H1": math.sqrt(l2(f) ** 2 + l2(np.gradient(f, h)) ** 2), "residual": res}
    return x, u, q, norms
