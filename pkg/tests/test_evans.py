import dataclasses
import math
import types

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radshock import spectral
from radshock.evans import (ContourSpec, EvansError, ModeSolution, SeedingError, band_columns,
                            cross_singularity, decaying_mode_at_zero, default_contour,
                            derivative_formula, evans_D, evans_pair, fast_mode, frozen_oracle,
                            integrate_mode, integrated_eigen_oracle, local_basis_near_zero,
                            localize_zeros, resolvent_probe, seed_at_infinity, winding_number)

UP0_REF = -0.0204168476687


def angle(v, w):
    c = abs(np.vdot(v, w)) / (np.linalg.norm(v) * np.linalg.norm(w))
    return math.acos(min(1.0, c))


def wbar(prof, L, x):
    wb = prof.wbar_prime(L)
    i = int(np.argmin(np.abs(prof.x - x)))
    return wb[:, i].astype(complex)


# ---------------------------------------------------------------- seeding

def test_seed_is_eigenvector(ctx02):
    ms = seed_at_infinity(ctx02, "plus", 0.1)
    V = spectral.char_roots(ctx02.spec, "plus", 0.1).V[:, 2]
    assert np.allclose(ms.W, V, atol=0)
    assert ms.x == ctx02.X


def test_seed_minus_aligned_with_profile_derivative(ctx02, prof02):
    ms = seed_at_infinity(ctx02, "minus", 0.0)
    assert math.cos(angle(ms.W, wbar(prof02, 1.0, ms.x))) > 0.99


def test_slow_mode_not_seedable(ctx02):
    with pytest.raises(SeedingError):
        seed_at_infinity(ctx02, "plus", 0.1, mode_index=2)


# ---------------------------------------------------------------- integration

def test_frozen_coefficients_exact_solution(ctx02):
    a, b = ctx02.spec.end_data("plus")
    tab = np.vstack([np.full_like(ctx02.tab[0], a), np.zeros_like(ctx02.tab[1]),
                     np.full_like(ctx02.tab[2], b)])
    ctx = dataclasses.replace(ctx02, tab=tab)
    lam = 0.3 + 0.7j
    ms = seed_at_infinity(ctx, "plus", lam)
    ms = ModeSolution(50.0, ms.W, 0.0, ms.origin)
    out = integrate_mode(ctx, ms, lam, 30.0)
    mu = spectral.char_roots(ctx.spec, "plus", lam).mu[2]
    ref = np.exp(mu * (30.0 - 50.0)) * ms.W
    assert np.max(np.abs(out.true() - ref)) < 1e-8 * np.max(np.abs(ref))


def test_translation_mode_parallel(ctx02, prof02):
    ms = seed_at_infinity(ctx02, "minus", 0.0)
    out = integrate_mode(ctx02, ms, 0.0, -1.0)
    assert angle(out.W, wbar(prof02, 1.0, -1.0)) < 1e-6


@pytest.mark.parametrize("c", [2.0, 0.5, 1j, 2 ** 10 * (1 - 1j)])
def test_seed_rescaling(ctx02, c):
    lam = 0.2 + 0.4j
    ms = seed_at_infinity(ctx02, "minus", lam)
    a = integrate_mode(ctx02, ms, lam, -1.0).true()
    b = integrate_mode(ctx02, dataclasses.replace(ms, W=c * ms.W), lam, -1.0).true()
    assert np.allclose(b, c * a, rtol=1e-13, atol=0)


# ---------------------------------------------------------------- local basis

def test_nu_at_zero(ctx02):
    assert ctx02.nu(0.0).real == pytest.approx((UP0_REF + 1.0) / abs(UP0_REF), rel=1e-8)
    assert ctx02.nu(0.0).real > 45


def test_local_basis_structure(ctx02):
    lam = 0.1 + 0.3j
    bas = local_basis_near_zero(ctx02, lam, "minus")
    om = lam + ctx02.aprime0 + ctx02.b0
    for j in range(2):
        u, q, p = bas.slow[j]
        assert u[0] == pytest.approx(ctx02.spec.L * p[0] / om, rel=1e-14)
    # fast mode: (q, p) are O(a(delta0)) relative to u
    w = bas.fast_at_delta0()
    assert w[0] == 1
    assert abs(w[1]) + abs(w[2]) < 10 * abs(ctx02.aprime0) * ctx02.delta0


def test_crossing_translation_mode(ctx02, prof02):
    w1 = decaying_mode_at_zero(ctx02, "plus", 0.0)
    c = cross_singularity(ctx02, w1, 0.0)
    assert c.x == pytest.approx(-ctx02.delta0)
    assert angle(c.W, wbar(prof02, 1.0, -ctx02.delta0)) < 1e-6
    z = cross_singularity(ctx02, dataclasses.replace(w1, W=np.zeros(3, complex)), 0.0)
    assert np.all(z.W == 0)


# ---------------------------------------------------------------- Evans function

def test_origin_vanishes(ctx02):
    s = evans_pair(ctx02, 0.0)
    assert s.rel < 1e-6


def test_derivative_formula(ctx02):
    h = 1e-4
    fd = (evans_D(ctx02, h, "minus") - evans_D(ctx02, 0.0, "minus")) / h
    formula, _, _ = derivative_formula(ctx02, "minus")
    assert abs(fd - formula) < 0.05 * abs(formula)


def test_ratio_constant_near_origin(ctx02):
    r = [evans_D(ctx02, l, "plus") / evans_D(ctx02, l, "minus") for l in (1e-2, 1e-3, 1e-4)]
    m = r[-1]
    assert abs(m) > 0
    assert max(abs(v - m) for v in r) < 0.1 * abs(m)


@settings(max_examples=6, deadline=None)
@given(lam=st.complex_numbers(max_magnitude=8.0, allow_nan=False, allow_infinity=False).filter(
    lambda z: z.real > 0.01 and abs(z.imag) > 0.01))
def test_conjugate_symmetry(ctx02, lam):
    a = evans_pair(ctx02, lam)
    b = evans_pair(ctx02, np.conj(lam))
    for side in ("minus", "plus"):
        x, y = a.value(side), b.value(side)
        assert abs(y - np.conj(x)) < 1e-10 * abs(x)


@pytest.mark.parametrize("gamma", [1.0, -3.5 + 2j, 1e3j])
def test_representative_invariance(ctx02, gamma):
    lam = 0.4 + 1.1j
    c1, wf, c3 = band_columns(ctx02, lam, "minus")
    C1, C3 = c1.true(), c3.true()
    d0 = np.linalg.det(np.column_stack([C1, wf, C3]))
    g = gamma * np.linalg.norm(C1) / np.linalg.norm(wf)
    d1 = np.linalg.det(np.column_stack([C1 + g * wf, wf, C3]))
    assert abs(abs(d1) - abs(d0)) < 1e-8 * abs(d0)


@pytest.mark.parametrize("lam", [0.05, 0.5 + 2j, 3j + 0.01])
def test_band_route_matches_limit(ctx02, lam):
    a = evans_pair(ctx02, lam, "limit")
    b = evans_pair(ctx02, lam, "band")
    for side in ("minus", "plus"):
        assert abs(a.value(side) - b.value(side)) < 1e-7 * abs(a.value(side))


# ---------------------------------------------------------------- winding

def test_winding_burgers(ctx02, spec02):
    for kind, expect in (("punctured", 0), ("circle", 1)):
        c = default_contour(spec02, kind=kind)
        for side in ("minus", "plus"):
            w = winding_number(ctx02, c, side)
            assert w.conclusive and w.winding == expect
            assert w.max_jump < math.pi / 2
            assert abs(w.raw - expect) < 1e-6


def test_forced_inconclusive(ctx02, spec02):
    c = default_contour(spec02, kind="punctured")
    w = winding_number(ctx02, c, "minus", max_samples=1)
    assert not w.conclusive


def test_box_contour_counts_translation_zero(ctx02):
    r = 2e-3
    c = ContourSpec(0.0, 0.0, "box", 8, 8, box=(-r, r, -r, r))
    w = winding_number(ctx02, c, "minus")
    assert w.conclusive and w.winding == 1
    assert localize_zeros(ctx02, (1e-3, 5.0, -5.0, 5.0), depth=1) == []


# ---------------------------------------------------------------- oracles

def test_integrated_oracle_burgers(prof02, spec02):
    sel, ev = integrated_eigen_oracle(prof02, spec02.L, N=2000)
    assert len(sel) == 0
    near0 = ev[np.abs(ev) < 1e-3]
    assert len(near0) >= 1
    # left envelope: the integrated spectrum lies in Re lam >= -max(Lb)
    assert np.min(ev.real) > -1.0 - 1e-6
    assert np.max(ev.real) < 1e-3


def test_frozen_oracle_second_order(spec02):
    a, b = spec02.end_data("plus")
    errs = []
    for N in (128, 256):
        length = 40.0
        ev, _, h = frozen_oracle(a, b, 1.0, N, length)
        errs.append([])
        for k in range(1, 6):
            xi = 2 * np.pi * k / length
            exact = -1j * a * xi - b * xi ** 2 / (1 + xi ** 2)
            errs[-1].append(np.min(np.abs(ev - exact)))
    ratio = np.array(errs[0]) / np.array(errs[1])
    assert np.all(ratio > 3.5) and np.all(ratio < 4.5)


def test_frozen_oracle_matches_discrete_symbol(spec02):
    a, b = spec02.end_data("minus")
    N, length = 64, 20.0
    ev, _, h = frozen_oracle(a, b, 1.0, N, length)
    xi = 2 * np.pi * np.fft.fftfreq(N, d=h)
    s1 = 1j * np.sin(xi * h) / h
    s2 = -(2 - 2 * np.cos(xi * h)) / h ** 2
    # Fourier symbol of the centered-difference operator
    sym = -a * s1 + b * s1 * s1 / (1 - s2)
    for v in sym:
        assert np.min(np.abs(ev - v)) < 1e-10


def test_resolvent_zero_source(prof02, spec02):
    x, u, q, n = resolvent_probe(prof02, spec02, 5j)
    assert np.all(u == 0) and np.all(q == 0)


def test_resolvent_real_lambda_decay(prof02, spec02):
    phi = lambda x: np.exp(-x * x)
    out = []
    for lam in (25.0, 50.0, 100.0):
        _, u, _, n = resolvent_probe(prof02, spec02, lam, phi=phi)
        assert n["residual"] < 1e-10
        out.append(n["u_L2"] * lam / n["phi_L2"])
    # |u| ~ C / lam for real lam
    assert max(out) < 1.5 * min(out)


def test_band_half_width_convergence(ctx02):
    half = dataclasses.replace(ctx02, delta0=ctx02.delta0 / 2)
    for lam in (0.3 + 0.8j, 2.0):
        a = evans_pair(ctx02, lam, "band").value("minus")
        b = evans_pair(half, lam, "band").value("minus")
        assert abs(a - b) < 1e-8 * abs(a)


def test_winding_stable_under_halved_step(ctx02, spec02):
    c = default_contour(spec02, kind="punctured")
    fine = dataclasses.replace(c, n_init=2 * c.n_init)
    coarse = dataclasses.replace(c, n_init=c.n_init // 2)
    assert winding_number(ctx02, fine, "plus").winding == 0
    assert winding_number(ctx02, coarse, "plus").winding == 0


def test_doubled_radius_same_winding(ctx02, spec02):
    c = default_contour(spec02, kind="punctured")
    w = winding_number(ctx02, dataclasses.replace(c, R=2 * c.R), "minus")
    assert w.conclusive and w.winding == 0


def test_indicial_point_off_contour(spec02, prof02):
    ind = -spec02.L * prof02.b0 - prof02.aprime0
    assert ind < 0
    assert default_contour(spec02, prof02).R > 0
    steep = types.SimpleNamespace(b0=1.0, aprime0=-1.5)
    with pytest.raises(EvansError):
        default_contour(spec02, steep)
