from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.linalg

from oscdamp import (
    DegenerateModeError,
    UsageError,
    alpha,
    extended_jacobian,
    lambda_from_vector,
    mode_summary,
    reduced_jacobian,
    solve_qep,
)
from oscdamp.cases import random_network
from oscdamp.modal import Mode, _pencil
from oscdamp.study import build_study

TOY_L = np.array([[1.0, -1.0], [-1.0, 1.0]])
TOY_M = np.ones(2)
TOY_D = np.zeros(2)


def _companion_spectrum(m_diag, d_diag, L):
    """Independent QEP route: first companion pencil of size 2 nz."""
    nz = L.shape[0]
    A = np.zeros((2 * nz, 2 * nz))
    B = np.zeros((2 * nz, 2 * nz))
    A[:nz, :nz] = -np.diag(d_diag)
    A[:nz, nz:] = -L
    A[nz:, :nz] = np.eye(nz)
    B[:nz, :nz] = np.diag(m_diag)
    B[nz:, nz:] = np.eye(nz)
    alph, beta = scipy.linalg.eig(A, B, right=False, homogeneous_eigvals=True)
    keep = np.abs(beta) > 1e-12 * np.hypot(np.abs(alph), np.abs(beta))
    return alph[keep] / beta[keep]


def _match_spectra(a, b, tol):
    scale = max(np.max(np.abs(a)), 1.0)
    for lam in a:
        assert np.min(np.abs(np.asarray(b) - lam)) < tol * scale, lam


def test_toy_two_generator_mode():
    modes = solve_qep(TOY_M, TOY_D, TOY_L)
    assert len(modes) == 1
    md = modes[0]
    assert abs(md.lam - 1j * math.sqrt(2)) < 1e-12
    assert np.allclose(md.x, [1.0, -1.0])


def test_toy_extended_jacobian_correspondence():
    E, J = extended_jacobian(TOY_M, TOY_D, TOY_L)
    assert np.array_equal(E, np.eye(4))  # fully dynamic: no algebraic block
    alph, beta = scipy.linalg.eig(J, E, right=False, homogeneous_eigvals=True)
    lams = alph / beta
    expect = np.array([0, 0, 1j * np.sqrt(2), -1j * np.sqrt(2)])
    _match_spectra(lams, expect, 1e-9)
    _match_spectra(expect, lams, 1e-9)
    # Speed block carries lam times the generator angle block. The defective
    # zero pair has no second true eigenvector, so check the oscillatory ones.
    w, vr = scipy.linalg.eig(J, E)
    checked = 0
    for i in range(4):
        lam, v = w[i], vr[:, i]
        if abs(lam) < 1e-8:
            continue
        assert np.linalg.norm(v[2:] - lam * v[:2]) < 1e-12 * np.linalg.norm(v)
        checked += 1
    assert checked == 2


def test_pencil_state_ordering_blockdiag_identity(random_suite):
    for net, st in random_suite[:6]:
        E, J = extended_jacobian(st.dyn.m, st.dyn.d, st.bundle.L)
        n_dyn = int(np.sum((st.dyn.m > 0) | (st.dyn.d > 0)) + np.sum(st.dyn.m > 0))
        assert np.array_equal(E[:n_dyn, :n_dyn], np.eye(n_dyn))
        assert not E[n_dyn:].any()
        assert not E[:, n_dyn:].any()


def test_pencil_eigenvector_correspondence(random_suite):
    for net, st in random_suite[:6]:
        E, J, lay = _pencil(st.dyn.m, st.dyn.d, st.bundle.L)
        (alph, beta), vr = scipy.linalg.eig(J, E, homogeneous_eigvals=True)
        finite = np.abs(beta) > 1e-12 * np.hypot(np.abs(alph), np.abs(beta))
        for i in np.where(finite)[0]:
            lam = alph[i] / beta[i]
            v = vr[:, i]
            for z_row, s_col in lay.speed_col.items():
                resid = abs(v[s_col] - lam * v[lay.zcol[z_row]])
                assert resid < 1e-9 * np.linalg.norm(v)


def test_finite_spectrum_count(random_suite):
    for net, st in random_suite[:8]:
        md, dd = st.dyn.m, st.dyn.d
        E, J = extended_jacobian(md, dd, st.bundle.L)
        alph, beta = scipy.linalg.eig(J, E, right=False, homogeneous_eigvals=True)
        finite = np.abs(beta) > 1e-12 * np.hypot(np.abs(alph), np.abs(beta))
        n_inertial = int(np.sum(md > 0))
        n_first_order = int(np.sum((md == 0) & (dd > 0)))
        assert int(finite.sum()) == 2 * n_inertial + n_first_order
        # Companion view: the QEP has 2 nz eigenvalues; the infinite ones
        # number twice the algebraic variables plus the first-order rows.
        comp = _companion_spectrum(md, dd, st.bundle.L)
        n_alg = int(np.sum((md == 0) & (dd == 0)))
        assert 2 * md.size - comp.size == 2 * n_alg + n_first_order


def test_qep_matches_companion_and_reduced(random_suite):
    for net, st in random_suite[:8]:
        E, J = extended_jacobian(st.dyn.m, st.dyn.d, st.bundle.L)
        alph, beta = scipy.linalg.eig(J, E, right=False, homogeneous_eigvals=True)
        finite = np.abs(beta) > 1e-12 * np.hypot(np.abs(alph), np.abs(beta))
        pencil_spec = alph[finite] / beta[finite]
        comp_spec = _companion_spectrum(st.dyn.m, st.dyn.d, st.bundle.L)
        _match_spectra(pencil_spec, comp_spec, 1e-9)
        red_spec = np.linalg.eigvals(reduced_jacobian(st.dyn.m, st.dyn.d, st.bundle.L))
        _match_spectra(pencil_spec, red_spec, 1e-9)


def test_reduced_jacobian_no_algebraic_block_is_identity_case():
    J_red = reduced_jacobian(TOY_M, TOY_D, TOY_L)
    _, J = extended_jacobian(TOY_M, TOY_D, TOY_L)
    assert np.array_equal(J_red, J)


def test_reduced_jacobian_with_connecting_bus():
    # A connecting bus (P = Q = 0) adds algebraic rows; the reduction must
    # succeed and preserve the finite spectrum.
    net = random_network(11)
    st = build_study(net)
    red_spec = np.linalg.eigvals(reduced_jacobian(st.dyn.m, st.dyn.d, st.bundle.L))
    E, J = extended_jacobian(st.dyn.m, st.dyn.d, st.bundle.L)
    alph, beta = scipy.linalg.eig(J, E, right=False, homogeneous_eigvals=True)
    finite = np.abs(beta) > 1e-12 * np.hypot(np.abs(alph), np.abs(beta))
    _match_spectra(alph[finite] / beta[finite], red_spec, 1e-9)


def test_conjugate_symmetry_before_filtering(random_suite):
    net, st = random_suite[2]
    E, J = extended_jacobian(st.dyn.m, st.dyn.d, st.bundle.L)
    alph, beta = scipy.linalg.eig(J, E, right=False, homogeneous_eigvals=True)
    finite = np.abs(beta) > 1e-12 * np.hypot(np.abs(alph), np.abs(beta))
    spec = alph[finite] / beta[finite]
    _match_spectra(spec, np.conj(spec), 1e-9)


def test_mode_residual_invariant(fixture_studies):
    for _, st in fixture_studies.values():
        for md in st.modes:
            assert md.residual < 1e-9


def test_ten_bus_real_parts_not_contingent(fixture_studies):
    _, st = fixture_studies["ten_bus"]
    em = st.electromechanical()
    assert len(em) == 3
    for md in em:
        assert abs(md.sigma + 0.038462) < 1e-5


def test_uniform_damping_pins_real_parts():
    # d_i/m_i identical on all machines, no load damping: every oscillatory
    # eigenvalue sits at -c/2.
    net = random_network(17, zero_damping=True)
    from dataclasses import replace as drep
    buses = []
    for b in net.buses:
        if b.is_generator:
            buses.append(drep(b, damping_d_seconds=0.8 * b.inertia_h))
        else:
            buses.append(b)
    net_c = type(net)(buses=tuple(buses), lines=net.lines, omega0=net.omega0)
    st = build_study(net_c)
    c = 0.8 / 2.0  # d/m = D_sec/(2 h) = 0.8/2
    for md in st.oscillatory():
        assert abs(md.sigma + c / 2.0) < 1e-9


def test_zero_damping_spectrum_imaginary_and_real_vectors():
    for seed in (5, 6):
        net = random_network(seed, zero_damping=True)
        st = build_study(net)
        assert st.modes, "expected at least one mode"
        for md in st.modes:
            assert abs(md.sigma) < 1e-10
            rotated = md.x * np.exp(-1j * np.angle(md.x[np.argmax(np.abs(md.x))]))
            assert np.max(np.abs(rotated.imag)) < 1e-9 * np.max(np.abs(rotated))


def test_resonance_warning_on_duplicate_spectrum():
    # A symmetric three-machine ring has an exactly repeated oscillatory
    # eigenvalue at sqrt(3 b / m).
    ring = np.array([
        [2.0, -1.0, -1.0],
        [-1.0, 2.0, -1.0],
        [-1.0, -1.0, 2.0],
    ])
    modes = solve_qep(np.ones(3), np.zeros(3), ring)
    assert len(modes) == 2
    assert all(abs(md.lam - 1j * math.sqrt(3)) < 1e-9 for md in modes)
    assert all(any("near-resonant" in w for w in md.warnings) for md in modes)


def test_alpha_zero_damping_form(fixture_studies):
    _, st = fixture_studies["three_bus_s9"]
    md = st.electromechanical()[0]
    a = alpha(md, st.dyn.m, st.dyn.d)
    x = md.x.real
    expected = 2j * md.omega * (x @ (st.dyn.m * x))
    assert abs(a - expected) < 1e-12 * abs(a)


def test_alpha_scales_quadratically(fixture_studies):
    _, st = fixture_studies["six_bus"]
    md = st.electromechanical()[0]
    c = 0.7 - 1.3j
    scaled = replace(md, x=c * md.x)
    a1 = alpha(md, st.dyn.m, st.dyn.d)
    a2 = alpha(scaled, st.dyn.m, st.dyn.d)
    assert abs(a2 - c * c * a1) < 1e-12 * abs(a2)


def test_alpha_matches_termwise_sum(random_suite):
    net, st = random_suite[4]
    md = st.electromechanical()[0]
    a = alpha(md, st.dyn.m, st.dyn.d)
    brute = sum(
        2 * md.lam * st.dyn.m[i] * md.x[i] ** 2 + st.dyn.d[i] * md.x[i] ** 2
        for i in range(md.x.size)
    )
    assert abs(a - brute) < 1e-12 * abs(a)


def test_alpha_degeneracy_raises():
    md = Mode(
        lam=1j, x=np.array([1.0, 1.0], dtype=complex), alpha=0j, residual=0.0,
        freq_hz=1 / (2 * math.pi), damping_ratio=0.0, swing_profile="",
        electromechanical=True,
    )
    with pytest.raises(DegenerateModeError):
        alpha(md, np.zeros(2), np.zeros(2))


def test_lambda_from_vector_massless_row():
    # Support only on a zero-inertia damped row: single root -l(x)/d(x).
    m = np.array([1.0, 0.0])
    d = np.array([0.0, 2.0])
    L = np.array([[2.0, -1.0], [-1.0, 3.0]])
    roots = lambda_from_vector(np.array([0.0, 1.0]), m, d, L)
    assert roots == (-1.5,)


def test_lambda_from_vector_exact_eigenvector_toy():
    roots = sorted(lambda_from_vector(np.array([1.0, -1.0]), TOY_M, TOY_D, TOY_L),
                   key=lambda z: z.imag)
    assert abs(roots[0] + 1j * math.sqrt(2)) < 1e-12
    assert abs(roots[1] - 1j * math.sqrt(2)) < 1e-12


def test_lambda_from_vector_consistency(random_suite):
    net, st = random_suite[6]
    md = st.electromechanical()[0]
    roots = lambda_from_vector(md.x, st.dyn.m, st.dyn.d, st.bundle.L)
    assert min(abs(r - md.lam) for r in roots) < 1e-9 * abs(md.lam)


def test_lambda_from_vector_degenerate():
    with pytest.raises(DegenerateModeError):
        lambda_from_vector(np.array([0.0, 1.0]), np.array([1.0, 0.0]),
                           np.array([1.0, 0.0]), TOY_L)


def test_mode_summary_published_arithmetic():
    def summarize(lam):
        md = Mode(
            lam=lam, x=np.array([1.0 + 0j]), alpha=1j, residual=0.0,
            freq_hz=lam.imag / (2 * math.pi),
            damping_ratio=-lam.real / abs(lam),
            swing_profile="", electromechanical=True,
        )
        return mode_summary(md)

    f1, z1, _ = summarize(complex(-0.175611, 9.66364))
    assert abs(f1 / 1.53802 - 1) < 1e-5
    assert abs(z1 / 1.81694 - 1) < 1e-5
    f2, z2, _ = summarize(complex(-0.166826, 10.8247))
    assert abs(f2 / 1.72281 - 1) < 1e-5
    assert abs(z2 / 1.54097 - 1) < 1e-5
    # sigma = 0 gives exactly zero damping ratio.
    _, z3, _ = summarize(complex(0.0, 5.0))
    assert z3 == 0.0


def test_mode_summary_requires_oscillation():
    md = Mode(
        lam=-1.0 + 0j, x=np.array([1.0 + 0j]), alpha=1j, residual=0.0,
        freq_hz=0.0, damping_ratio=1.0, swing_profile="",
        electromechanical=False,
    )
    with pytest.raises(UsageError):
        mode_summary(md)


def test_swing_profiles_on_fixtures(fixture_studies):
    _, ten = fixture_studies["ten_bus"]
    interarea = ten.electromechanical()[0]
    groups = {frozenset(side.split(",")) for side in interarea.swing_profile.split(" <-> ")}
    assert groups == {frozenset({"G1", "G2"}), frozenset({"G3", "G4"})}
    _, six = fixture_studies["six_bus"]
    md2 = six.electromechanical()[1]
    assert "G3" not in md2.swing_profile  # below the participation threshold
