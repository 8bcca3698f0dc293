import numpy as np
import pytest
from hypothesis import given, strategies as st

from fewphoton.basis import SystemParams, exciton_offset_1d
from fewphoton.spectral import (
    bordered_matrix, branch_summary, build_active_poles, eigenvector, interlacing_violations,
    mode_amplitudes, secular_g, solve_quasienergies,
)

from oracles import photon_measure


def merged_measure(spec, params):
    """Roots plus every photon-free level, sorted, with weights (zero for dark levels)."""
    p = spec.poles
    levels = [spec.offsets]
    weights = [spec.weights]
    for lam, d in spec.silent_levels:
        levels.append(np.full(d, lam - p.reference))
        weights.append(np.zeros(d))
    # modes with gamma = 0 never enter the active set
    if params.is_2d:
        nx, ny = params.n_atoms_x, params.n_atoms_y
        kx, ky = np.meshgrid(np.arange(1, nx + 1), np.arange(1, ny + 1), indexing="ij")
        dark = (kx % 2 == 0) | (ky % 2 == 0)
        off = (exciton_offset_1d(kx[dark], nx, params.hop_w)
               + exciton_offset_1d(ky[dark], ny, params.hop_w))
    else:
        k = np.arange(2, params.n_atoms_x + 1, 2)
        off = exciton_offset_1d(k, params.n_atoms_x, params.hop_w)
    levels.append(off)
    weights.append(np.zeros(len(off)))
    lv = np.concatenate(levels)
    order = np.argsort(lv, kind="stable")
    return lv[order], np.concatenate(weights)[order]


def compare_to_dense(params, ev_tol=1e-10, w_tol=1e-9):
    spec = solve_quasienergies(build_active_poles(params))
    levels, weights = merged_measure(spec, params)
    ev, wd = photon_measure(params)
    np.testing.assert_allclose(levels, ev, atol=ev_tol, rtol=0)
    np.testing.assert_allclose(weights, wd, atol=w_tol, rtol=0)
    return spec


@pytest.mark.parametrize("N", [1, 2, 7, 50, 200])
@pytest.mark.parametrize("x", [-2, -1, 0, 1, 2])
def test_chain_matches_dense_oracle(N, x):
    G = 30e-6
    params = SystemParams.from_detuning(n_atoms_x=N, detuning=x * G, collective_coupling=G)
    compare_to_dense(params)


@pytest.mark.parametrize("N", [10, 60])
@pytest.mark.parametrize("x", [-1, 0, 2])
def test_chain_strong_mixing_matches_dense(N, x):
    # coupling comparable to the band width: many roots far from their poles
    w = 1e-3
    params = SystemParams.from_detuning(n_atoms_x=N, detuning=x * w, collective_coupling=2 * w,
                                        hop_w=w)
    compare_to_dense(params)


@pytest.mark.parametrize("N", [2, 5, 9, 14])
@pytest.mark.parametrize("x", [-1, 0, 1])
def test_well_matches_dense_oracle(N, x):
    G = 30e-6
    params = SystemParams.from_detuning(n_atoms_x=N, n_atoms_y=N, detuning=x * G,
                                        collective_coupling=G, hop_w=0.01)
    spec = compare_to_dense(params)
    if N > 2:
        assert spec.silent_levels


@given(N=st.integers(1, 40), x=st.floats(-3, 3), G=st.floats(1e-6, 1e-2),
       w=st.floats(1e-4, 0.5))
def test_random_chain_against_dense(N, x, G, w):
    params = SystemParams.from_detuning(n_atoms_x=N, detuning=x * G, collective_coupling=G,
                                        hop_w=w)
    compare_to_dense(params, ev_tol=1e-10 * max(1.0, w), w_tol=1e-8)


@given(N=st.integers(1, 300), x=st.floats(-3, 3))
def test_closure_and_interlacing(N, x):
    G = 30e-6
    params = SystemParams.from_detuning(n_atoms_x=N, detuning=x * G, collective_coupling=G)
    spec = solve_quasienergies(build_active_poles(params))
    assert abs(spec.weights.sum() - 1.0) <= 1e-10
    assert spec.size == spec.poles.size + 1
    assert interlacing_violations(spec).size == 0
    # absolute offsets never cross a pole, even when rounding lands on it
    poles = spec.poles.offsets
    assert np.all(spec.offsets[:-1] <= poles) and np.all(poles <= spec.offsets[1:])
    assert np.all(spec.weights > 0)


def test_jaynes_cummings_roots():
    g = 1e-4
    p = SystemParams(n_atoms_x=1, coupling_g=g, site_energy=1.5, photon_energy=1.5)
    spec = solve_quasienergies(build_active_poles(p))
    np.testing.assert_allclose(spec.lambdas, [1.5 - g, 1.5 + g], atol=1e-15)
    np.testing.assert_allclose(spec.weights, [0.5, 0.5], atol=1e-12)


def test_uncoupled_spectrum():
    p = SystemParams(n_atoms_x=5, coupling_g=0.0, photon_energy=1.2)
    spec = solve_quasienergies(build_active_poles(p))
    assert spec.weights.sum() == 1.0
    photon = spec.offsets[spec.weights == 1.0]
    np.testing.assert_allclose(photon + spec.poles.reference, [1.2])
    assert (spec.anchor == -1).sum() == 1


def test_eigenvector_residual():
    params = SystemParams.from_detuning(n_atoms_x=41, detuning=5e-6, collective_coupling=30e-6)
    spec = solve_quasienergies(build_active_poles(params))
    B = bordered_matrix(spec.poles)
    for m in range(spec.size):
        v = eigenvector(spec, m)
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)
        r = B @ v - spec.offsets[m] * v
        assert np.linalg.norm(r) <= 1e-12 * max(1.0, np.abs(B).max())
        assert v[0] ** 2 == pytest.approx(spec.weights[m], abs=1e-13)


def test_mode_amplitudes_split_degenerate_poles():
    params = SystemParams.from_detuning(n_atoms_x=6, n_atoms_y=6, detuning=0.0,
                                        collective_coupling=1e-3, hop_w=0.01)
    spec = solve_quasienergies(build_active_poles(params))
    B = bordered_matrix(spec.poles, expand_modes=True)
    for m in range(spec.size):
        v = eigenvector(spec, m)
        full = np.concatenate([v[:1], mode_amplitudes(spec.poles, v[1:])])
        np.testing.assert_allclose(B @ full, spec.offsets[m] * full, atol=1e-13)


def test_secular_equation_holds_at_roots():
    params = SystemParams.from_detuning(n_atoms_x=31, detuning=0.0, collective_coupling=1e-3,
                                        hop_w=1e-3)
    spec = solve_quasienergies(build_active_poles(params))
    assert np.max(np.abs(spec.residual)) < 1e-15
    G = secular_g(spec.offsets[0], spec.poles, relative=True)
    lhs = spec.offsets[0] - spec.poles.shaft_offset
    assert lhs == pytest.approx(-params.coupling_g**2 * G, rel=1e-10)


def test_secular_g_guard():
    params = SystemParams.from_detuning(n_atoms_x=5, detuning=0.0, collective_coupling=1e-3)
    poles = build_active_poles(params)
    with pytest.raises(ZeroDivisionError):
        secular_g(poles.energies[0], poles)


def test_well_degeneracy_structure():
    params = SystemParams.from_detuning(n_atoms_x=14, n_atoms_y=14, detuning=0.0,
                                        collective_coupling=1e-4)
    poles = build_active_poles(params)
    labels = poles.mode_labels
    diag = labels[:, 0] == labels[:, 1]
    mult = poles.multiplicity[poles.mode_group]
    assert np.all(mult[diag] == 1)
    assert np.all(mult[~diag] == 2)
    assert poles.multiplicity[0] == 1


def test_branch_summary_resonant_split():
    G = 30e-6
    params = SystemParams.from_detuning(n_atoms_x=2001, detuning=0.0, collective_coupling=G)
    spec = solve_quasienergies(build_active_poles(params))
    s = branch_summary(spec)
    assert s["two_level_upper"] - s["two_level_lower"] == pytest.approx(2 * G)
    assert abs(s["lower"] - s["two_level_lower"]) < 0.1 * G
    assert spec.branch[0] == "lower"
    assert list(spec.branch).count("upper-star") == 1


def test_interlacing_check_detects_a_misplaced_root():
    params = SystemParams.from_detuning(n_atoms_x=21, detuning=0.0, collective_coupling=1e-3,
                                        hop_w=1e-3)
    spec = solve_quasienergies(build_active_poles(params))
    assert interlacing_violations(spec).size == 0
    spec.tau[3] = -spec.tau[3]
    assert 3 in interlacing_violations(spec)
