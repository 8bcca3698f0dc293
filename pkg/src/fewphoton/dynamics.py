"""One-photon-sector dynamics by spectral superposition of the quasi-energy states.

Starting from one photon and no excitons, the state at time ``t`` is

    phi(t) = sum_m b_m psi_m exp(-i lam_m t / hbar),   b_m^2 = 1 / P_m,

evaluated directly at every requested time, with no time stepping.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import QuasiEnergySpectrum, _gaps, mode_amplitudes

_BATCH_ELEMENTS = 2_000_000


@dataclass
class SectorState:
    """Amplitudes over ``[photon, mode_1, ..., mode_M]`` at one time (ns).

    Mode entries follow ``poles.mode_labels`` (photon-coupled modes only;
    uncoupled modes stay empty forever).
    """

    basis_labels: list
    amplitudes: np.ndarray
    time: float
    mode_gamma: np.ndarray = field(repr=False, default=None)
    n_sites: int = 1

    @property
    def photon_population(self) -> float:
        return float(abs(self.amplitudes[0]) ** 2)

    @property
    def norm2(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))


@dataclass
class TimeSeries:
    """Observables sampled on a time grid (ns).

    ``channels`` holds ``exciton_total``, ``collective_pop``, ``residual``,
    ``photon_pop`` and ``energy`` (eV above the band bottom). ``mode_amplitudes``
    holds ``|C_j(t)|`` for ``mode_labels``.
    """

    times: np.ndarray
    channels: dict
    mode_labels: np.ndarray
    mode_amplitudes: np.ndarray
    mode_mean_population: np.ndarray
    dropped_weight: float
    reference: float

    @property
    def checksum(self) -> np.ndarray:
        return 1.0 - (self.channels["exciton_total"] + self.channels["photon_pop"])


def mode_labels_text(labels) -> list:
    labels = np.asarray(labels)
    if labels.ndim == 1:
        return [f"k={k}" for k in labels]
    return [f"k=({kx},{ky})" for kx, ky in labels]


def _response(spectrum: QuasiEnergySpectrum, roots, poles_idx=None):
    """``g gamma_j / (lam_m - eps_j)`` for the chosen roots (rows) and merged poles."""
    p = spectrum.poles
    gaps = _gaps(p.offsets, spectrum.anchor[roots], spectrum.tau[roots], spectrum.offsets[roots])
    coup = p.coupling_g * p.couplings
    if poles_idx is not None:
        gaps = gaps[:, poles_idx]
        coup = coup[poles_idx]
    with np.errstate(divide="ignore"):
        K = -coup[None, :] / gaps
    # g == 0: the pole roots are pure exciton states, the photon root carries nothing
    if p.coupling_g == 0:
        K = np.zeros_like(gaps)
    return K


def propagate_spectral(spectrum: QuasiEnergySpectrum, t: float, *, global_phase=True) -> SectorState:
    """Exact state at time ``t`` from the full spectral sum.

    Phases are ``exp(-i lam t / hbar)``. With ``global_phase=False`` the common
    factor ``exp(-i eps_0 t / hbar)`` is dropped (frame of the band bottom).
    """
    p = spectrum.poles
    hbar = p.hbar
    w = spectrum.weights
    keep = np.flatnonzero(w > 0)
    phase = w[keep] * np.exp(-1j * spectrum.offsets[keep] * t / hbar)
    photon = phase.sum()
    groups = np.zeros(p.size, dtype=complex)
    batch = max(1, _BATCH_ELEMENTS // p.size)
    for s in range(0, len(keep), batch):
        sl = keep[s:s + batch]
        groups += phase[s:s + batch] @ _response(spectrum, sl)
    if p.coupling_g == 0:
        groups[:] = 0.0
    amps = np.concatenate([[photon], mode_amplitudes(p, groups)])
    if global_phase:
        amps = amps * np.exp(-1j * p.reference * t / hbar)
    return SectorState(basis_labels=["photon"] + mode_labels_text(p.mode_labels),
                       amplitudes=amps, time=float(t), mode_gamma=p.mode_gamma,
                       n_sites=p.n_sites)


def exciton_population(state: SectorState) -> float:
    return float(np.sum(np.abs(state.amplitudes[1:]) ** 2))


def collective_population(state: SectorState) -> float:
    """Population of the uniform one-exciton state ``R^+|0> / sqrt(n_sites)``."""
    overlap = np.dot(state.mode_gamma, state.amplitudes[1:]) / np.sqrt(state.n_sites)
    return float(abs(overlap) ** 2)


def residual_population(state: SectorState) -> float:
    """Exciton population outside the collective state."""
    return exciton_population(state) - collective_population(state)


def per_mode_populations(state: SectorState, mode_window, poles) -> np.ndarray:
    """``|C_j|`` for modes whose indices all lie in ``mode_window = (lo, hi)``.

    Returns ``(labels, magnitudes)``.
    """
    idx = _window_index(poles.mode_labels, mode_window, max(poles.lattice))
    return poles.mode_labels[idx], np.abs(state.amplitudes[1:][idx])


def _window_index(labels, mode_window, top):
    labels = np.asarray(labels)
    lo, hi = mode_window
    if lo < 1 or hi < lo or hi > top:
        raise ValueError(f"mode window {mode_window} outside 1..{top}")
    inside = (labels >= lo) & (labels <= hi)
    if labels.ndim == 2:
        inside = inside.all(axis=1)
    return np.flatnonzero(inside)


def lower_polariton_state(spectrum: QuasiEnergySpectrum) -> SectorState:
    """The exact lower-branch eigenstate as a state at ``t = 0``."""
    from .spectral import eigenvector

    p = spectrum.poles
    vec = eigenvector(spectrum, 0)
    amps = np.concatenate([vec[:1], mode_amplitudes(p, vec[1:])]).astype(complex)
    return SectorState(basis_labels=["photon"] + mode_labels_text(p.mode_labels),
                       amplitudes=amps, time=0.0, mode_gamma=p.mode_gamma, n_sites=p.n_sites)


def ladder_lower_polariton(spectrum: QuasiEnergySpectrum) -> np.ndarray:
    """Ladder-operator form of the lower branch: every mode placed at the band bottom.

    Components ``[1, g gamma_j / (lam_0 - eps_0)]``, normalized. Differs from the
    exact eigenvector by the dispersion of ``eps_j`` around ``eps_0``.
    """
    p = spectrum.poles
    vec = np.concatenate([[1.0], p.coupling_g * p.mode_gamma / spectrum.offsets[0]])
    return vec / np.linalg.norm(vec)


def bordered_apply(spectrum: QuasiEnergySpectrum, amplitudes: np.ndarray) -> np.ndarray:
    """Apply the one-photon Hamiltonian (offsets from the band bottom) to mode-basis amplitudes."""
    p = spectrum.poles
    border = p.coupling_g * p.mode_gamma
    out = np.empty_like(amplitudes)
    out[0] = p.shaft_offset * amplitudes[0] + border @ amplitudes[1:]
    out[1:] = border * amplitudes[0] + p.mode_offsets * amplitudes[1:]
    return out


def evolve(spectrum: QuasiEnergySpectrum, times, *, root_cutoff=1e-14, pop_cutoff=1e-16,
           mode_window=None, time_chunk=256) -> TimeSeries:
    """Observables on ``times`` from the spectral sum.

    Roots with weight below ``root_cutoff`` and merged poles whose infinite-time
    mean population is below ``pop_cutoff`` are skipped; the discarded photon
    weight is reported in ``dropped_weight`` and shows up in the checksum.
    """
    p = spectrum.poles
    hbar = p.hbar
    times = np.asarray(times, dtype=float)
    w = spectrum.weights
    roots = np.flatnonzero(w >= root_cutoff)
    dropped = float(np.sum(w) - np.sum(w[roots]))

    K = _response(spectrum, roots)                      # roots x poles
    mean_pop = (w[roots] ** 2) @ (K**2)                 # long-time mean per merged pole
    keep = mean_pop >= pop_cutoff
    labels = p.mode_labels
    if mode_window is not None:
        win = _window_index(labels, mode_window, max(p.lattice))
        keep[np.unique(p.mode_group[win])] = True
    else:
        win = np.zeros(0, dtype=int)
    pole_idx = np.flatnonzero(keep)
    Kt = np.ascontiguousarray(K[:, pole_idx].T)
    del K
    coup = p.couplings[pole_idx]
    offs = p.offsets[pole_idx]
    g = p.coupling_g
    # mode -> column within K for the exported window
    col = np.full(p.size, -1)
    col[pole_idx] = np.arange(len(pole_idx))
    win_cols = col[p.mode_group[win]]
    win_share = p.mode_gamma[win] / p.couplings[p.mode_group[win]]

    nt = len(times)
    photon_pop = np.empty(nt)
    exc = np.empty(nt)
    coll = np.empty(nt)
    energy = np.empty(nt)
    modes = np.empty((nt, len(win)))
    for s in range(0, nt, time_chunk):
        t = times[s:s + time_chunk]
        E = w[roots][:, None] * np.exp(-1j * np.outer(spectrum.offsets[roots], t) / hbar)
        photon = E.sum(axis=0)
        # one real matmul over stacked [Re | Im]; strided complex views miss BLAS
        CC = Kt @ np.concatenate([E.real, E.imag], axis=1)
        C = CC[:, :len(t)] + 1j * CC[:, len(t):]        # merged poles x times
        absC2 = np.abs(C) ** 2
        photon_pop[s:s + len(t)] = np.abs(photon) ** 2
        exc[s:s + len(t)] = absC2.sum(axis=0)
        coll[s:s + len(t)] = np.abs(coup @ C) ** 2 / p.n_sites
        energy[s:s + len(t)] = (p.shaft_offset * np.abs(photon) ** 2 + offs @ absC2
                                + 2.0 * g * np.real(np.conj(photon) * (coup @ C)))
        if len(win):
            modes[s:s + len(t)] = (np.abs(C[win_cols]) * np.abs(win_share)[:, None]).T
    channels = {
        "exciton_total": exc,
        "collective_pop": coll,
        "residual": exc - coll,
        "photon_pop": photon_pop,
        "energy": energy,
    }
    mean_modes = mean_pop[p.mode_group[win]] * win_share**2
    return TimeSeries(times=times, channels=channels, mode_labels=labels[win],
                      mode_amplitudes=modes, mode_mean_population=mean_modes,
                      dropped_weight=dropped, reference=p.reference)


def default_time_grid(t_max=3.0, n_points=2000, prefix_t=0.15, prefix_points=500):
    """Uniform grid with a denser prefix: ``prefix_points`` on ``[0, prefix_t)``, the rest after."""
    if prefix_points <= 0 or prefix_t <= 0:
        return np.linspace(0.0, t_max, n_points)
    if not 0 < prefix_t < t_max or prefix_points >= n_points:
        raise ValueError("dense prefix must fit inside the grid")
    head = np.linspace(0.0, prefix_t, prefix_points, endpoint=False)
    tail = np.linspace(prefix_t, t_max, n_points - prefix_points)
    return np.concatenate([head, tail])


def dominant_frequency(times, signal) -> float:
    """Angular frequency (rad/ns) of the strongest non-DC line of a uniformly sampled signal."""
    times = np.asarray(times)
    dt = times[1] - times[0]
    x = np.asarray(signal) - np.mean(signal)
    n = 8 * len(x)
    spec = np.abs(np.fft.rfft(x * np.hanning(len(x)), n=n))
    freqs = 2.0 * np.pi * np.fft.rfftfreq(n, d=dt)
    return float(freqs[1:][np.argmax(spec[1:])])


def oscillation_period(times, signal) -> float:
    """Mean spacing of successive maxima of ``signal`` (ns)."""
    from scipy.signal import find_peaks

    x = np.asarray(signal)
    peaks, _ = find_peaks(x, prominence=0.25 * (x.max() - x.min()))
    if len(peaks) < 2:
        raise ValueError("fewer than two maxima in the signal")
    return float(np.mean(np.diff(np.asarray(times)[peaks])))
