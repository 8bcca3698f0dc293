"""One-photon quasi-energies: a photon state bordered onto a diagonal of exciton poles.

The coupled problem is an arrowhead matrix. Its eigenvalues are the roots of

    f(lam) = (hw - lam) - g^2 * G(lam),    G(lam) = sum_j gamma_j^2 / (eps_j - lam)

with exactly one root in every gap between distinct poles plus one on each
side. Each root is stored relative to an anchor pole, ``lam = eps_anchor + tau``,
so ``eps_j - lam`` is formed from pole differences and never loses digits when
a root hugs its pole.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import (SystemParams, active_modes_1d, active_modes_2d, exciton_offset_1d,
                    oscillator_amplitude_1d)

log = logging.getLogger(__name__)

EPS = np.finfo(float).eps
DEGENERACY_RTOL = 1e-12
BISECTION_RWIDTH = 1e-3
# entries of the (roots x poles) work array processed per batch
_BATCH_ELEMENTS = 2_000_000


class BracketError(RuntimeError):
    """A root could not be isolated; carries the offending intervals."""


@dataclass(frozen=True)
class ActivePoleSet:
    """Distinct photon-coupled exciton poles, ascending.

    Energies are stored as ``offsets`` above ``reference`` (the band bottom).
    Modes with identical energy are merged into one pole with coupling
    ``sqrt(sum gamma^2)``; the per-mode data needed to undo the merge is kept in
    ``mode_labels``, ``mode_gamma`` and ``mode_group``.
    """

    reference: float
    offsets: np.ndarray
    couplings: np.ndarray
    multiplicity: np.ndarray
    shaft_offset: float
    coupling_g: float
    mode_labels: np.ndarray
    mode_offsets: np.ndarray
    mode_gamma: np.ndarray
    mode_group: np.ndarray
    n_sites: int
    lattice: tuple
    hbar: float

    @property
    def energies(self) -> np.ndarray:
        return self.reference + self.offsets

    @property
    def shaft_energy(self) -> float:
        return self.reference + self.shaft_offset

    @property
    def size(self) -> int:
        return len(self.offsets)

    @property
    def coupling_mass(self) -> float:
        """``sum gamma^2`` over the photon-coupled modes."""
        return float(np.sum(self.couplings**2))

    @property
    def span(self) -> float:
        lo = min(self.offsets[0], self.shaft_offset)
        hi = max(self.offsets[-1], self.shaft_offset)
        return float(hi - lo)

    def with_shaft(self, shaft_offset: float) -> "ActivePoleSet":
        return replace(self, shaft_offset=float(shaft_offset))


def _group_poles(offsets, gamma, labels, n_sites, params):
    order = np.lexsort((np.arange(len(offsets)), offsets))
    offsets, gamma, labels = offsets[order], gamma[order], labels[order]
    scale = max(float(np.max(np.abs(offsets))), params.hop_w)
    new_group = np.ones(len(offsets), dtype=bool)
    new_group[1:] = np.diff(offsets) > DEGENERACY_RTOL * scale
    group = np.cumsum(new_group) - 1
    n_groups = group[-1] + 1
    mass = np.bincount(group, weights=gamma**2, minlength=n_groups)
    mult = np.bincount(group, minlength=n_groups)
    # group energy: the first (smallest) member; members agree to DEGENERACY_RTOL
    pole_offsets = offsets[new_group]
    return ActivePoleSet(
        reference=params.band_bottom,
        offsets=pole_offsets,
        couplings=np.sqrt(mass),
        multiplicity=mult,
        shaft_offset=params.detuning,
        coupling_g=params.coupling_g,
        mode_labels=labels,
        mode_offsets=offsets,
        mode_gamma=gamma,
        mode_group=group,
        n_sites=n_sites,
        lattice=(params.n_atoms_x, params.n_atoms_y),
        hbar=params.hbar,
    )


def build_active_poles(params: SystemParams) -> ActivePoleSet:
    """Photon-coupled poles of a chain or a square well (geometry from ``params``)."""
    N = params.n_atoms_x
    if N < 1:
        raise ValueError("empty active set")
    if not params.is_2d:
        k = active_modes_1d(N)
        offsets = exciton_offset_1d(k, N, params.hop_w)
        gamma = oscillator_amplitude_1d(k, N)
        labels = k
    else:
        Nx, Ny = params.n_atoms_x, params.n_atoms_y
        labels = active_modes_2d(Nx, Ny)
        ox = exciton_offset_1d(active_modes_1d(Nx), Nx, params.hop_w)
        oy = exciton_offset_1d(active_modes_1d(Ny), Ny, params.hop_w)
        gx = oscillator_amplitude_1d(active_modes_1d(Nx), Nx)
        gy = oscillator_amplitude_1d(active_modes_1d(Ny), Ny)
        # min/max ordering makes (kx, ky) and (ky, kx) sum to bit-identical offsets
        a, b = ox[:, None], oy[None, :]
        offsets = (np.minimum(a, b) + np.maximum(a, b)).ravel()
        gamma = (gx[:, None] * gy[None, :]).ravel()
    return _group_poles(np.asarray(offsets, dtype=float), np.asarray(gamma, dtype=float),
                        labels, params.n_sites, params)


def secular_g(lam, poles: ActivePoleSet, *, relative=False):
    """``G(lam) = sum_j gamma_j^2 / (eps_j - lam)`` in 1/eV.

    ``lam`` is an absolute energy unless ``relative`` is set, in which case it
    is measured from ``poles.reference``. Raises ``ZeroDivisionError`` when
    ``lam`` falls inside the guard band around a pole.
    """
    x = np.asarray(lam, dtype=float) - (0.0 if relative else poles.reference)
    diff = poles.offsets[None, :] - np.atleast_1d(x)[:, None]
    guard = 1e3 * EPS * max(poles.span, abs(poles.reference) * EPS)
    if np.any(np.abs(diff) <= guard):
        raise ZeroDivisionError("lambda lies within the guard band of a pole")
    out = np.sum(poles.couplings[None, :] ** 2 / diff, axis=1)
    return out if np.ndim(lam) else float(out[0])


@dataclass
class QuasiEnergySpectrum:
    """Roots of the secular equation with their photon weights.

    ``offsets`` are quasi-energies above ``poles.reference``. A root with
    ``anchor >= 0`` equals ``poles.offsets[anchor] + tau``; ``anchor == -1``
    marks the photon root of an uncoupled (``g == 0``) system.
    """

    poles: ActivePoleSet
    offsets: np.ndarray
    anchor: np.ndarray
    tau: np.ndarray
    norms: np.ndarray
    weights: np.ndarray
    residual: np.ndarray
    silent_levels: list = field(default_factory=list)
    branch: np.ndarray | None = None

    @property
    def lambdas(self) -> np.ndarray:
        return self.poles.reference + self.offsets

    @property
    def size(self) -> int:
        return len(self.offsets)

    def pole_gaps(self) -> np.ndarray:
        """``eps_j - lam_m`` for all roots (rows) and poles (columns)."""
        return _gaps(self.poles.offsets, self.anchor, self.tau, self.offsets)


def _gaps(pole_offsets, anchor, tau, offsets):
    anchored = anchor >= 0
    a = np.where(anchored, anchor, 0)
    diff = (pole_offsets[None, :] - pole_offsets[a][:, None]) - tau[:, None]
    if not anchored.all():
        diff[~anchored] = pole_offsets[None, :] - offsets[~anchored][:, None]
    return diff


def _f_and_df(pole_offsets, c, shaft, anchor, tau):
    diff = (pole_offsets[None, :] - pole_offsets[anchor][:, None]) - tau[:, None]
    r = c[None, :] / diff
    f = (shaft - pole_offsets[anchor] - tau) - r.sum(axis=1)
    df = -1.0 - (r / diff).sum(axis=1)
    return f, df


def _decoupled_spectrum(poles: ActivePoleSet) -> QuasiEnergySpectrum:
    M = poles.size
    offsets = np.concatenate([[poles.shaft_offset], poles.offsets])
    order = np.argsort(offsets, kind="stable")
    anchor = np.concatenate([[-1], np.arange(M)])[order]
    weights = np.concatenate([[1.0], np.zeros(M)])[order]
    norms = np.where(weights > 0, 1.0, np.inf)
    silent = [(float(poles.reference + poles.offsets[j]), int(d - 1))
              for j, d in enumerate(poles.multiplicity) if d > 1]
    spec = QuasiEnergySpectrum(poles=poles, offsets=offsets[order], anchor=anchor,
                               tau=np.zeros(M + 1), norms=norms, weights=weights,
                               residual=np.zeros(M + 1), silent_levels=silent)
    spec.branch = identify_branches(spec)
    return spec


def _brackets(poles: ActivePoleSet):
    """Initial brackets ``[lo, hi]`` (offsets) for roots 0..M."""
    off = poles.offsets
    M = len(off)
    bound = poles.coupling_g * np.sqrt(poles.coupling_mass)
    lo = np.empty(M + 1)
    hi = np.empty(M + 1)
    lo[1:] = off
    hi[:-1] = off
    # arrowhead eigenvalues lie within [min diag - |border|, max diag + |border|]
    lo[0] = min(poles.shaft_offset, off[0]) - bound
    hi[M] = max(poles.shaft_offset, off[-1]) + bound
    return lo, hi


def _expand_exterior(poles, c, lo, hi):
    """Grow the outer brackets geometrically until f changes sign."""
    off, shaft = poles.offsets, poles.shaft_offset
    M = len(off)
    for side in (0, M):
        anchor = np.array([0 if side == 0 else M - 1])
        for _ in range(200):
            edge = lo[0] if side == 0 else hi[M]
            tau = np.array([edge - off[anchor[0]]])
            f, _ = _f_and_df(off, c, shaft, anchor, tau)
            if (side == 0 and f[0] > 0) or (side == M and f[0] < 0):
                break
            width = max(abs(tau[0]), EPS * max(1.0, abs(edge)))
            if side == 0:
                lo[0] = off[0] - 2.0 * width
            else:
                hi[M] = off[-1] + 2.0 * width
        else:
            raise BracketError(f"exterior bracket failed on side {side}: [{lo[side]}, {hi[side]}]")


def _solve_batch(off, c, shaft, lo, hi, idx, max_newton=60):
    M = len(off)
    left = np.clip(idx - 1, 0, M - 1)
    right = np.clip(idx, 0, M - 1)
    mid = 0.5 * (lo + hi)
    f_mid, _ = _f_and_df(off, c, shaft, left, mid - off[left])
    # f decreases through each gap: f(mid) < 0 puts the root in the left half
    use_left = f_mid < 0
    use_left[idx == 0] = False
    use_left[idx == M] = True
    anchor = np.where(use_left, left, right)
    tl = np.where(use_left, 0.0, np.where(idx == 0, lo - off[anchor], mid - off[anchor]))
    th = np.where(use_left, np.where(idx == M, hi - off[anchor], mid - off[anchor]), 0.0)

    target = BISECTION_RWIDTH * (th - tl)
    while True:
        active = (th - tl) > target
        if not active.any():
            break
        tm = 0.5 * (tl + th)
        f, _ = _f_and_df(off, c, shaft, anchor, tm)
        neg = (f < 0) & active
        pos = (f >= 0) & active
        th = np.where(neg, tm, th)
        tl = np.where(pos, tm, tl)

    # Newton on tau * f(tau): the anchor pole's singularity is divided out, so
    # pole-hugging roots converge from the bracket without overshoot.
    tau = 0.5 * (tl + th)
    done = np.zeros(len(idx), dtype=bool)
    for _ in range(max_newton):
        f, df = _f_and_df(off, c, shaft, anchor, tau)
        th = np.where(f < 0, tau, th)
        tl = np.where(f > 0, tau, tl)
        step = -(tau * f) / (f + tau * df)
        new = tau + step
        bad = ~np.isfinite(new) | (new <= tl) | (new >= th)
        new = np.where(bad, 0.5 * (tl + th), new)
        tol = 2.0 * EPS * np.abs(new) + np.finfo(float).tiny
        done = done | (np.abs(new - tau) <= tol) | (f == 0) | ((th - tl) <= tol)
        tau = np.where(done, tau, new)
        if done.all():
            break
    else:
        bad = np.flatnonzero(~done)
        raise BracketError("root refinement did not converge for roots "
                           f"{idx[bad].tolist()} in tau-brackets "
                           f"{list(zip(tl[bad].tolist(), th[bad].tolist()))}")
    return anchor, tau


def solve_quasienergies(poles: ActivePoleSet) -> QuasiEnergySpectrum:
    """All ``M + 1`` roots of the secular equation, with norms and weights.

    Degenerate poles appear once (merged) in ``poles``; each contributes
    ``multiplicity - 1`` photon-free eigenvalues listed in ``silent_levels``.
    """
    g = poles.coupling_g
    if g == 0:
        return _decoupled_spectrum(poles)
    off, shaft = poles.offsets, poles.shaft_offset
    M = len(off)
    c = g * g * poles.couplings**2
    lo, hi = _brackets(poles)
    _expand_exterior(poles, c, lo, hi)

    anchor = np.empty(M + 1, dtype=int)
    tau = np.empty(M + 1)
    batch = max(1, _BATCH_ELEMENTS // M)
    for start in range(0, M + 1, batch):
        idx = np.arange(start, min(M + 1, start + batch))
        anchor[idx], tau[idx] = _solve_batch(off, c, shaft, lo[idx], hi[idx], idx)

    offsets = off[anchor] + tau
    norms = np.empty(M + 1)
    residual = np.empty(M + 1)
    for start in range(0, M + 1, batch):
        sl = slice(start, min(M + 1, start + batch))
        diff = (off[None, :] - off[anchor[sl]][:, None]) - tau[sl, None]
        r = c[None, :] / diff
        norms[sl] = 1.0 + np.sum(r / diff, axis=1)
        residual[sl] = (shaft - offsets[sl]) - np.sum(r, axis=1)
    silent = [(float(poles.reference + off[j]), int(d - 1))
              for j, d in enumerate(poles.multiplicity) if d > 1]
    spec = QuasiEnergySpectrum(poles=poles, offsets=offsets, anchor=anchor, tau=tau,
                               norms=norms, weights=1.0 / norms, residual=residual,
                               silent_levels=silent)
    spec.branch = identify_branches(spec)
    return spec


def interlacing_violations(spectrum: QuasiEnergySpectrum) -> np.ndarray:
    """Indices of roots that do not sit strictly inside their own pole gap.

    Checked on the anchored representation ``(anchor, tau)``: far from the band
    bottom a root can round onto its pole in absolute offsets while ``tau``
    still resolves the gap.
    """
    if spectrum.poles.coupling_g == 0:
        return np.zeros(0, dtype=int)
    off = spectrum.poles.offsets
    M = len(off)
    m = np.arange(M + 1)
    a, tau = spectrum.anchor, spectrum.tau
    gap_lo = np.concatenate([[np.inf], np.diff(off)])     # width of the gap left of pole j
    gap_hi = np.concatenate([np.diff(off), [np.inf]])     # width right of pole j
    from_left = (a == m - 1) & (tau > 0) & (tau < gap_hi[np.clip(a, 0, M - 1)])
    from_right = (a == m) & (tau < 0) & (-tau < gap_lo[np.clip(a, 0, M - 1)])
    ok = (from_left | from_right) & (a >= 0) & (a < M)
    return np.flatnonzero(~ok)


def eigenvector(spectrum: QuasiEnergySpectrum, m: int) -> np.ndarray:
    """Normalized eigenvector ``[photon, pole_1, ..., pole_M]`` of root ``m``.

    Exciton components are ``g gamma_j / (lam_m - eps_j)``, the sign that makes
    the vector an eigenvector of the bordered matrix with ``+g gamma_j`` couplings.
    Pole components refer to merged poles; expand with :func:`mode_amplitudes`.
    """
    poles = spectrum.poles
    if spectrum.anchor[m] < 0:
        vec = np.zeros(poles.size + 1)
        vec[0] = 1.0
        return vec
    if poles.coupling_g == 0:
        vec = np.zeros(poles.size + 1)
        vec[1 + spectrum.anchor[m]] = 1.0
        return vec
    gaps = _gaps(poles.offsets, spectrum.anchor[m:m + 1], spectrum.tau[m:m + 1],
                 spectrum.offsets[m:m + 1])[0]
    if np.any(gaps == 0):
        raise ZeroDivisionError(f"root {m} coincides with a pole")
    vec = np.concatenate([[1.0], -poles.coupling_g * poles.couplings / gaps])
    return vec / np.sqrt(spectrum.norms[m])


def mode_amplitudes(poles: ActivePoleSet, pole_components: np.ndarray) -> np.ndarray:
    """Spread merged-pole components back onto the individual modes.

    Only the photon-coupled combination ``gamma_mode / gamma_group`` inside a
    group is populated from the photon state, so this is exact for every
    non-silent eigenvector. Works on the last axis.
    """
    share = poles.mode_gamma / poles.couplings[poles.mode_group]
    return pole_components[..., poles.mode_group] * share


def initial_weights(spectrum: QuasiEnergySpectrum) -> np.ndarray:
    """``b_m^2 = 1 / P_m``: overlap of each root with the one-photon initial state."""
    return spectrum.weights


def identify_branches(spectrum: QuasiEnergySpectrum) -> np.ndarray:
    """Label roots ``lower`` / ``upper-star`` / ``background``.

    The lower branch is the root below every pole; the starred upper root is the
    heaviest root above the band bottom other than the lower one.
    """
    n = spectrum.size
    labels = np.full(n, "background", dtype=object)
    if spectrum.poles.coupling_g == 0:
        labels[np.argmax(spectrum.weights)] = "lower"
        return labels
    labels[0] = "lower"
    upper = np.flatnonzero((np.arange(n) > 0) & (spectrum.offsets > 0))
    if upper.size:
        labels[upper[np.argmax(spectrum.weights[upper])]] = "upper-star"
    return labels


def branch_summary(spectrum: QuasiEnergySpectrum) -> dict:
    """Lower and starred-upper roots next to the two-level polariton overlay."""
    from .refmodels import two_level_polariton

    poles = spectrum.poles
    lam = spectrum.lambdas
    out = {"lower": float(lam[0]), "lower_weight": float(spectrum.weights[0])}
    star = np.flatnonzero(spectrum.branch == "upper-star")
    if star.size:
        out["upper_star"] = float(lam[star[0]])
        out["upper_star_weight"] = float(spectrum.weights[star[0]])
    levels, weights = two_level_polariton(poles.shaft_offset, 0.0,
                                          poles.coupling_g * np.sqrt(poles.n_sites))
    out["two_level_lower"] = float(poles.reference + levels[0])
    out["two_level_upper"] = float(poles.reference + levels[1])
    out["two_level_lower_weight"] = float(weights[0])
    out["two_level_upper_weight"] = float(weights[1])
    # weights split as P_0^-1 and 1 - P_0^-1 in the ladder picture
    out["upper_cluster_weight"] = float(1.0 - spectrum.weights[0])
    return out


def bordered_matrix(poles: ActivePoleSet, *, expand_modes=False) -> np.ndarray:
    """Dense arrowhead matrix in offsets from ``poles.reference``.

    With ``expand_modes`` every photon-coupled mode gets its own row (no
    merging of degenerate poles); row 0 is the photon.
    """
    if expand_modes:
        diag = poles.mode_offsets
        border = poles.coupling_g * poles.mode_gamma
    else:
        diag = poles.offsets
        border = poles.coupling_g * poles.couplings
    n = len(diag) + 1
    H = np.zeros((n, n))
    H[0, 0] = poles.shaft_offset
    H[np.arange(1, n), np.arange(1, n)] = diag
    H[0, 1:] = border
    H[1:, 0] = border
    return H
