"""Closed-form reference models: two-level polariton and the three-level resonance.

All energies are measured from the band bottom (main excited level at 0).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import HBAR_EV_NS

SQRT2 = np.sqrt(2.0)


def two_level_polariton(photon, exciton, coupling):
    """Eigenvalues and photon weights of a photon coupled to one exciton level.

    Returns ``(levels, weights)`` with ``levels = [lower, upper]`` in the frame of
    the inputs and ``weights`` the squared projections of the photon state.
    """
    mean = 0.5 * (photon + exciton)
    half = 0.5 * (photon - exciton)
    root = np.hypot(half, coupling)
    levels = np.array([mean - root, mean + root])
    if coupling == 0:
        weights = np.array([1.0, 0.0]) if photon < exciton else np.array([0.0, 1.0])
        if photon == exciton:
            weights = np.array([0.5, 0.5])
        return levels, weights
    # photon weight of the lower level: cos^2 of the mixing angle
    w_lower = 0.5 * (1.0 - half / root)
    return levels, np.array([w_lower, 1.0 - w_lower])


def resonant_offset(delta, g):
    """Upper-level offset that puts it on the upper polariton: ``(delta + sqrt(4g^2 + delta^2)) / 2``."""
    if not g > 0:
        raise ValueError("g must be positive")
    return 0.5 * (delta + np.sqrt(4.0 * g * g + delta * delta))


@dataclass(frozen=True)
class ThreeLevelParams:
    """Ground+photon state, main level (coupling g) and an upper level (coupling g*mu).

    ``delta`` is the photon detuning from the main level and ``Delta`` the upper
    level's offset above it. ``Delta=None`` places the upper level on resonance.
    """

    g: float
    mu: float
    delta: float = 0.0
    Delta: float | None = None
    hbar: float = HBAR_EV_NS

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be non-negative")
        if self.Delta is None:
            object.__setattr__(self, "Delta", float(resonant_offset(self.delta, self.g)))

    @property
    def linear_regime(self) -> bool:
        return self.mu <= 0.1

    def hamiltonian(self) -> np.ndarray:
        g, gm = self.g, self.g * self.mu
        return np.array([[self.delta, g, gm],
                         [g, 0.0, 0.0],
                         [gm, 0.0, self.Delta]])

    def slow_period(self) -> float:
        """Period of the upper-level exchange, ``2 pi hbar / (sqrt 2 g mu)``."""
        return 2.0 * np.pi * self.hbar / (SQRT2 * self.g * self.mu)


def _closed_form_regime(p: ThreeLevelParams):
    if p.delta != 0 or not np.isclose(p.Delta, p.g, rtol=1e-12, atol=0.0):
        raise ValueError("closed forms hold only for delta = 0, Delta = g")


def three_level_quasienergies(p: ThreeLevelParams):
    """``(linear, exact)`` quasi-energies for ``delta = 0, Delta = g``.

    ``linear`` is ``(-g, g - g mu/sqrt2, g + g mu/sqrt2)``, first order in mu;
    ``exact`` are the 3x3 eigenvalues, ascending.
    """
    _closed_form_regime(p)
    split = p.g * p.mu / SQRT2
    linear = np.array([-p.g, p.g - split, p.g + split])
    return linear, np.linalg.eigvalsh(p.hamiltonian())


def three_level_populations(p: ThreeLevelParams, t):
    """Closed-form ``(|C0|^2, |C1|^2, |C2|^2)`` at times ``t`` (ns).

    The system starts with the photon present and both excited levels empty.
    """
    _closed_form_regime(p)
    t = np.asarray(t, dtype=float)
    w = p.g / p.hbar
    fast = 0.5 * np.cos(2.0 * w * t) * np.cos(w * p.mu * t / SQRT2)
    slow = np.cos(SQRT2 * w * p.mu * t)
    c0 = 3.0 / 8.0 + fast + slow / 8.0
    c1 = 3.0 / 8.0 - fast + slow / 8.0
    c2 = 0.25 * (1.0 - slow)
    return c0, c1, c2


def three_level_amplitudes_exact(p: ThreeLevelParams, t):
    """Amplitudes from the eigendecomposition of the 3x3 Hamiltonian, shape (3, len(t))."""
    ev, V = np.linalg.eigh(p.hamiltonian())
    phases = np.exp(-1j * np.outer(ev, np.atleast_1d(t)) / p.hbar)
    return V @ (phases * V[0][:, None])


def three_level_populations_exact(p: ThreeLevelParams, t):
    return np.abs(three_level_amplitudes_exact(p, t)) ** 2


def mean_upper_population(p: ThreeLevelParams) -> float:
    """Infinite-time average of ``|C2|^2`` (no degenerate eigenvalues assumed)."""
    _, V = np.linalg.eigh(p.hamiltonian())
    return float(np.sum(V[0] ** 2 * V[2] ** 2))


def scan_resonant_offset(delta, g, mu, offsets):
    """Return the offset on the grid maximizing the mean upper-level population."""
    offsets = np.asarray(offsets, dtype=float)
    means = np.array([mean_upper_population(ThreeLevelParams(g=g, mu=mu, delta=delta, Delta=d))
                      for d in offsets])
    return float(offsets[np.argmax(means)]), means
