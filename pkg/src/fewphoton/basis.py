"""Field-free exciton and biexciton eigenbases of finite chains and square wells.

Energies are in eV, times in ns. Mode indices are 1-based throughout, as in the
standing-wave labelling ``k = 1..N`` of an open chain.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

HBAR_EV_NS = 6.582119569e-7


@dataclass(frozen=True, kw_only=True)
class SystemParams:
    """Physical parameters of a chain (``n_atoms_y == 0``) or a square well.

    ``coupling_g`` is the per-atom photon coupling; the collective coupling seen
    by the photon is ``g * sqrt(n_sites)``.
    """

    n_atoms_x: int
    n_atoms_y: int = 0
    hop_w: float = 0.25
    site_energy: float = 1.5
    coupling_g: float = 0.0
    photon_energy: float = 1.0
    hbar: float = HBAR_EV_NS

    def __post_init__(self):
        if int(self.n_atoms_x) != self.n_atoms_x or self.n_atoms_x < 1:
            raise ValueError(f"n_atoms_x must be a positive integer, got {self.n_atoms_x}")
        if int(self.n_atoms_y) != self.n_atoms_y or self.n_atoms_y < 0:
            raise ValueError(f"n_atoms_y must be a non-negative integer, got {self.n_atoms_y}")
        if not self.hop_w > 0:
            raise ValueError(f"hop_w must be positive, got {self.hop_w}")
        if not self.coupling_g >= 0:
            raise ValueError(f"coupling_g must be non-negative, got {self.coupling_g}")

    @property
    def is_2d(self) -> bool:
        return self.n_atoms_y > 0

    @property
    def n_sites(self) -> int:
        return self.n_atoms_x * (self.n_atoms_y if self.is_2d else 1)

    @property
    def band_bottom(self) -> float:
        """epsilon_0: bottom of the infinite-lattice exciton band."""
        return self.site_energy - (4.0 if self.is_2d else 2.0) * self.hop_w

    @property
    def detuning(self) -> float:
        return self.photon_energy - self.band_bottom

    @property
    def collective_coupling(self) -> float:
        return self.coupling_g * np.sqrt(self.n_sites)

    def with_detuning(self, detuning: float) -> "SystemParams":
        return replace(self, photon_energy=self.band_bottom + detuning)

    @classmethod
    def from_detuning(cls, *, n_atoms_x, detuning, collective_coupling=None,
                      coupling_g=None, n_atoms_y=0, hop_w=0.25, site_energy=1.5,
                      hbar=HBAR_EV_NS):
        """Build parameters from a detuning and either g or g*sqrt(n_sites)."""
        if (collective_coupling is None) == (coupling_g is None):
            raise ValueError("give exactly one of collective_coupling, coupling_g")
        n_sites = n_atoms_x * (n_atoms_y if n_atoms_y > 0 else 1)
        if coupling_g is None:
            coupling_g = collective_coupling / np.sqrt(n_sites)
        bottom = site_energy - (4.0 if n_atoms_y > 0 else 2.0) * hop_w
        return cls(n_atoms_x=n_atoms_x, n_atoms_y=n_atoms_y, hop_w=hop_w,
                   site_energy=site_energy, coupling_g=coupling_g,
                   photon_energy=bottom + detuning, hbar=hbar)

    def effective_mass(self, lattice_spacing: float) -> float:
        """Band-bottom effective mass hbar^2 / (2 w d^2), in eV ns^2 / length^2.

        Reporting only; nothing downstream uses it.
        """
        return self.hbar**2 / (2.0 * self.hop_w * lattice_spacing**2)


def _check_index(name, value, upper):
    v = np.asarray(value)
    if np.any(v < 1) or np.any(v > upper):
        raise ValueError(f"{name} must lie in 1..{upper}, got {value}")


def mode_shape(n, k, N):
    """Amplitude of standing-wave mode ``k`` on site ``n`` of an ``N``-site chain."""
    _check_index("n", n, N)
    _check_index("k", k, N)
    return np.sqrt(2.0 / (N + 1)) * np.sin(np.pi * np.multiply(n, k) / (N + 1))


def mode_matrix(N: int) -> np.ndarray:
    """Orthogonal ``N x N`` matrix ``chi[n-1, k-1]`` of all mode shapes."""
    idx = np.arange(1, N + 1)
    return mode_shape(idx[:, None], idx[None, :], N)


def exciton_offset_1d(k, N, hop_w):
    """Mode energy above the band bottom, ``4 w sin^2(pi k / 2(N+1))``.

    Equal to ``-2w cos(pi k/(N+1)) + 2w`` but free of cancellation near the
    band bottom, where the offset can be ~1e-9 eV against eV-scale energies.
    """
    return 4.0 * hop_w * np.sin(np.pi * np.asarray(k, dtype=float) / (2.0 * (N + 1))) ** 2


def exciton_energy_1d(k, params: SystemParams):
    N = params.n_atoms_x
    _check_index("k", k, N)
    return params.site_energy - 2.0 * params.hop_w + exciton_offset_1d(k, N, params.hop_w)


def exciton_energy_2d(kx, ky, params: SystemParams):
    if not params.is_2d:
        raise ValueError("exciton_energy_2d needs a well geometry (n_atoms_y > 0)")
    _check_index("kx", kx, params.n_atoms_x)
    _check_index("ky", ky, params.n_atoms_y)
    offset = (exciton_offset_1d(kx, params.n_atoms_x, params.hop_w)
              + exciton_offset_1d(ky, params.n_atoms_y, params.hop_w))
    return params.band_bottom + offset


def oscillator_amplitude_1d(k, N):
    """Photon coupling amplitude ``gamma_k = sum_n chi_nk`` (closed form).

    Zero for even ``k``; the oscillator strength is ``gamma_k**2`` and the
    strengths sum to ``N``.
    """
    _check_index("k", k, N)
    k = np.asarray(k)
    odd = (k % 2) == 1
    # sqrt(1 - (-1)^k) is sqrt(2) for odd k; even modes are set to an exact zero
    gamma = np.sqrt(2.0 / (N + 1)) / np.tan(np.pi * k / (2.0 * (N + 1)))
    out = np.where(odd, gamma, 0.0)
    return float(out) if out.ndim == 0 else out


def oscillator_amplitude_2d(kx, ky, Nx, Ny):
    """Exact well amplitude: the separable product of the two chain amplitudes."""
    return oscillator_amplitude_1d(kx, Nx) * oscillator_amplitude_1d(ky, Ny)


def oscillator_amplitude_2d_asymptotic(kx, ky, Nx, Ny):
    """Large-N limit ``4 sqrt((1-(-1)^kx)(1-(-1)^ky)(Nx+1)(Ny+1)) / (pi^2 kx ky)``.

    Diagnostic only; the dynamics always uses :func:`oscillator_amplitude_2d`.
    """
    kx = np.asarray(kx, dtype=float)
    ky = np.asarray(ky, dtype=float)
    parity = (1 - (-1.0) ** kx) * (1 - (-1.0) ** ky)
    return 4.0 * np.sqrt(parity * (Nx + 1) * (Ny + 1)) / (np.pi**2 * kx * ky)


def active_modes_1d(N: int) -> np.ndarray:
    """Odd mode indices, the only ones that couple to the photon."""
    return np.arange(1, N + 1, 2)


def active_modes_2d(Nx: int, Ny: int) -> np.ndarray:
    """(kx, ky) pairs with both indices odd, lexicographic order, shape (M, 2)."""
    kx, ky = np.meshgrid(active_modes_1d(Nx), active_modes_1d(Ny), indexing="ij")
    return np.column_stack([kx.ravel(), ky.ravel()])


def site_pairs(N: int) -> np.ndarray:
    """All site pairs ``(n1, n2)`` with ``n1 < n2``, 1-based, lexicographic."""
    i, j = np.triu_indices(N, k=1)
    return np.column_stack([i + 1, j + 1])


biexciton_labels = site_pairs  # (k1, k2) labels share the pair enumeration


def biexciton_energy(k1, k2, params: SystemParams):
    N = params.n_atoms_x
    _check_index("k1", k1, N)
    _check_index("k2", k2, N)
    if np.any(np.asarray(k1) >= np.asarray(k2)):
        raise ValueError("biexciton labels need k1 < k2")
    offset = exciton_offset_1d(k1, N, params.hop_w) + exciton_offset_1d(k2, N, params.hop_w)
    return 2.0 * params.band_bottom + offset


def biexciton_coefficients(k1: int, k2: int, N: int) -> np.ndarray:
    """Site-pair amplitudes ``chi_{n1 k1} chi_{n2 k2} - chi_{n1 k2} chi_{n2 k1}``.

    The result is indexed like :func:`site_pairs`.
    """
    if k1 >= k2:
        raise ValueError(f"biexciton labels need k1 < k2, got ({k1}, {k2})")
    _check_index("k1", k1, N)
    _check_index("k2", k2, N)
    pairs = site_pairs(N)
    n1, n2 = pairs[:, 0], pairs[:, 1]
    return (mode_shape(n1, k1, N) * mode_shape(n2, k2, N)
            - mode_shape(n1, k2, N) * mode_shape(n2, k1, N))


def collective_state_1d(N: int):
    """Mode-basis coefficients ``gamma_k / sqrt(N)`` of the uniform one-exciton state.

    Returns ``(k, coefficients)`` over the odd modes.
    """
    if N < 1:
        raise ValueError("N must be positive")
    k = active_modes_1d(N)
    return k, oscillator_amplitude_1d(k, N) / np.sqrt(N)
