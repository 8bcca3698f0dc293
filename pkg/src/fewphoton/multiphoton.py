"""Exact two-excitation sector of a chain coupled to one cavity mode.

The basis has three blocks, all with two quanta in total:

    |2 photons; vacuum>,  |1 photon; site n>,  |0 photons; sites n1 < n2>

Sites are hard-core: an excitation hops only onto an empty neighbour.
The Hamiltonian is assembled directly in this site basis, so no
exciton/biexciton transition matrix elements are needed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import krylov
from .basis import SystemParams, mode_matrix

DENSE_BUDGET = 4000          # largest matrix handed to a dense eigensolver
PROPAGATION_CAP = 400        # chain length limit for Krylov runs
PHASE_CAP = 2.0e6            # radians of ||H|| t / hbar a Krylov run may cover


class CapacityError(ValueError):
    """The requested size exceeds a desk-scale budget."""


@dataclass(frozen=True)
class TwoSectorBasis:
    n_atoms: int

    def __post_init__(self):
        if self.n_atoms < 2:
            raise ValueError("the two-exciton sector needs at least two sites")

    @property
    def n_pairs(self) -> int:
        return self.n_atoms * (self.n_atoms - 1) // 2

    @property
    def dimension(self) -> int:
        return 1 + self.n_atoms + self.n_pairs

    @property
    def one(self) -> slice:
        return slice(1, 1 + self.n_atoms)

    @property
    def pairs(self) -> slice:
        return slice(1 + self.n_atoms, self.dimension)

    def index_one(self, n: int) -> int:
        """Index of ``|1 photon; site n>`` (1-based site)."""
        return n

    def index_pair(self, n1: int, n2: int) -> int:
        """Index of ``|0 photons; sites n1 < n2>`` (1-based sites)."""
        if not 1 <= n1 < n2 <= self.n_atoms:
            raise ValueError(f"invalid site pair ({n1}, {n2})")
        i, j, N = n1 - 1, n2 - 1, self.n_atoms
        return 1 + N + i * N - i * (i + 1) // 2 + (j - i - 1)

    def labels(self) -> list:
        N = self.n_atoms
        out = [(2, ())]
        out += [(1, (n,)) for n in range(1, N + 1)]
        i, j = np.triu_indices(N, k=1)
        out += [(0, (a + 1, b + 1)) for a, b in zip(i, j)]
        return out


@dataclass(frozen=True)
class SparseHamiltonian:
    """Upper-triangle coordinate entries (``row <= col``), sorted by (row, col).

    Diagonal values are offsets from ``reference`` (twice the band bottom).
    """

    dimension: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    reference: float
    photon_offset: float
    n_atoms: int

    def to_csr(self, shift: float = 0.0) -> sp.csr_matrix:
        """Full symmetric matrix of ``H - (reference + shift)``."""
        off = self.rows != self.cols
        r = np.concatenate([self.rows, self.cols[off]])
        c = np.concatenate([self.cols, self.rows[off]])
        v = np.concatenate([self.values, self.values[off]])
        H = sp.csr_matrix((v, (r, c)), shape=(self.dimension, self.dimension))
        if shift:
            H = H - shift * sp.identity(self.dimension, format="csr")
        return H.tocsr()

    def to_dense(self, shift: float = 0.0) -> np.ndarray:
        return self.to_csr(shift).toarray()

    @property
    def vacuum_offset(self) -> float:
        """Diagonal entry of ``|2 photons; vacuum>``: ``2 (hw - eps_0)``."""
        return 2.0 * self.photon_offset


def _pair_index(i, j, N):
    return 1 + N + i * N - i * (i + 1) // 2 + (j - i - 1)


def build_two_sector_hamiltonian(params: SystemParams) -> SparseHamiltonian:
    """Sparse Hamiltonian of the chain with two quanta, offsets from ``2 eps_0``."""
    if params.is_2d:
        raise ValueError("the two-photon engine handles chains only")
    N = params.n_atoms_x
    basis = TwoSectorBasis(N)
    w, g = params.hop_w, params.coupling_g
    delta = params.detuning
    site = params.site_energy - params.band_bottom       # eps - eps_0 = 2w
    rows, cols, vals = [], [], []

    def add(r, c, v):
        r, c = np.broadcast_arrays(np.asarray(r), np.asarray(c))
        v = np.broadcast_to(np.asarray(v, dtype=float), r.shape)
        lo, hi = np.minimum(r, c), np.maximum(r, c)
        rows.append(lo.ravel())
        cols.append(hi.ravel())
        vals.append(v.ravel())

    n = np.arange(N)
    # |2;0>
    add(0, 0, 2.0 * delta)
    # |1; n>: photon + one exciton, nearest-neighbour hopping
    add(1 + n, 1 + n, delta + site)
    add(1 + n[:-1], 2 + n[:-1], -w)
    # b a_n^+ on |2;0> gives sqrt(2)
    add(0, 1 + n, g * np.sqrt(2.0))
    # |0; i<j>
    i, j = np.triu_indices(N, k=1)
    pidx = _pair_index(i, j, N)
    add(pidx, pidx, 2.0 * site)
    # hop the left excitation right (i -> i+1 < j) and the right one right (j -> j+1)
    m = i + 1 < j
    add(pidx[m], _pair_index(i[m] + 1, j[m], N), -w)
    m = j + 1 < N
    add(pidx[m], _pair_index(i[m], j[m] + 1, N), -w)
    # |1; i> -> |0; i, j> and |1; j> -> |0; i, j>
    add(1 + i, pidx, g)
    add(1 + j, pidx, g)

    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    order = np.lexsort((c, r))
    return SparseHamiltonian(dimension=basis.dimension, rows=r[order], cols=c[order],
                             values=v[order], reference=2.0 * params.band_bottom,
                             photon_offset=delta, n_atoms=N)


def vacuum_state(dimension: int) -> np.ndarray:
    v = np.zeros(dimension, dtype=complex)
    v[0] = 1.0
    return v


def reflection_permutation(N: int) -> np.ndarray:
    """Basis permutation for the mirror map ``n -> N + 1 - n`` (no signs for hard-core sites)."""
    perm = np.empty(TwoSectorBasis(N).dimension, dtype=int)
    perm[0] = 0
    n = np.arange(N)
    perm[1 + n] = 1 + (N - 1 - n)
    i, j = np.triu_indices(N, k=1)
    perm[_pair_index(i, j, N)] = _pair_index(N - 1 - j, N - 1 - i, N)
    return perm


def sector_isometry(N: int, parity: int = 1) -> sp.csr_matrix:
    """Orthonormal columns spanning the mirror-even (``parity=1``) or odd (``-1``) subspace.

    Column 0 of the even isometry is ``|2;0>``.
    """
    if parity not in (1, -1):
        raise ValueError("parity must be +1 or -1")
    perm = reflection_permutation(N)
    idx = np.arange(len(perm))
    lead = idx[idx <= perm] if parity == 1 else idx[idx < perm]
    single = perm[lead] == lead
    cols = np.arange(len(lead))
    amp = np.where(single, 1.0, np.sqrt(0.5))
    rows = np.concatenate([lead, perm[lead[~single]]])
    cc = np.concatenate([cols, cols[~single]])
    vals = np.concatenate([amp, parity * amp[~single]])
    return sp.csr_matrix((vals, (rows, cc)), shape=(len(perm), len(lead)))


def even_sector_isometry(N: int) -> sp.csr_matrix:
    return sector_isometry(N, 1)


def even_sector_dimension(N: int) -> int:
    perm = reflection_permutation(N)
    return int(np.count_nonzero(np.arange(len(perm)) <= perm))


def _block_of(U, basis: TwoSectorBasis) -> np.ndarray:
    """Block (0 vacuum, 1 one-exciton, 2 two-exciton) of each isometry column."""
    Uc = U.tocsc()
    first_row = Uc.indices[Uc.indptr[:-1]]
    return np.where(first_row == 0, 0, np.where(first_row <= basis.n_atoms, 1, 2))


@dataclass
class EvenEigensystem:
    """Eigenpairs of the mirror-even block, energies relative to ``2 hw``.

    ``vectors`` are columns in the even basis; ``isometry`` maps them to the
    full site basis.
    """

    levels: np.ndarray
    vectors: np.ndarray
    isometry: sp.csr_matrix
    n_atoms: int

    @property
    def weights(self) -> np.ndarray:
        return self.vectors[0] ** 2


def even_eigensystem(H: SparseHamiltonian, parity: int = 1) -> EvenEigensystem:
    """Dense diagonalization of one mirror block; :class:`CapacityError` past ``DENSE_BUDGET``."""
    U = sector_isometry(H.n_atoms, parity)
    if U.shape[1] > DENSE_BUDGET:
        raise CapacityError(f"mirror-sector dimension {U.shape[1]} (N={H.n_atoms}) exceeds the "
                            f"dense budget {DENSE_BUDGET}; use propagation-only mode")
    Heven = (U.T @ H.to_csr(H.vacuum_offset) @ U).toarray()
    ev, W = np.linalg.eigh(Heven)
    return EvenEigensystem(levels=ev, vectors=W, isometry=U, n_atoms=H.n_atoms)


def krylov_work(H: SparseHamiltonian, t_max: float, hbar=None) -> float:
    """Phase budget ``||H|| t / hbar`` (radians) of a Krylov run, with a Gershgorin bound on ``||H||``."""
    from .basis import HBAR_EV_NS

    A = H.to_csr(H.vacuum_offset)
    bound = float(np.max(np.asarray(abs(A).sum(axis=1)).ravel()))
    return bound * float(t_max) / (hbar or HBAR_EV_NS)


def propagate_two_sector(H: SparseHamiltonian, times, *, initial=None, hbar=None,
                         method="auto", tol=1e-10, krylov_dim=30, observe=None,
                         eigensystem: EvenEigensystem | None = None):
    """Amplitudes at ``times`` (ns), shape ``(len(times), dimension)``.

    The frame rotates at ``2 hw``, so ``|2;0>`` has no trivial phase. ``method``:

    * ``"even"``: spectral sum in the mirror-even block (``initial`` must be
      mirror-even; ``|2;0>`` is);
    * ``"dense"``: spectral sum over the full basis (small sizes);
    * ``"krylov"``: short-iteration Lanczos stepping;
    * ``"auto"``: ``"even"`` for ``|2;0>`` within the dense budget, else ``"dense"``
      or ``"krylov"`` by dimension.

    With ``observe``, returns ``[observe(state) for each time]`` instead of states.
    """
    from .basis import HBAR_EV_NS

    hbar = hbar or HBAR_EV_NS
    v0 = vacuum_state(H.dimension) if initial is None else np.asarray(initial, dtype=complex)
    times = np.asarray(times, dtype=float)
    if method == "auto":
        if initial is None and (eigensystem is not None
                                or even_sector_dimension(H.n_atoms) <= DENSE_BUDGET):
            method = "even"
        else:
            method = "dense" if H.dimension <= DENSE_BUDGET else "krylov"
    if method in ("even", "dense"):
        if method == "even":
            es = eigensystem or even_eigensystem(H)
            U = es.isometry
            ev, V = es.levels, es.vectors
            c0 = U.T @ v0
            if not np.allclose(U @ c0, v0, atol=1e-12):
                raise ValueError("initial state is not mirror-even")
        else:
            if H.dimension > DENSE_BUDGET:
                raise CapacityError(f"dimension {H.dimension} exceeds the dense budget {DENSE_BUDGET}")
            U = None
            ev, V = np.linalg.eigh(H.to_dense(H.vacuum_offset))
            c0 = v0
        c0 = V.T @ c0
        out = [] if observe else np.empty((len(times), H.dimension), dtype=complex)
        for s in range(0, len(times), 64):
            t = times[s:s + 64]
            block = V @ (np.exp(-1j * np.outer(ev, t) / hbar) * c0[:, None])
            block = (U @ block if U is not None else block).T
            if observe:
                out.extend(observe(v) for v in block)
            else:
                out[s:s + len(t)] = block
        return out
    if method != "krylov":
        raise ValueError(f"unknown method {method!r}")
    if H.n_atoms > PROPAGATION_CAP:
        raise CapacityError(f"N={H.n_atoms} exceeds the propagation cap {PROPAGATION_CAP}")
    work = krylov_work(H, times[-1] if len(times) else 0.0, hbar)
    if work > PHASE_CAP:
        raise CapacityError(f"Krylov run needs ||H|| t / hbar = {work:.3g} rad, above the cap "
                            f"{PHASE_CAP:.3g}; shorten the time window or reduce N")
    A = H.to_csr(H.vacuum_offset)
    return krylov.propagate(A.dot, v0, times, hbar=hbar, tol=tol, krylov_dim=krylov_dim,
                            observe=observe)


def block_populations(amps, N: int) -> dict:
    """Vacuum, one-exciton and two-exciton block populations, plus collective ones."""
    amps = np.atleast_2d(amps)
    basis = TwoSectorBasis(N)
    one = amps[:, basis.one]
    pairs = amps[:, basis.pairs]
    exc = np.sum(np.abs(one) ** 2, axis=1)
    biexc = np.sum(np.abs(pairs) ** 2, axis=1)
    coll_exc = np.abs(one.sum(axis=1)) ** 2 / N
    coll_biexc = np.abs(pairs.sum(axis=1)) ** 2 / basis.n_pairs
    return {
        "vacuum": np.abs(amps[:, 0]) ** 2,
        "exciton_total": exc,
        "biexciton_total": biexc,
        "exciton_collective": coll_exc,
        "biexciton_collective": coll_biexc,
        "exciton_residual": exc - coll_exc,
        "biexciton_residual": biexc - coll_biexc,
    }


def project_free_states(amps, N: int, *, chunk=64) -> dict:
    """Populations of free exciton states ``|1,k>`` (one photon) and biexcitons ``|2,k1,k2>``.

    ``amps`` is one state or a stack of states. Returns arrays ``vacuum``
    (T,), ``exciton`` (T, N) and ``biexciton`` (T, N(N-1)/2) with biexcitons in
    :func:`basis.site_pairs` order of ``(k1, k2)``.
    """
    amps = np.atleast_2d(amps)
    basis = TwoSectorBasis(N)
    chi = mode_matrix(N)
    iu = np.triu_indices(N, k=1)
    T = amps.shape[0]
    exciton = np.abs(amps[:, basis.one] @ chi) ** 2
    biexciton = np.empty((T, basis.n_pairs))
    for s in range(0, T, chunk):
        block = amps[s:s + chunk, basis.pairs]
        A = np.zeros((len(block), N, N), dtype=complex)
        A[:, iu[0], iu[1]] = block
        A = A - np.transpose(A, (0, 2, 1))
        # sum_{n1<n2} (chi_{n1 k1} chi_{n2 k2} - chi_{n1 k2} chi_{n2 k1}) a_{n1 n2}
        P = np.einsum("nk,tnm,ml->tkl", chi, A, chi, optimize=True)
        biexciton[s:s + len(block)] = np.abs(P[:, iu[0], iu[1]]) ** 2
    return {"vacuum": np.abs(amps[:, 0]) ** 2, "exciton": exciton, "biexciton": biexciton}


@dataclass
class TwoSectorSpectrum:
    """Eigenvalues relative to ``2 hw`` with their overlap weights on ``|2;0>``.

    ``sector`` is ``"full"`` (every eigenvalue), ``"even"`` (mirror-even block
    only; the odd block has zero weight) or ``"lanczos"`` (Gauss-quadrature nodes).
    """

    levels: np.ndarray
    weights: np.ndarray
    block_weights: np.ndarray | None = None   # (n, 3): vacuum, one-exciton, two-exciton
    sector: str = "full"

    def dominant(self, count=3):
        """The ``count`` heaviest levels, returned in ascending energy."""
        idx = np.argsort(self.weights, kind="stable")[::-1][:count]
        return idx[np.argsort(self.levels[idx], kind="stable")]


def _block_weights(es: EvenEigensystem) -> np.ndarray:
    # each isometry column lives inside one block, so block weights carry over
    W2 = es.vectors**2
    col_block = _block_of(es.isometry, TwoSectorBasis(es.n_atoms))
    return np.column_stack([W2[col_block == k].sum(axis=0) for k in range(3)])


def two_sector_quasienergies(H: SparseHamiltonian, *, block_weights=True,
                             eigensystem: EvenEigensystem | None = None) -> TwoSectorSpectrum:
    """Eigenvalues relative to ``2 hw`` and weights on ``|2;0>`` by dense diagonalization.

    The mirror-even and odd blocks are diagonalized separately; odd levels
    have exactly zero weight. When the full dimension exceeds ``DENSE_BUDGET``
    only the even block (which carries all the weight) is returned, and past
    that :class:`CapacityError` is raised.
    """
    even = eigensystem or even_eigensystem(H)
    parts = [(even.levels, even.weights, _block_weights(even) if block_weights else None)]
    sector = "even"
    if H.dimension <= DENSE_BUDGET:
        odd = even_eigensystem(H, parity=-1)
        if odd.levels.size:
            parts.append((odd.levels, np.zeros(odd.levels.size),
                          _block_weights(odd) if block_weights else None))
        sector = "full"
    levels = np.concatenate([p[0] for p in parts])
    order = np.argsort(levels, kind="stable")
    weights = np.concatenate([p[1] for p in parts])[order]
    blocks = np.concatenate([p[2] for p in parts])[order] if block_weights else None
    return TwoSectorSpectrum(levels=levels[order], weights=weights, block_weights=blocks,
                             sector=sector)


def branch_centroids(spectrum: TwoSectorSpectrum, scale: float) -> np.ndarray:
    """Weight centroids of the lower, middle and upper branches.

    Windows are ``lam < -scale``, ``|lam| <= scale`` and ``lam > scale``; with
    ``scale = g sqrt(N)`` they hold the ladder levels ``-2g sqrt(N)``, 0 and
    ``+2g sqrt(N)``.
    """
    x = spectrum.levels
    out = np.full(3, np.nan)
    for b, m in enumerate((x < -scale, np.abs(x) <= scale, x > scale)):
        wsum = spectrum.weights[m].sum()
        if wsum > 0:
            out[b] = np.sum(spectrum.weights[m] * x[m]) / wsum
    return out


def two_sector_spectral_measure(H: SparseHamiltonian, steps=400) -> TwoSectorSpectrum:
    """Lanczos (Gauss-quadrature) spectral measure of ``|2;0>``; for sizes past the dense budget."""
    A = H.to_csr(H.vacuum_offset)
    nodes, weights = krylov.spectral_measure(A.dot, vacuum_state(H.dimension),
                                             min(steps, H.dimension))
    return TwoSectorSpectrum(levels=nodes, weights=weights, sector="lanczos")
