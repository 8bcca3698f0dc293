"""Short-iteration Lanczos propagation and Lanczos spectral measures for Hermitian operators."""
from __future__ import annotations

import numpy as np
import scipy.linalg


# per-step estimate floor: the two small eigendecompositions differ at roundoff level
_ROUNDOFF = 64 * np.finfo(float).eps


class KrylovError(RuntimeError):
    pass


def lanczos(matvec, v0, m, *, reorthogonalize=True, breakdown=1e-14):
    """``m``-step Lanczos from ``v0``.

    Returns ``(Q, alpha, beta, beta_next)`` where ``Q`` has orthonormal columns,
    ``alpha``/``beta`` define the tridiagonal projection and ``beta_next`` is the
    residual norm after the last step (0 on an invariant subspace).
    """
    n = len(v0)
    norm0 = np.linalg.norm(v0)
    Q = np.zeros((n, m), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(max(m - 1, 0))
    Q[:, 0] = v0 / norm0
    beta_next = 0.0
    k = m
    for j in range(m):
        w = matvec(Q[:, j])
        alpha[j] = np.real(np.vdot(Q[:, j], w))
        w = w - alpha[j] * Q[:, j]
        if j > 0:
            w = w - beta[j - 1] * Q[:, j - 1]
        if reorthogonalize:
            # two passes of classical Gram-Schmidt keep Q orthonormal to roundoff
            for _ in range(2):
                w = w - Q[:, :j + 1] @ (Q[:, :j + 1].conj().T @ w)
        b = np.linalg.norm(w)
        if j == m - 1:
            beta_next = b
            break
        if b <= breakdown * max(1.0, abs(alpha[j])):
            k = j + 1
            beta_next = 0.0
            break
        beta[j] = b
        Q[:, j + 1] = w / b
    return Q[:, :k], alpha[:k], beta[:k - 1], beta_next


def _phase_minus_one(x):
    """``exp(-i x) - 1`` without cancellation for small ``x``."""
    return -2.0 * np.sin(0.5 * x) ** 2 - 1j * np.sin(x)


def _tridiag_eig(alpha, beta):
    if len(alpha) == 1:
        return alpha.copy(), np.ones((1, 1))
    return scipy.linalg.eigh_tridiagonal(alpha, beta)


def propagate(matvec, v0, times, *, hbar, tol=1e-10, krylov_dim=30, max_steps=10_000_000,
              observe=None):
    """States ``exp(-i H t / hbar) v0`` at every time in ``times`` (ascending, from 0).

    Each step builds one Krylov basis and takes the largest step whose
    error estimate (change against one fewer Krylov vector) stays below
    ``tol`` times the step length in ns; every output time
    inside the step is evaluated from that same basis. Returns an array of
    shape ``(len(times), len(v0))``, or, when ``observe`` is given, the list of
    ``observe(state)`` at each time (states are not kept).
    """
    times = np.asarray(times, dtype=float)
    if times.size and (times[0] < 0 or np.any(np.diff(times) < 0)):
        raise ValueError("times must be non-negative and ascending")
    out = [] if observe else np.empty((len(times), len(v0)), dtype=complex)

    def emit(i, state):
        if observe:
            out.append(observe(state))
        else:
            out[i] = state

    v = np.asarray(v0, dtype=complex).copy()
    t = 0.0
    i = 0
    steps = 0
    last_dt = None
    while i < len(times) and times[i] <= t:
        emit(i, v)
        i += 1
    while i < len(times):
        Q, alpha, beta, beta_next = lanczos(matvec, v, krylov_dim)
        ev, S = _tridiag_eig(alpha, beta)
        nrm = np.linalg.norm(v)
        s0 = S[0].conj()
        exact = len(alpha) < krylov_dim         # invariant subspace reached
        if not exact:
            ev1, S1 = _tridiag_eig(alpha[:-1], beta[:-1])
        remaining = times[-1] - t
        dt = remaining if last_dt is None else min(remaining, 2.0 * last_dt)

        # e1 + S (exp(-i ev tau) - 1) S^T e1: exact at tau = 0 whatever the
        # eigenvector roundoff of the small problem
        def coef_at(tau):
            c = S @ (_phase_minus_one(ev * tau / hbar) * s0)
            c[0] += 1.0
            return c

        for _ in range(200):
            coef = coef_at(dt)
            if exact:
                break
            # difference between the m- and (m-1)-dimensional approximations,
            # checked at every output time inside the step
            inner = times[i:][times[i:] < t + dt] - t
            taus = np.append(inner, dt)
            full = S @ (_phase_minus_one(np.outer(ev, taus) / hbar) * s0[:, None])
            short = S1 @ (_phase_minus_one(np.outer(ev1, taus) / hbar) * S1[0].conj()[:, None])
            err = np.sqrt(np.sum(np.abs(full[:-1] - short) ** 2, axis=0) + np.abs(full[-1]) ** 2)
            if np.all(err <= tol * dt + _ROUNDOFF):
                break
            dt *= 0.5
        else:
            raise KrylovError(f"no admissible step at t={t}")
        t_new = times[-1] if dt == remaining else t + dt
        # advance by the representable increment so the clock and the state agree
        coef = coef_at(t_new - t)
        while i < len(times) and times[i] <= t_new:
            tau = times[i] - t
            emit(i, nrm * (Q @ (coef if times[i] == t_new else coef_at(tau))))
            i += 1
        v = nrm * (Q @ coef)
        t = t_new
        if dt < remaining or last_dt is None:
            last_dt = dt
        steps += 1
        if steps > max_steps:
            raise KrylovError("step budget exhausted")
    return out


def spectral_measure(matvec, v0, m, *, weight_floor=0.0):
    """Gauss-quadrature (Ritz) approximation to the spectral measure of ``v0``.

    Returns ``(nodes, weights)``; the weights sum to ``|v0|^2``. Exact once ``m``
    reaches the dimension of the Krylov space generated by ``v0``.
    """
    _, alpha, beta, _ = lanczos(matvec, v0, m)
    ev, S = _tridiag_eig(alpha, beta)
    weights = np.abs(S[0]) ** 2 * np.vdot(v0, v0).real
    keep = weights >= weight_floor
    return ev[keep], weights[keep]
