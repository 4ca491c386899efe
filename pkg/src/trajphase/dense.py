"""Dense state-vector integration of the heterodyne stochastic Schroedinger equation.

The explicit Euler-Maruyama update freezes every expectation value at the
pre-step state and renormalizes after each step.
"""

import numpy as np

from . import model as m
from .errors import CapabilityError, IntegrationBlowupError, ParameterError
from .noise import batch_step_increments
from .records import TrajectoryRecord

DENSE_LIMIT = 14


def _check_size(n_sites, limit=DENSE_LIMIT):
    if n_sites > limit:
        raise CapabilityError(
            f"dense backend is limited to {limit} sites (got {n_sites}); use the mps backend"
        )


def em_increment(psi, params, H, dxi):
    """Unnormalized Euler-Maruyama update for a batch ``psi`` of shape ``(B, 2**N)``.

    Returns ``(psi_new, densities, het)`` where the last two are evaluated on
    the pre-step state.
    """
    n = params.n_sites
    amp = np.sqrt(params.gamma)
    ell = amp * m.sigma_minus_expect_unchecked(psi, n)
    dens = m.densities_unchecked(psi, n)
    drift = m.heff_action(psi, params, H, ell)
    new = psi - 1j * params.dt * drift
    for k in range(n):
        jump = amp * m.apply_sigma_minus(psi, k, n) - ell[:, k, None] * psi
        new += jump * dxi[:, k, None]
    het = ell * params.dt + dxi
    return new, dens, het


def _renormalize(psi, step):
    norm = np.sqrt(np.sum(np.abs(psi) ** 2, axis=-1, keepdims=True))
    if not (np.all(np.isfinite(psi)) and np.all(norm > 0)):
        raise IntegrationBlowupError(step)
    return psi / norm


def em_step(state, params, increments, H=None, step=0):
    """One Euler-Maruyama step of a single normalized state.

    Returns the renormalized state, the pre-step local densities and the
    heterodyne increments ``<L_k> dt + dxi_k``.
    """
    psi = np.asarray(state, dtype=complex)
    m.check_normalized(psi)
    dxi = np.asarray(increments, dtype=complex).reshape(1, params.n_sites)
    if H is None:
        H = m.build_hamiltonian(params)
    new, dens, het = em_increment(psi[None, :], params, H, dxi)
    return _renormalize(new, step)[0], dens[0], het[0]


def simulate_batch(params, trajectory_ids, master_seed, initial=None, H=None, return_states=False):
    """Integrate several trajectories side by side.

    Each trajectory draws its noise from its own ``(master_seed, id)`` key, so
    results do not depend on which trajectories share a batch.
    """
    n = params.n_sites
    _check_size(n)
    ids = np.asarray(trajectory_ids, dtype=np.uint64)
    if ids.ndim != 1 or ids.size == 0:
        raise ParameterError("trajectory_ids must be a non-empty 1-d sequence")
    if initial is None:
        initial = m.all_active(n)
    initial = np.asarray(initial, dtype=complex)
    m.check_normalized(initial)
    if H is None:
        H = m.build_hamiltonian(params)
    B, T = ids.size, params.n_steps
    psi = np.repeat(initial[None, :], B, axis=0)
    densities = np.empty((B, T + 1, n))
    het = np.empty((B, T, n), dtype=complex)
    for j in range(T):
        dxi = batch_step_increments(master_seed, ids, j, n, params.dt)
        new, densities[:, j], het[:, j] = em_increment(psi, params, H, dxi)
        psi = _renormalize(new, j)
    densities[:, T] = m.densities_unchecked(psi, n)
    records = [
        TrajectoryRecord(params, int(i), int(master_seed), densities[b], het[b])
        for b, i in enumerate(ids)
    ]
    if return_states:
        return records, psi
    return records


def simulate_trajectory(params, trajectory_id, master_seed, initial=None):
    """Integrate one trajectory from ``initial`` (default: all sites active)."""
    return simulate_batch(params, [trajectory_id], master_seed, initial)[0]
