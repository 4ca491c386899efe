"""Deterministic master-equation reference for small chains.

The generator is applied matrix-free on the ``2**N x 2**N`` density matrix:
the jump term reduces to an index shuffle per site and the anticommutator
with ``sum_k L_k^dag L_k`` to a diagonal (number of active sites) scaling.
"""

import numpy as np

from . import model as m
from .errors import CapabilityError, ParameterError

DENSE_LIMIT = 7


class _Generator:
    def __init__(self, params):
        self.params = params
        self.n = params.n_sites
        self.H = m.build_hamiltonian(params).toarray()
        counts = np.zeros(2**self.n)
        for k in range(self.n):
            counts += m.site_operator(m.NUMBER, k, self.n).diagonal().real
        self.decay = params.gamma * counts

    def __call__(self, rho):
        n, g = self.n, self.params.gamma
        H = self.H
        out = -1j * (H @ rho - rho @ H)
        out -= 0.5 * (self.decay[:, None] * rho + rho * self.decay[None, :])
        for k in range(n):
            r = rho.reshape(2**k, 2, 2 ** (n - k - 1), 2**k, 2, 2 ** (n - k - 1))
            jump = np.zeros_like(r)
            jump[:, m.INACTIVE, :, :, m.INACTIVE, :] = r[:, m.ACTIVE, :, :, m.ACTIVE, :]
            out += g * jump.reshape(rho.shape)
        return out


def lindblad_rhs(rho, params):
    """Time derivative ``-i[H, rho] + sum_k (L rho L^dag - {L^dag L, rho}/2)``."""
    rho = np.asarray(rho, dtype=complex)
    d = 2**params.n_sites
    if rho.shape != (d, d):
        raise ParameterError(f"density matrix shape {rho.shape} does not match {d}x{d}")
    return _Generator(params)(rho)


def pure_density_matrix(psi):
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, np.conj(psi))


def integrate_master_equation(
    params, t_max=None, dt_ode=1e-3, rho0=None, output_times=None, limit=DENSE_LIMIT
):
    """Classical RK4 integration from ``rho0`` (default: all sites active).

    Returns ``(times, states)`` with one density matrix per requested output
    time; ``output_times`` defaults to ``[t_max]``.  Output times are rounded
    to the nearest ODE grid point.
    """
    if params.n_sites > limit:
        raise CapabilityError(
            f"master equation limited to {limit} sites (got {params.n_sites}); "
            "use the dense or mps trajectory backends"
        )
    t_max = params.t_max if t_max is None else t_max
    if rho0 is None:
        rho0 = pure_density_matrix(m.all_active(params.n_sites))
    rho = np.array(rho0, dtype=complex)
    if output_times is None:
        output_times = [t_max]
    n_total = int(round(t_max / dt_ode))
    wanted = {}
    for t in output_times:
        wanted.setdefault(int(round(t / dt_ode)), []).append(t)
    f = _Generator(params)
    times, states = [], []
    if 0 in wanted:
        times.append(0.0)
        states.append(rho.copy())
    h = dt_ode
    for j in range(1, n_total + 1):
        k1 = f(rho)
        k2 = f(rho + 0.5 * h * k1)
        k3 = f(rho + 0.5 * h * k2)
        k4 = f(rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if j in wanted:
            times.append(j * h)
            states.append(rho.copy())
    return np.array(times), states


def site_densities(rho, n_sites):
    diag = np.real(np.diag(rho))
    return np.array(
        [m.site_operator(m.NUMBER, k, n_sites).diagonal().real @ diag for k in range(n_sites)]
    )


def trace_distance(rho, sigma):
    evals = np.linalg.eigvalsh(0.5 * ((rho - sigma) + (rho - sigma).conj().T))
    return 0.5 * float(np.sum(np.abs(evals)))
