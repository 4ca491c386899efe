"""Quantum contact process on an open chain.

Single-site basis: index 0 is the active state, index 1 the inactive state.
Site 0 is the most significant bit of the full Hilbert-space index, so the
all-active state is basis vector 0 and the absorbing state is the last one.
"""

from dataclasses import dataclass, asdict

import numpy as np
import scipy.sparse as sp

from .errors import NormalizationError, ParameterError

ACTIVE = 0
INACTIVE = 1

SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]])
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
NUMBER = np.array([[1.0, 0.0], [0.0, 0.0]])

NORM_TOL = 1e-8


@dataclass(frozen=True)
class ModelParams:
    """Model and integration parameters, rates in units of ``gamma``."""

    n_sites: int
    omega: float
    gamma: float = 1.0
    dt: float = 0.05
    t_max: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 1:
            raise ParameterError(f"n_sites must be a positive integer, got {self.n_sites}")
        if not self.omega >= 0:
            raise ParameterError(f"omega must be >= 0, got {self.omega}")
        if not self.gamma > 0:
            raise ParameterError(f"gamma must be > 0, got {self.gamma}")
        if not self.dt > 0 or not self.t_max > 0:
            raise ParameterError("dt and t_max must be positive")
        if not self.dt < self.t_max:
            raise ParameterError("dt must be smaller than t_max")
        ratio = self.t_max / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ParameterError(f"t_max/dt = {ratio} is not an integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError("seed must fit in an unsigned 64-bit integer")

    @property
    def n_steps(self):
        return int(round(self.t_max / self.dt))

    @property
    def dim(self):
        return 2**self.n_sites

    def replace(self, **changes):
        return ModelParams(**{**asdict(self), **changes})

    def to_dict(self):
        return asdict(self)


def _check_sites(n_sites):
    if int(n_sites) != n_sites or n_sites < 1:
        raise ParameterError(f"n_sites must be a positive integer, got {n_sites}")


def site_operator(op, k, n_sites):
    """Embed a 2x2 operator acting on site ``k`` (0-based) into the chain."""
    _check_sites(n_sites)
    if not 0 <= k < n_sites:
        raise ParameterError(f"site {k} out of range for {n_sites} sites")
    left = sp.identity(2**k, format="csr")
    right = sp.identity(2 ** (n_sites - k - 1), format="csr")
    return sp.kron(sp.kron(left, sp.csr_matrix(op)), right, format="csr")


def bond_hamiltonian(omega):
    """Two-site term ``omega * (sx n + n sx)`` as a 4x4 matrix."""
    return omega * (np.kron(SIGMA_X, NUMBER) + np.kron(NUMBER, SIGMA_X))


def build_hamiltonian(params):
    """Sparse contact-process Hamiltonian with open boundaries."""
    n = params.n_sites
    _check_sites(n)
    H = sp.csr_matrix((2**n, 2**n), dtype=complex)
    if n == 1:
        return H
    term = sp.csr_matrix(bond_hamiltonian(params.omega))
    for k in range(n - 1):
        left = sp.identity(2**k, format="csr")
        right = sp.identity(2 ** (n - k - 2), format="csr")
        H = H + sp.kron(sp.kron(left, term), right, format="csr")
    H.eliminate_zeros()
    return H.tocsr()


def jump_operators(params):
    """The ``n_sites`` operators ``sqrt(gamma) * sigma_minus`` on each site."""
    amp = np.sqrt(params.gamma)
    return [
        (amp * site_operator(SIGMA_MINUS, k, params.n_sites)).astype(complex)
        for k in range(params.n_sites)
    ]


def basis_state(pattern):
    """Product basis vector for a sequence of booleans (True = active)."""
    n = len(pattern)
    index = 0
    for active in pattern:
        index = 2 * index + (ACTIVE if active else INACTIVE)
    psi = np.zeros(2**n, dtype=complex)
    psi[index] = 1.0
    return psi


def all_active(n_sites):
    return basis_state([True] * n_sites)


def all_inactive(n_sites):
    return basis_state([False] * n_sites)


def _as_sites(psi, n_sites=None):
    psi = np.asarray(psi)
    if n_sites is None:
        n_sites = int(round(np.log2(psi.shape[-1])))
    if 2**n_sites != psi.shape[-1]:
        raise ParameterError(f"state length {psi.shape[-1]} is not a power of 2")
    return psi, n_sites


def check_normalized(psi, tol=NORM_TOL):
    norm2 = np.sum(np.abs(psi) ** 2, axis=-1)
    if np.any(np.abs(norm2 - 1.0) > tol):
        raise NormalizationError(f"state is not normalized (|psi|^2 = {norm2})")


def site_view(psi, k, n_sites):
    """Reshape a batch of states ``(..., 2**n)`` to ``(..., left, 2, right)``."""
    return psi.reshape(psi.shape[:-1] + (2**k, 2, 2 ** (n_sites - k - 1)))


def densities_unchecked(psi, n_sites):
    prob = np.abs(psi) ** 2
    out = np.empty(psi.shape[:-1] + (n_sites,))
    for k in range(n_sites):
        out[..., k] = site_view(prob, k, n_sites)[..., ACTIVE, :].sum(axis=(-1, -2))
    return out


def sigma_minus_expect_unchecked(psi, n_sites):
    """``<sigma_minus_k>`` for every site; works on batches."""
    out = np.empty(psi.shape[:-1] + (n_sites,), dtype=complex)
    for k in range(n_sites):
        v = site_view(psi, k, n_sites)
        out[..., k] = np.sum(np.conj(v[..., INACTIVE, :]) * v[..., ACTIVE, :], axis=(-1, -2))
    return out


def apply_sigma_minus(psi, k, n_sites):
    v = site_view(psi, k, n_sites)
    out = np.zeros_like(v)
    out[..., INACTIVE, :] = v[..., ACTIVE, :]
    return out.reshape(psi.shape)


def apply_number(psi, k, n_sites):
    v = site_view(psi, k, n_sites)
    out = np.zeros_like(v)
    out[..., ACTIVE, :] = v[..., ACTIVE, :]
    return out.reshape(psi.shape)


def local_densities(state):
    """Occupations ``<n_k>`` of a normalized dense state."""
    psi, n = _as_sites(state)
    check_normalized(psi)
    return densities_unchecked(psi, n)


def expect_jump(state, k, params):
    """``<psi|L_k|psi>`` for the 0-based site ``k``."""
    psi, n = _as_sites(state, params.n_sites)
    if not 0 <= k < n:
        raise ParameterError(f"site {k} out of range for {n} sites")
    check_normalized(psi)
    v = site_view(psi, k, n)
    return np.sqrt(params.gamma) * np.sum(np.conj(v[..., INACTIVE, :]) * v[..., ACTIVE, :])


def heff_action(psi, params, H, ell=None):
    """``H_eff |psi>`` with expectation terms from ``ell = <L_k>`` (batched).

    Uses ``L_k^dag L_k = gamma n_k``.
    """
    n = params.n_sites
    if ell is None:
        ell = np.sqrt(params.gamma) * sigma_minus_expect_unchecked(psi, n)
    out = (H @ psi.T).T if psi.ndim > 1 else H @ psi
    out = out.astype(complex, copy=True)
    amp = np.sqrt(params.gamma)
    for k in range(n):
        lk = ell[..., k, None]
        dissip = (
            np.conj(lk) * amp * apply_sigma_minus(psi, k, n)
            - 0.5 * params.gamma * apply_number(psi, k, n)
            - 0.5 * np.abs(lk) ** 2 * psi
        )
        out += 1j * dissip
    return out


def apply_heff(state, params, H=None):
    """Effective non-Hermitian generator applied to a normalized state.

    The expectation-dependent terms are evaluated on ``state`` itself.
    """
    psi, _ = _as_sites(np.asarray(state, dtype=complex), params.n_sites)
    check_normalized(psi)
    if H is None:
        H = build_hamiltonian(params)
    return heff_action(psi, params, H)
