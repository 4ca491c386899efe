"""Matrix-product-state backend.

One time step is split into a coherent part, applied as a first-order
even/odd Trotter sweep of two-site gates with SVD truncation, followed by
the one-site measurement/dissipation update of every site and a global
renormalization. Site tensors have shape ``(left_bond, 2, right_bond)``.
"""

from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .errors import IntegrationBlowupError, ParameterError, TruncationStarvationError
from .model import ACTIVE, INACTIVE, SIGMA_MINUS, NUMBER, bond_hamiltonian, check_normalized
from .noise import NoiseStream
from .records import TrajectoryRecord

DEFAULT_CHI = 200
DEFAULT_CUTOFF = 1e-12


class MpsState:
    """Mixed-canonical MPS with a single orthogonality center."""

    def __init__(self, tensors, center, chi_max=DEFAULT_CHI, svd_cutoff=DEFAULT_CUTOFF):
        self.tensors = [np.asarray(t, dtype=complex) for t in tensors]
        self.center = int(center)
        self.chi_max = int(chi_max)
        self.svd_cutoff = float(svd_cutoff)
        self.discarded_weight = 0.0

    @property
    def n_sites(self):
        return len(self.tensors)

    @property
    def bond_dims(self):
        return [t.shape[2] for t in self.tensors[:-1]]

    def copy(self):
        out = MpsState([t.copy() for t in self.tensors], self.center, self.chi_max, self.svd_cutoff)
        out.discarded_weight = self.discarded_weight
        return out

    def norm(self):
        a = self.tensors[self.center]
        return float(np.sqrt(np.vdot(a, a).real))

    def to_dense(self):
        psi = np.ones((1, 1), dtype=complex)
        for a in self.tensors:
            psi = np.einsum("xa,asb->xsb", psi, a).reshape(-1, a.shape[2])
        return psi.reshape(-1)

    # orthogonality-center moves

    def _shift_right(self, k):
        a = self.tensors[k]
        l, d, r = a.shape
        q, rr = np.linalg.qr(a.reshape(l * d, r))
        self.tensors[k] = q.reshape(l, d, -1)
        self.tensors[k + 1] = np.einsum("ab,bsc->asc", rr, self.tensors[k + 1])
        self.center = k + 1

    def _shift_left(self, k):
        a = self.tensors[k]
        l, d, r = a.shape
        q, rr = np.linalg.qr(a.reshape(l, d * r).T)
        self.tensors[k] = q.T.reshape(-1, d, r)
        self.tensors[k - 1] = np.einsum("asb,bc->asc", self.tensors[k - 1], rr.T)
        self.center = k - 1

    def move_center(self, target):
        while self.center < target:
            self._shift_right(self.center)
        while self.center > target:
            self._shift_left(self.center)

    def site_rdm(self):
        """Reduced density matrix ``r[s, t] = <t|rho|s>`` at the center site."""
        a = self.tensors[self.center]
        return np.einsum("asb,atb->st", a, np.conj(a))

    def sweep(self):
        """Visit every site as the center, ending at the opposite end.

        Yields the site index while it holds the orthogonality center.
        """
        n = self.n_sites
        if self.center not in (0, n - 1):
            self.move_center(0)
        if self.center == 0:
            for k in range(n):
                yield k
                if k < n - 1:
                    self._shift_right(k)
        else:
            for k in range(n - 1, -1, -1):
                yield k
                if k > 0:
                    self._shift_left(k)

    # two-site update

    def apply_two_site(self, k, gate, direction):
        """Apply a 4x4 ``gate`` on sites ``(k, k+1)`` with the center on one of them.

        ``direction`` ``+1`` leaves the center on ``k+1``, ``-1`` on ``k``.
        Returns the discarded weight.
        """
        if self.center not in (k, k + 1):
            self.move_center(k)
        a, b = self.tensors[k], self.tensors[k + 1]
        l, r = a.shape[0], b.shape[2]
        theta = np.einsum("asb,btc->astc", a, b)
        if gate is not None:
            theta = np.einsum("stuv,auvc->astc", gate.reshape(2, 2, 2, 2), theta)
        u, s, vh = sla.svd(theta.reshape(l * 2, 2 * r), full_matrices=False, lapack_driver="gesdd")
        keep = int(np.count_nonzero(s > self.svd_cutoff))
        if keep == 0:
            raise TruncationStarvationError(f"all singular values below cutoff on bond {k}")
        keep = min(keep, self.chi_max)
        total = float(np.sum(s**2))
        kept = float(np.sum(s[:keep] ** 2))
        discarded = max(total - kept, 0.0) / total
        u, s, vh = u[:, :keep], s[:keep] / np.sqrt(kept), vh[:keep]
        if direction > 0:
            self.tensors[k] = u.reshape(l, 2, keep)
            self.tensors[k + 1] = (s[:, None] * vh).reshape(keep, 2, r)
            self.center = k + 1
        else:
            self.tensors[k] = (u * s[None, :]).reshape(l, 2, keep)
            self.tensors[k + 1] = vh.reshape(keep, 2, r)
            self.center = k
        self.discarded_weight += discarded
        return discarded

    def check_finite(self, step):
        for t in self.tensors:
            if not np.all(np.isfinite(t)):
                raise IntegrationBlowupError(step)


def mps_from_product(pattern, chi_max=DEFAULT_CHI, svd_cutoff=DEFAULT_CUTOFF):
    """Bond-dimension-1 MPS from single-site states.

    Entries of ``pattern`` are booleans (True = active) or 2-component
    amplitude vectors ordered (active, inactive).
    """
    if len(pattern) < 1:
        raise ParameterError("pattern must contain at least one site")
    tensors = []
    for p in pattern:
        if isinstance(p, (bool, np.bool_)):
            v = np.zeros(2, dtype=complex)
            v[ACTIVE if p else INACTIVE] = 1.0
        else:
            v = np.asarray(p, dtype=complex).reshape(2)
            v = v / np.linalg.norm(v)
        tensors.append(v.reshape(1, 2, 1))
    return MpsState(tensors, 0, chi_max, svd_cutoff)


def mps_from_dense(psi, chi_max=DEFAULT_CHI, svd_cutoff=DEFAULT_CUTOFF):
    """Exact (up to ``chi_max``) MPS decomposition of a dense state."""
    psi = np.asarray(psi, dtype=complex)
    n = int(round(np.log2(psi.size)))
    tensors = []
    rest = psi.reshape(1, -1)
    for _ in range(n - 1):
        l = rest.shape[0]
        mat = rest.reshape(l * 2, -1)
        q, r = np.linalg.qr(mat)
        tensors.append(q.reshape(l, 2, -1))
        rest = r
    tensors.append(rest.reshape(rest.shape[0], 2, 1))
    return MpsState(tensors, n - 1, chi_max, svd_cutoff)


@lru_cache(maxsize=64)
def bond_gate(omega, dt):
    """``exp(-i h dt)`` for one bond term.

    The two-site absorbing state is decoupled from the rest of the bond
    Hamiltonian, so its column is set to exactly one.
    """
    h = bond_hamiltonian(omega)
    idx = [0, 1, 2]
    gate = np.zeros((4, 4), dtype=complex)
    gate[np.ix_(idx, idx)] = sla.expm(-1j * dt * h[np.ix_(idx, idx)])
    gate[3, 3] = 1.0
    gate.setflags(write=False)
    return gate


def _trotter_inplace(state, params):
    n = state.n_sites
    if n == 1:
        return 0.0
    gate = bond_gate(float(params.omega), float(params.dt))
    discarded = 0.0
    # First layer: even bonds, second layer: odd bonds. Each layer is applied
    # by one sweep; bonds outside the layer only move the center.
    for layer in (0, 1):
        if state.center == 0:
            for k in range(n - 1):
                if k % 2 == layer:
                    discarded += state.apply_two_site(k, gate, +1)
                else:
                    state._shift_right(k)
        else:
            state.move_center(n - 1)
            for k in range(n - 2, -1, -1):
                if k % 2 == layer:
                    discarded += state.apply_two_site(k, gate, -1)
                else:
                    state._shift_left(k + 1)
    return discarded


def tebd_trotter_step(state, params):
    """Coherent evolution ``exp(-i H dt)`` by first-order even/odd splitting."""
    out = state.copy()
    out.discarded_weight = 0.0
    _trotter_inplace(out, params)
    return out


def measure(state):
    """Sweep once; return ``(densities, <sigma_minus>)`` per site."""
    n = state.n_sites
    dens = np.empty(n)
    sm = np.empty(n, dtype=complex)
    for k in state.sweep():
        r = state.site_rdm()
        dens[k] = r[ACTIVE, ACTIVE].real
        sm[k] = r[ACTIVE, INACTIVE]
    return dens, sm


def _renormalize(state, step):
    state.check_finite(step)
    # a sweep restores canonical form to the whole chain
    for _ in state.sweep():
        pass
    norm = state.norm()
    if not np.isfinite(norm) or norm == 0:
        raise IntegrationBlowupError(step)
    state.tensors[state.center] /= norm


def _onsite_inplace(state, params, increments, step=0):
    n = state.n_sites
    dxi = np.asarray(increments, dtype=complex).reshape(n)
    dens, sm = measure(state)
    amp = np.sqrt(params.gamma)
    ell = amp * sm
    L = amp * SIGMA_MINUS
    LdL = params.gamma * NUMBER
    eye = np.eye(2)
    for k in range(n):
        op = (
            eye
            + (np.conj(ell[k]) * L - 0.5 * LdL - 0.5 * abs(ell[k]) ** 2 * eye) * params.dt
            + (L - ell[k] * eye) * dxi[k]
        )
        state.tensors[k] = np.einsum("st,atb->asb", op, state.tensors[k])
    _renormalize(state, step)
    return dens, ell * params.dt + dxi


def stochastic_onsite_step(state, params, increments, step=0):
    """Measurement and dissipation update of every site.

    Expectations are frozen at the input state. Returns the renormalized
    state, the input-state densities and ``<L_k> dt + dxi_k``.
    """
    out = state.copy()
    dens, het = _onsite_inplace(out, params, increments, step)
    return out, dens, het


def full_step(state, params, increments, step=0):
    """Trotter sweep followed by the one-site stochastic update."""
    out = state.copy()
    out.discarded_weight = 0.0
    _trotter_inplace(out, params)
    dens, het = _onsite_inplace(out, params, increments, step)
    return out, dens, het


def simulate_trajectory_mps(
    params,
    trajectory_id,
    master_seed,
    chi_max=DEFAULT_CHI,
    svd_cutoff=DEFAULT_CUTOFF,
    initial=None,
):
    """MPS trajectory with the same record layout as the dense backend.

    ``initial`` is an :class:`MpsState` or a product pattern; the default is
    the fully active chain. ``record.info`` carries the per-step discarded
    weight and the largest bond dimension reached.
    """
    n = params.n_sites
    if initial is None:
        state = mps_from_product([True] * n, chi_max, svd_cutoff)
    elif isinstance(initial, MpsState):
        state = initial.copy()
        state.chi_max, state.svd_cutoff = int(chi_max), float(svd_cutoff)
    else:
        state = mps_from_product(initial, chi_max, svd_cutoff)
    if state.n_sites != n:
        raise ParameterError("initial state size does not match params.n_sites")
    stream = NoiseStream(master_seed, trajectory_id)
    T = params.n_steps
    densities = np.empty((T + 1, n))
    het = np.empty((T, n), dtype=complex)
    discarded = np.zeros(T)
    max_bond = 1
    for j in range(T):
        densities[j], _ = measure(state)
        state.discarded_weight = 0.0
        discarded[j] = _trotter_inplace(state, params)
        _, het[j] = _onsite_inplace(state, params, stream.step_increments(j, n, params.dt), j)
        max_bond = max([max_bond] + state.bond_dims)
    densities[T], _ = measure(state)
    info = {"discarded_weight": discarded, "max_bond": max_bond}
    return TrajectoryRecord(params, int(trajectory_id), int(master_seed), densities, het, info)
