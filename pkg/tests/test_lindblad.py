import numpy as np
import pytest
from functools import reduce

from trajphase import model as m
from trajphase.errors import CapabilityError, ParameterError
from trajphase.lindblad import (
    integrate_master_equation,
    lindblad_rhs,
    pure_density_matrix,
    site_densities,
    trace_distance,
)


def random_rho(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(2**n, 2**n)) + 1j * rng.normal(size=(2**n, 2**n))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def superoperator_rhs(rho, params):
    """Lindblad generator assembled from explicit operator products."""
    H = m.build_hamiltonian(params).toarray()
    out = -1j * (H @ rho - rho @ H)
    for L in m.jump_operators(params):
        L = L.toarray()
        LdL = L.conj().T @ L
        out += L @ rho @ L.conj().T - 0.5 * (LdL @ rho + rho @ LdL)
    return out


def test_dark_state_is_stationary():
    for n in (1, 3, 5):
        p = m.ModelParams(n, 4.0)
        rho = pure_density_matrix(m.all_inactive(n))
        assert np.all(lindblad_rhs(rho, p) == 0)
        _, states = integrate_master_equation(p, t_max=1.0, rho0=rho)
        assert np.array_equal(states[-1], rho)


def test_single_site_decay_rate():
    p = m.ModelParams(1, 0.0)
    d = lindblad_rhs(pure_density_matrix(m.all_active(1)), p)
    assert np.isclose(np.real(d[m.ACTIVE, m.ACTIVE]), -1.0)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_rhs_matches_explicit_form_and_is_traceless(n):
    p = m.ModelParams(n, 2.7, gamma=0.6)
    rho = random_rho(n, n)
    d = lindblad_rhs(rho, p)
    assert abs(np.trace(d)) < 1e-12
    assert np.allclose(d, superoperator_rhs(rho, p), atol=1e-12)


def test_dimension_mismatch():
    with pytest.raises(ParameterError):
        lindblad_rhs(np.eye(4) / 4, m.ModelParams(3, 1.0))


def test_exponential_decay_value():
    times, states = integrate_master_equation(m.ModelParams(1, 0.0, t_max=1.0), dt_ode=1e-3)
    assert times[-1] == pytest.approx(1.0)
    assert abs(site_densities(states[-1], 1)[0] - 0.367879441171) < 1e-8


def test_invariants_along_integration():
    p = m.ModelParams(4, 3.0, t_max=3.0)
    _, states = integrate_master_equation(p, output_times=[0.5, 1.0, 2.0, 3.0])
    assert len(states) == 4
    for rho in states:
        assert np.max(np.abs(rho - rho.conj().T)) < 1e-10
        assert abs(np.trace(rho) - 1) < 1e-10
        assert np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() > -1e-8


def test_fourth_order_convergence():
    # reference at h/4: the ideal fourth-order ratio is (1 - 4**-4) / (2**-4 - 4**-4) = 17
    p = m.ModelParams(3, 3.0, t_max=1.0)
    h = 0.02
    _, ref = integrate_master_equation(p, dt_ode=h / 4)
    errs = []
    for step in (h, h / 2):
        _, s = integrate_master_equation(p, dt_ode=step)
        errs.append(np.abs(s[-1] - ref[-1]).max())
    assert 14 < errs[0] / errs[1] < 20


def test_capability_limit():
    with pytest.raises(CapabilityError, match="dense or mps"):
        integrate_master_equation(m.ModelParams(8, 1.0))


def test_trace_distance():
    a = pure_density_matrix(m.all_active(2))
    b = pure_density_matrix(m.all_inactive(2))
    assert trace_distance(a, b) == pytest.approx(1.0)
    assert trace_distance(a, a) == 0.0
