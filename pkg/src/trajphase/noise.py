"""Counter-based complex Wiener increments.

Every increment is a pure function of ``(master_seed, trajectory_id, site,
step)``: the tuple is pushed through one block of the Philox4x32-10 cipher
(Salmon et al., SC'11), and the four output words become two uniforms that a
Box-Muller transform maps to the real and imaginary parts. No generator state
is carried around, so draws can be produced in any order or in parallel.
"""

from dataclasses import dataclass

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_LO = np.uint64(0xFFFFFFFF)
_32 = np.uint64(32)
_11 = np.uint64(11)


def philox4x32(counter, key, rounds=10):
    """Vectorized Philox4x32 block function.

    ``counter`` is a 4-tuple and ``key`` a 2-tuple of broadcastable arrays of
    32-bit words; returns the four output words as uint64 arrays.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _LO for c in counter)
    k0, k1 = (np.asarray(k, dtype=np.uint64) & _LO for k in key)
    for _ in range(rounds):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (p1 >> _32) ^ c1 ^ k0, p1 & _LO, (p0 >> _32) ^ c3 ^ k1, p0 & _LO
        k0 = (k0 + _W0) & _LO
        k1 = (k1 + _W1) & _LO
    return c0, c1, c2, c3


def _split64(x):
    x = np.asarray(x, dtype=np.uint64)
    return x & _LO, x >> _32


def _uniform53(hi, lo):
    bits = ((hi << _32) | lo) >> _11
    return bits.astype(np.float64) * 2.0**-53


def complex_increments(master_seed, trajectory_id, site, step, dt):
    """Increments for broadcastable index arrays ``trajectory_id, site, step``.

    Real and imaginary parts are independent with variance ``dt / 2`` each,
    so ``E[dxi] = E[dxi**2] = 0`` and ``E[|dxi|**2] = dt``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    seed_lo, seed_hi = _split64(np.uint64(master_seed))
    traj_lo, traj_hi = _split64(trajectory_id)
    c0, c1, c2, c3 = philox4x32((step, site, traj_lo, traj_hi), (seed_lo, seed_hi))
    u1 = 1.0 - _uniform53(c0, c1)  # (0, 1]
    u2 = _uniform53(c2, c3)
    r = np.sqrt(-2.0 * np.log(u1) * dt)
    theta = 2.0 * np.pi * u2
    return (r * np.cos(theta) + 1j * r * np.sin(theta)) / np.sqrt(2.0)


@dataclass(frozen=True)
class NoiseStream:
    """Addressable noise source for one trajectory."""

    master_seed: int
    trajectory_id: int

    def increment(self, site, step, dt):
        return complex(complex_increments(self.master_seed, self.trajectory_id, site, step, dt))

    def step_increments(self, step, n_sites, dt):
        """All sites at one step, shape ``(n_sites,)``."""
        return complex_increments(
            self.master_seed, self.trajectory_id, np.arange(n_sites), step, dt
        )

    def block(self, n_steps, n_sites, dt, start=0):
        """Increments for steps ``start .. start+n_steps-1``, shape ``(n_steps, n_sites)``."""
        steps = np.arange(start, start + n_steps)[:, None]
        return complex_increments(
            self.master_seed, self.trajectory_id, np.arange(n_sites)[None, :], steps, dt
        )


def sample_increment(stream, site, step, dt):
    return stream.increment(site, step, dt)


def batch_step_increments(master_seed, trajectory_ids, step, n_sites, dt):
    """Increments for many trajectories at one step, shape ``(n_traj, n_sites)``."""
    ids = np.asarray(trajectory_ids, dtype=np.uint64)[:, None]
    return complex_increments(master_seed, ids, np.arange(n_sites)[None, :], step, dt)
