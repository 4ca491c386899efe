from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams


@dataclass
class TrajectoryRecord:
    """Space-time output of one monitored trajectory.

    ``densities`` has one row per grid time including ``t = 0`` (shape
    ``(n_steps + 1, n_sites)``). ``het_increments`` holds the integrated
    heterodyne signal ``<L_k> dt + dxi_k`` of every step (shape
    ``(n_steps, n_sites)``).
    """

    params: ModelParams
    trajectory_id: int
    master_seed: int
    densities: np.ndarray
    het_increments: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def n_steps(self):
        return self.het_increments.shape[0]

    def current(self):
        """Heterodyne photocurrent ``O_k`` per step."""
        return self.het_increments / self.params.dt
