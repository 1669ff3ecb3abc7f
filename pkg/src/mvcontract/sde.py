"""Euler-Maruyama forward integration driven by a shared scalar Brownian motion.

The scheme is

    X_{k+1} = X_k + drift(X_k, t_k) * dt + diffusion(X_k, t_k) * dW_k,

applied componentwise with a single Brownian increment dW_k per path and
step (all state components load on the same noise).  There is no lookahead:
step k uses only values available at t_k.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import SimulationDivergedError
from .noise import NoiseEnsemble
from .timegrid import TimeGrid

StateMap = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class PathEnsemble:
    """Simulated state trajectories, shape (n_paths, n_points, n_components)."""

    grid: TimeGrid
    states: np.ndarray
    labels: tuple
    noise: Optional[NoiseEnsemble] = field(default=None, repr=False)

    def __post_init__(self):
        n_paths, n_points, n_comp = self.states.shape
        if n_points != self.grid.n_points:
            raise ValueError(
                f"states have {n_points} time points, grid has {self.grid.n_points}"
            )
        if len(self.labels) != n_comp:
            raise ValueError(
                f"{len(self.labels)} labels for {n_comp} state components"
            )
        self.states.flags.writeable = False

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    def component(self, label: str) -> np.ndarray:
        """Trajectories of one named component, shape (n_paths, n_points)."""
        try:
            idx = self.labels.index(label)
        except ValueError:
            raise KeyError(f"no state component {label!r}; have {self.labels}")
        return self.states[:, :, idx]


def euler_maruyama(
    drift: StateMap,
    diffusion: StateMap,
    init: Union[float, Sequence[float], np.ndarray],
    noise: NoiseEnsemble,
    labels: Optional[Sequence[str]] = None,
) -> PathEnsemble:
    """Integrate dX = drift(X, t) dt + diffusion(X, t) dW forward on the grid.

    ``drift`` and ``diffusion`` receive the current states as an array of
    shape (n_paths, n_components) together with the node time, and must
    return something broadcastable to that shape.  ``diffusion`` is the
    loading of each component on the shared scalar increment.

    Raises
    ------
    SimulationDivergedError
        If any state component becomes non-finite, identifying the first
        offending path and step.
    """
    grid = noise.grid
    init_arr = np.atleast_1d(np.asarray(init, dtype=np.float64))
    if init_arr.ndim != 1:
        raise ValueError("init must be a scalar or a 1-d component vector")
    if not np.all(np.isfinite(init_arr)):
        raise ValueError(f"init must be finite, got {init_arr}")
    n_comp = init_arr.size
    if labels is None:
        labels = ("x",) if n_comp == 1 else tuple(f"x{i}" for i in range(n_comp))
    labels = tuple(labels)

    n_paths = noise.n_paths
    dt = grid.dt
    states = np.empty((n_paths, grid.n_points, n_comp), dtype=np.float64)
    states[:, 0, :] = init_arr
    x = np.broadcast_to(init_arr, (n_paths, n_comp)).copy()

    times = grid.points
    dW = noise.increments
    for k in range(grid.n_steps):
        t_k = times[k]
        x = x + drift(x, t_k) * dt + diffusion(x, t_k) * dW[:, k, None]
        if not np.all(np.isfinite(x)):
            bad_path, bad_comp = np.argwhere(~np.isfinite(x))[0]
            raise SimulationDivergedError(
                path=int(bad_path), step=k + 1, label=labels[bad_comp]
            )
        states[:, k + 1, :] = x

    return PathEnsemble(grid=grid, states=states, labels=labels, noise=noise)
