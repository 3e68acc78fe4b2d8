"""Time grids and explicit Euler integration of velocity fields.

Two time conventions are in play. ``data_fraction`` has ``t = 0`` at noise
and ``t = 1`` at data; ``noise_level`` is its complement ``u = 1 - t``.
Fields are always called with data-fraction time.
"""
import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .flow_model.base import NULL

ASCENDING, DESCENDING = "ascending", "descending"
DATA_FRACTION, NOISE_LEVEL = "data_fraction", "noise_level"


class IntegrationError(FloatingPointError):
    def __init__(self, step, last_state):
        super().__init__(f"non-finite state at step {step}")
        self.step = step
        self.last_state = last_state


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly monotone times in [0, 1] tagged with direction and convention.

    ``complement`` holds ``1 - times`` as computed at construction; keeping it
    makes :meth:`convert` an exact involution despite rounding.
    """

    times: np.ndarray
    direction: str
    convention: str
    complement: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("a grid needs at least two times")
        if self.direction not in (ASCENDING, DESCENDING):
            raise ValueError(f"bad direction {self.direction!r}")
        if self.convention not in (DATA_FRACTION, NOISE_LEVEL):
            raise ValueError(f"bad convention {self.convention!r}")
        steps = np.diff(times)
        ok = np.all(steps > 0) if self.direction == ASCENDING else np.all(steps < 0)
        if not ok:
            raise ValueError(f"times are not strictly {self.direction}")
        if times.min() < 0.0 or times.max() > 1.0:
            raise ValueError("grid times must lie in [0, 1]")
        comp = 1.0 - times if self.complement is None else np.asarray(self.complement, float)
        times.setflags(write=False)
        comp.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "complement", comp)

    def __len__(self):
        return len(self.times)

    def __eq__(self, other):
        return (isinstance(other, TimeGrid) and self.direction == other.direction
                and self.convention == other.convention
                and np.array_equal(self.times, other.times))

    @property
    def n_steps(self):
        return len(self.times) - 1

    def convert(self):
        """Same instants in the other convention (direction flips)."""
        return TimeGrid(self.complement, _flip(self.direction), _other(self.convention),
                        self.times)

    def data_fraction(self):
        """Data-fraction times for field evaluation."""
        return self.times if self.convention == DATA_FRACTION else self.complement

    def data_direction(self):
        return self.direction if self.convention == DATA_FRACTION else _flip(self.direction)

    def describe(self):
        return {"n_steps": self.n_steps, "direction": self.direction,
                "convention": self.convention,
                "start": float(self.times[0]), "stop": float(self.times[-1])}


def _flip(direction):
    return DESCENDING if direction == ASCENDING else ASCENDING


def _other(convention):
    return NOISE_LEVEL if convention == DATA_FRACTION else DATA_FRACTION


def uniform_grid(n, direction=ASCENDING, convention=DATA_FRACTION):
    """``n + 1`` equally spaced times spanning [0, 1]."""
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    n = int(n)
    i = np.arange(n + 1)
    up, down = i / n, (n - i) / n
    if direction == ASCENDING:
        return TimeGrid(up, direction, convention, down)
    return TimeGrid(down, direction, convention, up)


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    convention: str
    meta: dict = field(default_factory=dict)

    @property
    def final(self):
        return self.states[-1]

    @property
    def initial(self):
        return self.states[0]

    def __len__(self):
        return len(self.times)

    def to_csv(self, path):
        write_trajectory_csv(path, self)


def write_trajectory_csv(path, traj):
    states = np.asarray(traj.states)
    if states.ndim != 2:
        raise ValueError("CSV export needs a single-state trajectory (steps, dim)")
    dim = states.shape[1]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "time", "convention", "dim"] + [f"v{k}" for k in range(dim)])
        for step, (t, x) in enumerate(zip(traj.times, states)):
            w.writerow([step, f"{t:.17g}", traj.convention, dim] + [f"{v:.17g}" for v in x])
    return path


def read_trajectory_csv(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    times = np.array([float(r[1]) for r in body])
    states = np.array([[float(v) for v in r[4:]] for r in body])
    return Trajectory(times, states, body[0][2] if body else DATA_FRACTION)


def euler(velocity, x0, grid, meta=None):
    """Integrate ``dx = velocity(x, t_data) dt_data`` along ``grid``.

    ``velocity`` receives data-fraction time. Step sizes are taken in data
    fraction, so a descending data-fraction grid runs the reverse ODE.
    """
    t_data = grid.data_fraction()
    x = np.array(x0, dtype=float)
    states = [x.copy()]
    for k in range(grid.n_steps):
        x = x + (t_data[k + 1] - t_data[k]) * velocity(x, t_data[k])
        if not np.all(np.isfinite(x)):
            raise IntegrationError(k, states[-1])
        states.append(x)
    return Trajectory(grid.times, np.array(states), grid.convention, dict(meta or {}))


def _meta(field, cond, grid, **extra):
    return {"field": getattr(field, "kind", type(field).__name__), "condition": int(cond),
            "grid": grid.describe(), **extra}


def integrate_forward(field, x0, grid, cond=NULL):
    """Forward generation from noise ``x0`` at data fraction 0 to a sample at 1."""
    if grid.data_direction() != ASCENDING:
        raise ValueError("forward integration needs an ascending data-fraction grid")
    return euler(lambda x, t: field.velocity(x, t, cond), x0, grid, _meta(field, cond, grid))


def invert(field, x1, grid, cond=NULL):
    """Reverse ODE from data ``x1`` at data fraction 1 back to its latent noise."""
    if grid.data_direction() != DESCENDING:
        raise ValueError("inversion needs a descending data-fraction grid")
    return euler(lambda x, t: field.velocity(x, t, cond), x1, grid, _meta(field, cond, grid))


@dataclass(frozen=True)
class Reconstruction:
    latent: np.ndarray
    reconstruction: np.ndarray
    error: np.ndarray
    inversion: Trajectory
    forward: Trajectory


def reconstruct(field, x1, n_steps, cond=NULL):
    """Invert ``x1`` and regenerate it; ``error`` is ``||x1' - x1||`` per sample."""
    inv = invert(field, x1, uniform_grid(n_steps, DESCENDING), cond)
    fwd = integrate_forward(field, inv.final, uniform_grid(n_steps, ASCENDING), cond)
    err = np.linalg.norm(fwd.final - np.asarray(x1, dtype=float), axis=-1)
    return Reconstruction(inv.final, fwd.final, err, inv, fwd)


def reference_integrate(field, x0, cond=NULL, n_fine=4096):
    """Endpoint of forward Euler on a very fine uniform grid."""
    return integrate_forward(field, x0, uniform_grid(n_fine), cond).final
