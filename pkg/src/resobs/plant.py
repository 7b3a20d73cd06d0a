"""The observed time-varying plant, node measurements and disturbance signals.

Time-varying coefficients are piecewise-constant schedules (a constant matrix
is a single-segment schedule). Evaluation at a breakpoint returns the
right-limit value. Disturbances are sums of analytic primitives that are
square integrable by construction: seeded piecewise-constant noise on a
finite window, decaying exponentials, and windowed sinusoids. Evaluating any
of them twice at the same time is bit-identical, which the fixed-step
integrators rely on.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DefinitenessError, DimensionError, ParameterError
from .matlin import as_matrix, eig_range


class MatrixSchedule:
    """Constant or piecewise-constant matrix-valued function of time."""

    def __init__(self, values, breaks=()):
        values = np.asarray(values, dtype=float)
        if values.ndim == 2:
            values = values[None]
        if values.ndim != 3:
            raise DimensionError(
                f"schedule: expected (segments, rows, cols) values, got shape {values.shape}"
            )
        breaks = np.asarray(breaks, dtype=float).ravel()
        if len(breaks) != values.shape[0] - 1:
            raise DimensionError(
                f"schedule: {values.shape[0]} segments need "
                f"{values.shape[0] - 1} breakpoints, got {len(breaks)}"
            )
        if len(breaks) > 1 and not np.all(np.diff(breaks) > 0):
            raise DimensionError("schedule: breakpoints must be strictly increasing")
        self.values = np.ascontiguousarray(values)
        self.breaks = breaks

    @classmethod
    def constant(cls, m):
        return cls(np.asarray(m, dtype=float))

    @property
    def shape(self):
        return self.values.shape[1:]

    @property
    def is_constant(self):
        return self.values.shape[0] == 1

    def segment_index(self, t):
        """Segment holding time t; right-continuous at breakpoints."""
        return int(np.searchsorted(self.breaks, t, side="right"))

    def value(self, t):
        return self.values[self.segment_index(t)]

    def __call__(self, t):
        return self.value(t)


@dataclass
class PlantModel:
    """Plant dynamics plus per-node measurement maps and attack channels.

    dx/dt = A(t) x + B(t) w, y_i = C_i(t) x + D_i(t) v_i, and F_i is the
    constant matrix through which a biasing input enters the observer at
    node i.
    """

    n: int
    m: int
    A: MatrixSchedule
    B: MatrixSchedule
    C: list
    D: list
    F: list
    x0: np.ndarray

    def __post_init__(self):
        if self.A.shape != (self.n, self.n):
            raise DimensionError(
                f"plant A: expected {(self.n, self.n)}, got {self.A.shape}"
            )
        if self.B.shape != (self.n, self.m):
            raise DimensionError(
                f"plant B: expected {(self.n, self.m)}, got {self.B.shape}"
            )
        if not (len(self.C) == len(self.D) == len(self.F)):
            raise DimensionError("plant: C, D, F must have one entry per node")
        self.x0 = np.asarray(self.x0, dtype=float).ravel()
        if self.x0.shape != (self.n,):
            raise DimensionError(
                f"plant x0: expected length {self.n}, got {self.x0.shape}"
            )
        for i, (c, d, f) in enumerate(zip(self.C, self.D, self.F)):
            if c.shape[1] != self.n:
                raise DimensionError(
                    f"node {i} C: expected {self.n} columns, got {c.shape[1]}"
                )
            if d.shape[0] != c.shape[0]:
                raise DimensionError(
                    f"node {i} D: row count {d.shape[0]} != measurement "
                    f"dimension {c.shape[0]}"
                )
            self.F[i] = as_matrix(f, f"node {i} F")
            if self.F[i].shape[0] != self.n:
                raise DimensionError(
                    f"node {i} F: expected {self.n} rows, got {self.F[i].shape[0]}"
                )
            # D D' must stay positive definite on every segment
            for s in range(d.values.shape[0]):
                dd = d.values[s] @ d.values[s].T
                lmin, _ = eig_range(dd)
                if lmin <= 0:
                    raise DefinitenessError(
                        f"node {i} D segment {s}: D D' is not positive definite",
                        context=f"node {i}",
                    )

    @property
    def N(self):
        return len(self.C)

    def p(self, i):
        """Measurement dimension of node i."""
        return self.C[i].shape[0]

    def m_v(self, i):
        """Measurement-noise dimension of node i."""
        return self.D[i].shape[1]

    def n_f(self, i):
        """Attack-input dimension of node i."""
        return self.F[i].shape[1]


def eval_plant_derivative(model: PlantModel, t, x, w):
    """A(t) x + B(t) w with dimension checks."""
    x = np.asarray(x, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    if x.shape != (model.n,):
        raise DimensionError(f"state: expected length {model.n}, got {x.shape}")
    if w.shape != (model.m,):
        raise DimensionError(f"disturbance: expected length {model.m}, got {w.shape}")
    return model.A.value(t) @ x + model.B.value(t) @ w


def eval_measurement(model: PlantModel, i, t, x, v_i):
    """y_i = C_i(t) x + D_i(t) v_i with dimension checks."""
    x = np.asarray(x, dtype=float).ravel()
    v_i = np.asarray(v_i, dtype=float).ravel()
    if x.shape != (model.n,):
        raise DimensionError(f"state: expected length {model.n}, got {x.shape}")
    if v_i.shape != (model.m_v(i),):
        raise DimensionError(
            f"node {i} noise: expected length {model.m_v(i)}, got {v_i.shape}"
        )
    return model.C[i].value(t) @ x + model.D[i].value(t) @ v_i


# ---------------------------------------------------------------------------
# disturbance signal primitives


class ZeroSignal:
    def __init__(self, dim):
        self.dim = dim

    def sample(self, t):
        t = np.asarray(t, dtype=float)
        return np.zeros(t.shape + (self.dim,))


class DecayingExpSignal:
    """amp * exp(-rate (t - start)) for t >= start, zero before."""

    def __init__(self, amp, rate, start=0.0):
        self.amp = np.atleast_1d(np.asarray(amp, dtype=float))
        if rate <= 0:
            raise ParameterError(f"decaying exponential: rate must be > 0, got {rate}")
        self.rate = float(rate)
        self.start = float(start)
        self.dim = self.amp.shape[0]

    def sample(self, t):
        t = np.asarray(t, dtype=float)
        act = (t >= self.start).astype(float)
        env = act * np.exp(-self.rate * np.maximum(t - self.start, 0.0))
        return env[..., None] * self.amp


class WindowedSineSignal:
    """amp * sin(omega (t - t_on) + phase) on the window [t_on, t_off)."""

    def __init__(self, amp, omega, window, phase=0.0):
        self.amp = np.atleast_1d(np.asarray(amp, dtype=float))
        self.omega = float(omega)
        self.t_on, self.t_off = float(window[0]), float(window[1])
        if not self.t_off > self.t_on:
            raise ParameterError("windowed sinusoid: window must have t_off > t_on")
        self.phase = float(phase)
        self.dim = self.amp.shape[0]

    def sample(self, t):
        t = np.asarray(t, dtype=float)
        act = ((t >= self.t_on) & (t < self.t_off)).astype(float)
        osc = act * np.sin(self.omega * (t - self.t_on) + self.phase)
        return osc[..., None] * self.amp


class NoiseSignal:
    """Seeded sample path held piecewise-constant on cells of width ``hold``,
    windowed to [0, t_off) so it stays square integrable.

    The hold grid is pinned to the scenario's base step, not to whatever step
    the integrator happens to use, so refining the integration step leaves
    the signal (as a function of time) unchanged.
    """

    def __init__(self, dim, scale, seed, hold, t_off):
        if seed is None:
            raise ParameterError("noise signal: a seed is required")
        if hold <= 0 or t_off <= 0:
            raise ParameterError("noise signal: hold and t_off must be > 0")
        self.dim = dim
        self.scale = np.broadcast_to(
            np.atleast_1d(np.asarray(scale, dtype=float)), (dim,)
        ).copy()
        self.hold = float(hold)
        self.t_off = float(t_off)
        ncells = int(np.ceil(t_off / hold - 1e-9))
        rng = np.random.default_rng(seed)
        self.table = rng.standard_normal((ncells, dim)) * self.scale

    def sample(self, t):
        t = np.asarray(t, dtype=float)
        cell = np.floor(t / self.hold).astype(np.int64)
        inside = (t >= 0.0) & (t < self.t_off) & (cell < self.table.shape[0])
        cell = np.clip(cell, 0, self.table.shape[0] - 1)
        out = self.table[cell]
        out[~inside] = 0.0
        return out


class SumSignal:
    def __init__(self, dim, parts=()):
        self.dim = dim
        self.parts = list(parts)
        for p in self.parts:
            if p.dim != dim:
                raise DimensionError(
                    f"signal sum: component dimension {p.dim} != {dim}"
                )

    def sample(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (self.dim,))
        for p in self.parts:
            out += p.sample(t)
        return out


@dataclass
class DisturbanceRealization:
    """All exogenous disturbance signals of one scenario run.

    ``w`` drives the plant, ``v[i]`` the measurement at node i, and
    ``v_edge[i][k]`` the k-th communication in-channel of node i (matching
    the topology's neighbour ordering).
    """

    w: object
    v: list
    v_edge: list = field(default_factory=list)

    @classmethod
    def zero(cls, model: PlantModel, topo):
        return cls(
            w=ZeroSignal(model.m),
            v=[ZeroSignal(model.m_v(i)) for i in range(model.N)],
            v_edge=[
                [ZeroSignal(e.m_c) for e in topo.neighbors[i]]
                for i in range(topo.N)
            ],
        )
