"""Admissible biasing attack inputs and the tracking-loop shaper realization.

An admissible attack is a constant level plus an exponentially decaying term
plus a square-integrable pulse, all switched on at ``onset``. Such signals
can be tracked by a stable feedback loop around an integrator; with the
constant-gain loop used here the shaper realization is (Omega, Gamma,
Upsilon) = (0, -g I, I) and the tracked estimate obeys
f_hat' = -g (f_hat - f), which converges exponentially with rate g.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError


@dataclass
class AttackShaper:
    """State-space realization of the attack tracking loop at one node."""

    Omega: np.ndarray
    Gamma: np.ndarray
    Upsilon: np.ndarray
    gain: float

    @property
    def n_f(self):
        return self.Omega.shape[0]


def make_shaper(n_f: int, g: float) -> AttackShaper:
    """Constant-gain shaper of dimension ``n_f`` with loop gain ``g`` > 0."""
    if g <= 0:
        raise ParameterError(f"shaper gain must be positive, got {g}")
    if n_f < 1:
        raise DimensionError(f"shaper dimension must be >= 1, got {n_f}")
    eye = np.eye(n_f)
    return AttackShaper(
        Omega=np.zeros((n_f, n_f)),
        Gamma=-g * eye,
        Upsilon=eye.copy(),
        gain=float(g),
    )


@dataclass
class AttackSignal:
    """Biasing input injected into the observer of one node.

    Zero before ``onset``; afterwards the sum of a constant ``level``, a
    decaying exponential ``decay_amp * exp(-decay_rate (t - onset))`` and a
    rectangular pulse ``pulse_amp`` on [onset, onset + pulse_len).
    """

    node: int
    onset: float
    level: np.ndarray
    decay_amp: np.ndarray | None = None
    decay_rate: float = 1.0
    pulse_amp: np.ndarray | None = None
    pulse_len: float = 0.0

    def __post_init__(self):
        self.level = np.atleast_1d(np.asarray(self.level, dtype=float))
        self.dim = self.level.shape[0]
        for name in ("decay_amp", "pulse_amp"):
            val = getattr(self, name)
            if val is not None:
                val = np.atleast_1d(np.asarray(val, dtype=float))
                if val.shape != (self.dim,):
                    raise DimensionError(
                        f"attack {name}: expected length {self.dim}, got {val.shape}"
                    )
                setattr(self, name, val)
        if self.decay_amp is not None and self.decay_rate <= 0:
            raise ParameterError(
                f"attack decay_rate must be > 0, got {self.decay_rate}"
            )
        if self.pulse_amp is not None and self.pulse_len <= 0:
            raise ParameterError(
                f"attack pulse_len must be > 0, got {self.pulse_len}"
            )

    def sample(self, t):
        """Vectorized evaluation at an array of times."""
        t = np.asarray(t, dtype=float)
        act = (t >= self.onset).astype(float)
        out = act[..., None] * self.level
        if self.decay_amp is not None:
            env = act * np.exp(-self.decay_rate * np.maximum(t - self.onset, 0.0))
            out = out + env[..., None] * self.decay_amp
        if self.pulse_amp is not None:
            inside = ((t >= self.onset) & (t < self.onset + self.pulse_len)).astype(float)
            out = out + inside[..., None] * self.pulse_amp
        return out


def eval_attack(sig: AttackSignal, t: float):
    """Attack vector at a single time instant."""
    return sig.sample(np.asarray(float(t)))


def attack_input_for_node(attacks, node, n_f):
    """Sum of all attack signals aimed at ``node`` as a sampling callable."""
    mine = [a for a in attacks if a.node == node]
    for a in mine:
        if a.dim != n_f:
            raise DimensionError(
                f"attack at node {node}: dimension {a.dim} != channel width {n_f}"
            )

    def sample(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape + (n_f,))
        for a in mine:
            out += a.sample(t)
        return out

    return sample
