"""Sensor-network topology and the interconnection matrices of the design
conditions.

Each directed edge (i <- j) carries the selection matrix W applied to the
neighbour's estimate, the channel noise matrix H, and an SPD design weight Z.
Neighbour lists are ordered; this ordering fixes the column blocks of the
partitioned gain matrices and must be identical in the designer and the
simulator, so it is frozen at construction time.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DefinitenessError, DimensionError
from .matlin import as_matrix, eig_range, solve_spd


@dataclass
class Edge:
    """Directed communication link: node ``src`` sends W_ij x_hat_j."""

    src: int
    W: np.ndarray
    H: np.ndarray
    Z: np.ndarray
    Z_alt: np.ndarray | None = None  # optional weight for the observer design pass

    @property
    def p(self):
        return self.W.shape[0]

    @property
    def m_c(self):
        """Dimension of the channel noise v_ij."""
        return self.H.shape[1]

    def U(self, alt=False):
        """Channel Gram matrix H H' + Z."""
        z = self.Z_alt if (alt and self.Z_alt is not None) else self.Z
        return self.H @ self.H.T + z

    def zweight(self, alt=False):
        return self.Z_alt if (alt and self.Z_alt is not None) else self.Z


@dataclass
class Topology:
    """Directed neighbour graph over N nodes observing an n-dimensional plant.

    ``neighbors[i]`` is the ordered list of in-edges of node i.
    """

    N: int
    n: int
    neighbors: list = field(default_factory=list)

    def __post_init__(self):
        if self.N < 1:
            raise DimensionError(f"topology: node count must be >= 1, got {self.N}")
        if len(self.neighbors) != self.N:
            raise DimensionError(
                f"topology: expected {self.N} neighbor lists, got {len(self.neighbors)}"
            )
        for i, edges in enumerate(self.neighbors):
            seen = set()
            for k, e in enumerate(edges):
                label = f"edge ({i} <- {e.src})"
                if e.src == i:
                    raise DimensionError(f"{label}: self-loops are not allowed")
                if not (0 <= e.src < self.N):
                    raise DimensionError(f"{label}: source node out of range")
                if e.src in seen:
                    raise DimensionError(f"{label}: duplicate edge")
                seen.add(e.src)
                e.W = as_matrix(e.W, f"{label} W")
                e.H = as_matrix(e.H, f"{label} H")
                e.Z = as_matrix(e.Z, f"{label} Z")
                if e.W.shape[1] != self.n:
                    raise DimensionError(
                        f"{label}: W must have {self.n} columns, got {e.W.shape[1]}"
                    )
                p = e.W.shape[0]
                if e.H.shape[0] != p:
                    raise DimensionError(
                        f"{label}: H row count {e.H.shape[0]} != W row count {p}"
                    )
                for zname, z in (("Z", e.Z), ("Z_alt", e.Z_alt)):
                    if z is None:
                        continue
                    z = as_matrix(z, f"{label} {zname}")
                    if z.shape != (p, p):
                        raise DimensionError(
                            f"{label}: {zname} must be {p}x{p}, got {z.shape}"
                        )
                    if np.abs(z - z.T).max() > 1e-9 * max(1.0, np.abs(z).max()):
                        raise DimensionError(f"{label}: {zname} is not symmetric")
                    lmin, _ = eig_range(z)
                    if lmin <= 0:
                        raise DefinitenessError(
                            f"{label}: {zname} is not positive definite "
                            f"(lambda_min = {lmin:.3e})",
                            context=label,
                        )
                    if zname == "Z_alt":
                        e.Z_alt = z

    def q(self, i):
        """In-degree of node i."""
        return len(self.neighbors[i])

    def edges(self):
        """Deterministic iteration: (receiver i, slot k, Edge)."""
        for i in range(self.N):
            for k, e in enumerate(self.neighbors[i]):
                yield i, k, e

    def has_alt_weights(self):
        return any(e.Z_alt is not None for _, _, e in self.edges())


@dataclass
class InterconnectionMatrices:
    """Topology-derived matrices entering the feasibility conditions."""

    Phi: np.ndarray     # nN x nN block matrix
    Delta: np.ndarray   # block-diagonal nN x nN
    U: dict             # (i, src) -> channel Gram matrix

    @property
    def gap(self):
        """Phi + Phi' - Delta, the symmetric matrix certified by the LMIs."""
        return self.Phi + self.Phi.T - self.Delta


def build_interconnection(topo: Topology, alt=False) -> InterconnectionMatrices:
    """Assemble Phi, Delta and the per-edge Gram matrices U from the topology.

    Diagonal blocks are Delta_i = sum_j W' U^-1 Z U^-1 W over the in-edges,
    off-diagonal blocks -W' U^-1 W for each in-edge, zero elsewhere. Raises
    :class:`DefinitenessError` naming the edge whose U is singular.
    """
    n, N = topo.n, topo.N
    phi = np.zeros((n * N, n * N))
    delta = np.zeros((n * N, n * N))
    gram = {}
    for i, _, e in topo.edges():
        label = f"edge ({i} <- {e.src})"
        u = e.U(alt)
        gram[(i, e.src)] = u
        try:
            uinv_w = solve_spd(u, e.W, context=f"U of {label}")
        except DefinitenessError as err:
            raise DefinitenessError(
                f"channel Gram matrix of {label} is not positive definite",
                pivot=err.pivot,
                context=label,
            ) from err
        z = e.zweight(alt)
        ri = slice(i * n, (i + 1) * n)
        rj = slice(e.src * n, (e.src + 1) * n)
        contrib = uinv_w.T @ z @ uinv_w
        delta[ri, ri] += contrib
        phi[ri, ri] += contrib
        phi[ri, rj] -= e.W.T @ uinv_w
    return InterconnectionMatrices(Phi=phi, Delta=delta, U=gram)


def psd_sqrt(m):
    """Symmetric PSD square root (used only for reporting; the design needs
    the Gram matrices directly)."""
    from .matlin import sym_eig

    res = sym_eig(m)
    w = np.clip(res.eigenvalues, 0.0, None)
    return (res.eigenvectors * np.sqrt(w)) @ res.eigenvectors.T
