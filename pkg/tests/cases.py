"""Regression cases shared by the unit and acceptance tests.

Each case is a small but fully coupled network chosen so that the closed
loop has moderately fast dynamics: fast enough that the RK4 truncation error
of a millisecond step sits well above roundoff (the refinement checks need
the h^4 signal to dominate), slow enough that everything is comfortably
stable at that step.
"""

from dataclasses import dataclass, field

import numpy as np

from resobs.attack import AttackSignal, make_shaper
from resobs.network import Edge, Topology
from resobs.plant import (
    DecayingExpSignal,
    DisturbanceRealization,
    MatrixSchedule,
    NoiseSignal,
    PlantModel,
    SumSignal,
    WindowedSineSignal,
)


@dataclass
class Case:
    name: str
    model: PlantModel
    topo: Topology
    shapers: list
    gamma: float
    gamma_bar: float
    h: float
    xi: np.ndarray
    attacks: list = field(default_factory=list)
    dist_spec: list = field(default_factory=list)  # (target, kind, params)

    def disturbances(self, active=True):
        if not active:
            return DisturbanceRealization.zero(self.model, self.topo)
        dist = DisturbanceRealization.zero(self.model, self.topo)
        w_parts, v_parts, vij_parts = [], {}, {}
        for target, sig in self.dist_spec:
            if target == "w":
                w_parts.append(sig)
            elif target[0] == "v":
                v_parts.setdefault(target[1], []).append(sig)
            else:
                vij_parts.setdefault((target[1], target[2]), []).append(sig)
        if w_parts:
            dist.w = SumSignal(self.model.m, w_parts) if len(w_parts) > 1 else w_parts[0]
        for i, parts in v_parts.items():
            dist.v[i] = SumSignal(self.model.m_v(i), parts) if len(parts) > 1 else parts[0]
        for (i, src), parts in vij_parts.items():
            for j, e in enumerate(self.topo.neighbors[i]):
                if e.src == src:
                    dist.v_edge[i][j] = (
                        SumSignal(e.m_c, parts) if len(parts) > 1 else parts[0]
                    )
        return dist


def _const(m):
    return MatrixSchedule.constant(np.asarray(m, dtype=float))


def case_single_scalar(h=1e-3):
    model = PlantModel(
        n=1, m=1,
        A=_const([[-2.0]]), B=_const([[1.0]]),
        C=[_const([[1.0]])], D=[_const([[0.4]])],
        F=[np.array([[1.0]])],
        x0=np.array([1.0]),
    )
    topo = Topology(N=1, n=1, neighbors=[[]])
    return Case(
        name="single_scalar",
        model=model, topo=topo,
        shapers=[make_shaper(1, 2.0)],
        gamma=4.0, gamma_bar=4.0, h=h,
        xi=np.array([[0.3]]),
        attacks=[AttackSignal(node=0, onset=1.0, level=[0.8])],
        dist_spec=[
            ("w", DecayingExpSignal([0.5], 1.0)),
            (("v", 0), WindowedSineSignal([0.3], 5.0, (0.0, 1.5))),
        ],
    )


def case_two_node(h=1e-3, seed=11):
    # each node measures one direction sharply and the other weakly; the
    # neighbour channel supplies the precision along the weak direction
    eye2 = np.eye(2)
    model = PlantModel(
        n=2, m=1,
        A=_const([[0.0, 3.0], [-3.0, -1.0]]),
        B=_const([[1.0], [0.5]]),
        C=[_const([[1.0, 0.0], [0.0, 0.5]]),
           _const([[0.0, 1.0], [0.5, 0.0]])],
        D=[_const(np.diag([0.4, 0.8])), _const(np.diag([0.4, 0.8]))],
        F=[np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])],
        x0=np.array([1.0, -0.5]),
    )
    hch = np.array([[0.2], [0.1]])
    topo = Topology(N=2, n=2, neighbors=[
        [Edge(src=1, W=eye2.copy(), H=hch.copy(), Z=eye2.copy())],
        [Edge(src=0, W=eye2.copy(), H=hch.copy(), Z=eye2.copy())],
    ])
    return Case(
        name="two_node",
        model=model, topo=topo,
        shapers=[make_shaper(1, 1.5), make_shaper(1, 1.5)],
        gamma=6.0, gamma_bar=6.0, h=h,
        xi=np.array([[0.4, -0.2], [-0.3, 0.5]]),
        attacks=[AttackSignal(node=1, onset=1.0, level=[0.6],
                              decay_amp=[0.5], decay_rate=2.0)],
        dist_spec=[
            ("w", DecayingExpSignal([0.5], 1.0)),
            (("v", 0), NoiseSignal(2, 0.05, seed, h, 1.5)),
            (("vij", 0, 1), WindowedSineSignal([0.2], 4.0, (0.0, 1.0))),
        ],
    )


def case_ring3(h=1e-3, g=1.0):
    eye2 = np.eye(2)
    model = PlantModel(
        n=2, m=1,
        A=_const([[0.0, 1.0], [-1.0, 0.0]]),
        B=_const([[0.4], [0.2]]),
        C=[_const([[1.0, 0.0], [0.0, 0.3]]),
           _const([[0.0, 1.0], [0.3, 0.0]]),
           _const([[1.0, 1.0], [0.3, -0.3]])],
        D=[_const(np.diag([0.5, 1.2])) for _ in range(3)],
        F=[np.array([[1.0], [0.0]]),
           np.array([[0.0], [1.0]]),
           np.array([[1.0], [0.5]])],
        x0=np.array([1.0, 0.0]),
    )
    hch = np.array([[0.15], [0.1]])

    def ring_edge(src):
        return Edge(src=src, W=eye2.copy(), H=hch.copy(), Z=eye2.copy())

    topo = Topology(N=3, n=2, neighbors=[
        [ring_edge(1)], [ring_edge(2)], [ring_edge(0)],
    ])
    return Case(
        name="ring3",
        model=model, topo=topo,
        shapers=[make_shaper(1, g) for _ in range(3)],
        gamma=5.0, gamma_bar=5.0, h=h,
        xi=np.array([[0.2, -0.4], [0.6, 0.1], [-0.3, 0.3]]),
        attacks=[AttackSignal(node=1, onset=1.0, level=[1.0])],
        dist_spec=[("w", DecayingExpSignal([0.3], 1.5))],
    )


def case_ring4(h=1e-3):
    # directed four-ring with one chord into node 0
    eye3 = np.eye(3)
    model = PlantModel(
        n=3, m=1,
        A=_const([[-1.0, 2.0, 0.0], [-2.0, -1.0, 1.0], [0.0, -1.0, -3.0]]),
        B=_const([[1.0], [0.0], [0.5]]),
        C=[_const([[1.0, 0.0, 0.0], [0.0, 0.4, 0.0], [0.0, 0.0, 0.4]]),
           _const([[0.0, 1.0, 0.0], [0.4, 0.0, 0.0], [0.0, 0.0, 0.4]]),
           _const([[0.0, 0.0, 1.0], [0.4, 0.0, 0.0], [0.0, 0.4, 0.0]]),
           _const([[1.0, 1.0, 1.0], [0.4, -0.4, 0.0], [0.0, 0.4, -0.4]])],
        D=[_const(np.diag([0.5, 1.0, 1.0])) for _ in range(4)],
        F=[np.array([[1.0], [0.0], [0.0]]),
           np.array([[0.0], [1.0], [0.0]]),
           np.array([[0.0], [0.0], [1.0]]),
           np.array([[0.5], [0.5], [0.0]])],
        x0=np.array([1.0, 0.0, -0.5]),
    )
    hch = np.array([[0.1], [0.2], [0.1]])

    def edge(src):
        return Edge(src=src, W=eye3.copy(), H=hch.copy(), Z=eye3.copy())

    topo = Topology(N=4, n=3, neighbors=[
        [edge(1), edge(2)],
        [edge(2)],
        [edge(3)],
        [edge(0)],
    ])
    return Case(
        name="ring4",
        model=model, topo=topo,
        shapers=[make_shaper(1, 1.5) for _ in range(4)],
        gamma=7.0, gamma_bar=7.0, h=h,
        xi=np.array([
            [0.3, -0.1, 0.2], [-0.2, 0.4, 0.0],
            [0.1, 0.1, -0.3], [0.0, -0.2, 0.2],
        ]),
        attacks=[AttackSignal(node=2, onset=1.0, level=[0.7],
                              pulse_amp=[0.4], pulse_len=0.5)],
        dist_spec=[
            ("w", DecayingExpSignal([0.4], 1.0)),
            (("v", 1), WindowedSineSignal([0.2], 6.0, (0.0, 1.0))),
        ],
    )


def case_piecewise2(h=1e-3, seed=23):
    model = PlantModel(
        n=1, m=1,
        A=MatrixSchedule(np.array([[[-1.0]], [[-3.0]]]), np.array([1.0])),
        B=_const([[1.0]]),
        C=[_const([[1.0]]), _const([[1.0]])],
        D=[_const([[0.5]]), _const([[0.5]])],
        F=[np.array([[1.0]]), np.array([[1.0]])],
        x0=np.array([0.8]),
    )
    one = np.array([[1.0]])
    hch = np.array([[0.2]])
    topo = Topology(N=2, n=1, neighbors=[
        [Edge(src=1, W=one.copy(), H=hch.copy(), Z=one.copy())],
        [Edge(src=0, W=one.copy(), H=hch.copy(), Z=one.copy())],
    ])
    return Case(
        name="piecewise2",
        model=model, topo=topo,
        shapers=[make_shaper(1, 1.5), make_shaper(1, 1.5)],
        gamma=5.0, gamma_bar=5.0, h=h,
        xi=np.array([[0.1], [-0.4]]),
        attacks=[AttackSignal(node=1, onset=1.5, level=[0.5])],
        dist_spec=[("w", NoiseSignal(1, 0.1, seed, h, 1.5))],
    )


def regression_cases(h=1e-3):
    """The five oracle-equivalence regression cases (N in 1..4, n in 1..3)."""
    return [
        case_single_scalar(h),
        case_two_node(h),
        case_ring3(h),
        case_ring4(h),
        case_piecewise2(h),
    ]
