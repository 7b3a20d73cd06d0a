import numpy as np
import pytest

from resobs.errors import DefinitenessError, DimensionError
from resobs.network import Edge, Topology, build_interconnection


def scalar_two_node(w=1.0, h=1.0, z=1.0):
    one = np.array([[float(w)]])
    hm = np.array([[float(h)]])
    zm = np.array([[float(z)]])
    return Topology(N=2, n=1, neighbors=[
        [Edge(src=1, W=one.copy(), H=hm.copy(), Z=zm.copy())],
        [Edge(src=0, W=one.copy(), H=hm.copy(), Z=zm.copy())],
    ])


class TestBuildInterconnection:
    def test_single_node_no_edges(self):
        topo = Topology(N=1, n=3, neighbors=[[]])
        ic = build_interconnection(topo)
        assert ic.Phi.shape == (3, 3)
        assert np.all(ic.Phi == 0)
        assert np.all(ic.Delta == 0)

    def test_two_node_scalar_unit_weights(self):
        # W = H = Z = 1: U = 2, Delta_i = 1/4, off-diagonal -1/2
        ic = build_interconnection(scalar_two_node())
        assert np.allclose(ic.Delta, np.diag([0.25, 0.25]))
        assert np.allclose(ic.Phi, [[0.25, -0.5], [-0.5, 0.25]])
        assert np.allclose(ic.U[(0, 1)], [[2.0]])

    def test_two_node_scalar_z3(self):
        # Z = 3, H = 1: U = 4, Delta_i = 3/16, off-diagonal -1/4
        ic = build_interconnection(scalar_two_node(z=3.0))
        assert np.allclose(ic.Delta, np.diag([3 / 16, 3 / 16]))
        assert np.allclose(ic.Phi, [[3 / 16, -0.25], [-0.25, 3 / 16]])

    def test_gap_is_symmetric(self):
        rng = np.random.default_rng(4)
        w1 = rng.standard_normal((2, 3))
        w2 = rng.standard_normal((1, 3))
        topo = Topology(N=2, n=3, neighbors=[
            [Edge(src=1, W=w1, H=rng.standard_normal((2, 2)),
                  Z=np.eye(2) * 2.0)],
            [Edge(src=0, W=w2, H=rng.standard_normal((1, 1)),
                  Z=np.eye(1))],
        ])
        gap = build_interconnection(topo).gap
        assert np.allclose(gap, gap.T, atol=1e-14)

    @pytest.mark.parametrize("alpha", [0.5, 2.0, 10.0])
    def test_z_scaling_matches_direct_evaluation(self, alpha):
        # scaling every Z by alpha and rebuilding must agree with the
        # definition evaluated from scratch in plain numpy
        rng = np.random.default_rng(17)
        w = rng.standard_normal((2, 2))
        hm = rng.standard_normal((2, 1))
        z = np.eye(2) + 0.3 * np.ones((2, 2))
        topo = Topology(N=2, n=2, neighbors=[
            [Edge(src=1, W=w.copy(), H=hm.copy(), Z=alpha * z)],
            [Edge(src=0, W=w.copy(), H=hm.copy(), Z=alpha * z)],
        ])
        ic = build_interconnection(topo)
        u = hm @ hm.T + alpha * z
        uinv = np.linalg.inv(u)
        delta_i = w.T @ uinv @ (alpha * z) @ uinv @ w
        off = -w.T @ uinv @ w
        expect_phi = np.zeros((4, 4))
        expect_phi[:2, :2] = delta_i
        expect_phi[2:, 2:] = delta_i
        expect_phi[:2, 2:] = off
        expect_phi[2:, :2] = off
        assert np.abs(ic.Phi - expect_phi).max() < 1e-12
        assert np.abs(ic.Delta - np.kron(np.eye(2), delta_i)).max() < 1e-12

    def test_singular_channel_gram_names_edge(self):
        topo = scalar_two_node()
        # bypass construction-time validation to hit the defensive check
        topo.neighbors[0][0].Z = np.array([[0.0]])
        topo.neighbors[0][0].H = np.array([[0.0]])
        with pytest.raises(DefinitenessError) as exc:
            build_interconnection(topo)
        assert "(0 <- 1)" in str(exc.value)


class TestTopologyValidation:
    def test_self_loop_rejected(self):
        with pytest.raises(DimensionError):
            Topology(N=2, n=1, neighbors=[
                [Edge(src=0, W=np.eye(1), H=np.eye(1), Z=np.eye(1))], [],
            ])

    def test_w_column_mismatch(self):
        with pytest.raises(DimensionError) as exc:
            Topology(N=2, n=3, neighbors=[
                [Edge(src=1, W=np.ones((1, 2)), H=np.eye(1), Z=np.eye(1))],
                [],
            ])
        assert "W" in str(exc.value)

    def test_non_spd_z_rejected(self):
        with pytest.raises(DefinitenessError):
            Topology(N=2, n=1, neighbors=[
                [Edge(src=1, W=np.eye(1), H=np.eye(1),
                      Z=np.array([[-1.0]]))],
                [],
            ])

    def test_duplicate_edge_rejected(self):
        e = lambda: Edge(src=1, W=np.eye(1), H=np.eye(1), Z=np.eye(1))
        with pytest.raises(DimensionError):
            Topology(N=2, n=1, neighbors=[[e(), e()], []])
