import numpy as np
import pytest

from cases import case_single_scalar, case_two_node
from resobs.attack import make_shaper
from resobs.designer import (
    DetectorDesignInputs,
    NodeSystem,
    ObserverDesignInputs,
    TimeGrid,
    assemble_detector_system,
    assemble_observer_system,
    compute_bar_gains,
    design,
    detector_q_segments,
    extract_detector_gains,
    extract_observer_gains,
    find_min_gamma,
    integrate_detector_riccati,
    integrate_observer_riccati,
    solve_detector_lmi,
    solve_observer_lmi,
)
from resobs.errors import InfeasibilityError, ParameterError
from resobs.matlin import sym_eig
from resobs.network import Edge, Topology, build_interconnection
from resobs.plant import MatrixSchedule, PlantModel


def scalar_two_node_topo():
    one = np.array([[1.0]])
    return Topology(N=2, n=1, neighbors=[
        [Edge(src=1, W=one.copy(), H=one.copy(), Z=one.copy())],
        [Edge(src=0, W=one.copy(), H=one.copy(), Z=one.copy())],
    ])


def scalar_system(a=0.0, bb=1.0, c=1.0, e=1.0):
    """Hand-built one-dimensional design system."""
    return NodeSystem(
        node=0,
        breaks=np.array([]),
        A=np.array([[[a]]]),
        BB=np.array([[[bb]]]),
        C=np.array([[[c]]]),
        E=np.array([[[e]]]),
        CtEinv=np.array([[[c / e]]]),
        col_offsets=np.array([0, 1]),
    )


class TestDetectorLmi:
    def test_zero_interconnection(self):
        topo = Topology(N=1, n=2, neighbors=[[]])
        out = solve_detector_lmi(topo, 1.0, [np.eye(1)], margin=0.01)
        assert out["r"] == pytest.approx(0.01)
        assert out["lambda_min"] == pytest.approx(0.01, rel=1e-9)

    def test_two_node_scalar_by_hand(self):
        # gap = [[1/4, -1], [-1, 1/4]] with lambda_min = -3/4, so at
        # gamma = 1 and margin 0.01 the scale is r = 0.76
        topo = scalar_two_node_topo()
        gap = build_interconnection(topo).gap
        assert np.allclose(gap, [[0.25, -1.0], [-1.0, 0.25]])
        out = solve_detector_lmi(topo, 1.0, [np.eye(1), np.eye(1)],
                                 margin=0.01)
        assert out["r"] == pytest.approx(0.76)
        assert out["lambda_min"] == pytest.approx(0.01, abs=1e-12)

    def test_attack_weight_above_gram(self):
        topo = Topology(N=1, n=1, neighbors=[[]])
        out = solve_detector_lmi(topo, 1.0, [np.eye(2)], margin=0.01)
        assert np.allclose(out["R_check"][0], 1.01 * np.eye(2))

    def test_certificate_recheck_independent(self, design_cache):
        case = case_two_node()
        art = design_cache.artifacts(case, 2.0)
        gap = build_interconnection(case.topo).gap
        lmin = sym_eig(art.r * np.eye(gap.shape[0])
                       + case.gamma**2 * gap).eigenvalues[0]
        assert lmin >= art.margin / 2


class TestObserverLmi:
    def test_zero_p(self):
        topo = Topology(N=1, n=2, neighbors=[[]])
        out = solve_observer_lmi(topo, 1.0, np.zeros((2, 2)), margin=0.01)
        assert out["rbar"] == pytest.approx(0.01)

    def test_identity_shift(self):
        topo = Topology(N=1, n=2, neighbors=[[]])
        out = solve_observer_lmi(topo, 3.0, np.eye(2), margin=0.01)
        assert out["rbar"] == pytest.approx(1.01)

    def test_two_node_scalar_by_hand(self):
        # lambda_max(I - gap) = 1 + 3/4 at gamma_bar = 1: rbar = 1.76
        topo = scalar_two_node_topo()
        out = solve_observer_lmi(topo, 1.0, np.eye(2), margin=0.01)
        assert out["rbar"] == pytest.approx(1.76)
        assert out["lambda_min"] == pytest.approx(0.01, abs=1e-12)


class TestAssembly:
    def test_scalar_block_layout(self):
        model = PlantModel(
            n=1, m=1,
            A=MatrixSchedule.constant([[-1.5]]),
            B=MatrixSchedule.constant([[1.0]]),
            C=[MatrixSchedule.constant([[1.0]]),
               MatrixSchedule.constant([[1.0]])],
            D=[MatrixSchedule.constant([[1.0]]),
               MatrixSchedule.constant([[1.0]])],
            F=[np.array([[2.0]]), np.array([[1.0]])],
            x0=np.zeros(1),
        )
        topo = scalar_two_node_topo()
        shapers = [make_shaper(1, 1.0), make_shaper(1, 1.0)]
        sysm = assemble_detector_system(model, topo, shapers, 0)
        # drift [[a, -f], [0, 0]] for the constant-gain shaper
        assert np.allclose(sysm.A[0], [[-1.5, -2.0], [0.0, 0.0]])
        # E = blockdiag(D D', H H' + Z) = diag(1, 2)
        assert np.allclose(sysm.E[0], np.diag([1.0, 2.0]))
        # input Gram from [[B, F], [0, Gamma]]
        big_b = np.array([[1.0, 2.0], [0.0, -1.0]])
        assert np.allclose(sysm.BB[0], big_b @ big_b.T)
        # stacked outputs act on the plant-error block only
        assert np.allclose(sysm.C[0], [[1.0, 0.0], [1.0, 0.0]])

    def test_no_neighbors_shapes(self):
        model = PlantModel(
            n=2, m=1,
            A=MatrixSchedule.constant(np.zeros((2, 2))),
            B=MatrixSchedule.constant(np.ones((2, 1))),
            C=[MatrixSchedule.constant(np.array([[1.0, 0.0]]))],
            D=[MatrixSchedule.constant(np.eye(1))],
            F=[np.ones((2, 1))],
            x0=np.zeros(2),
        )
        topo = Topology(N=1, n=2, neighbors=[[]])
        sysm = assemble_detector_system(model, topo, [make_shaper(1, 1.0)], 0)
        assert sysm.C.shape == (1, 1, 3)   # [C_i, 0] only
        assert sysm.E.shape == (1, 1, 1)   # D D' only
        assert np.allclose(sysm.E[0], [[1.0]])

    def test_observer_input_gram(self):
        # B = 1, F = 2 scalar: BB1 = [B F][B F]' = 5
        model = PlantModel(
            n=1, m=1,
            A=MatrixSchedule.constant([[0.0]]),
            B=MatrixSchedule.constant([[1.0]]),
            C=[MatrixSchedule.constant([[1.0]])],
            D=[MatrixSchedule.constant([[1.0]])],
            F=[np.array([[2.0]])],
            x0=np.zeros(1),
        )
        topo = Topology(N=1, n=1, neighbors=[[]])
        sysm = assemble_observer_system(model, topo, 0)
        assert sysm.BB[0, 0, 0] == pytest.approx(5.0)


class TestRiccatiIntegration:
    def grid(self, T=1.0, h=1e-3):
        return TimeGrid.for_horizon(T, h)

    def make_inputs(self, a=0.0, bb=1.0, c=1.0, e=1.0, gamma=1.0, r=0.0):
        return DetectorDesignInputs(
            system=scalar_system(a, bb, c, e),
            gamma=gamma,
            R=np.array([[r]]),
            R_check=np.zeros((0, 0)),
            X=np.eye(1),
            X_check=np.eye(0),
        )

    def test_stationary_point(self):
        # Y' = -Y^2 + 1 with Y(0) = 1 stays at 1
        inputs = self.make_inputs()
        sol = integrate_detector_riccati(inputs, self.grid(),
                                         y0=np.array([[1.0]]))
        assert np.abs(sol.Y - 1.0).max() < 1e-12

    def test_tanh_solution(self):
        inputs = self.make_inputs()
        sol = integrate_detector_riccati(inputs, self.grid(),
                                         y0=np.array([[0.0]]))
        assert abs(sol.Y[-1, 0, 0] - np.tanh(1.0)) <= 1e-6

    def test_finite_difference_residual_oracle(self):
        # random stable scalar data: central differences of the trajectory
        # match the right-hand side to second order
        rng = np.random.default_rng(31)
        a, bb, c, e = -abs(rng.normal(1, 0.3)), 0.8, 1.2, 0.9
        inputs = self.make_inputs(a, bb, c, e, gamma=2.0, r=0.3)
        grid = self.grid(T=2.0)
        sol = integrate_detector_riccati(inputs, grid, y0=np.array([[0.5]]))
        q = detector_q_segments(inputs)[0, 0, 0]
        y = sol.Y[:, 0, 0]
        h = grid.h
        fd = (y[2:] - y[:-2]) / (2 * h)
        rhs = 2 * a * y[1:-1] - q * y[1:-1] ** 2 + bb
        assert np.abs(fd - rhs).max() <= 1e-4

    def test_observer_riccati_stationary(self):
        inputs = ObserverDesignInputs(
            system=scalar_system(),
            gamma_bar=1.0,
            R_bar=np.zeros((1, 1)),
            X_bar=np.eye(1),
        )
        sol = integrate_observer_riccati(inputs, self.grid(),
                                         y0=np.array([[1.0]]))
        assert np.abs(sol.Y - 1.0).max() < 1e-12

    def test_observer_riccati_tanh(self):
        inputs = ObserverDesignInputs(
            system=scalar_system(),
            gamma_bar=1.0,
            R_bar=np.zeros((1, 1)),
            X_bar=np.eye(1),
        )
        sol = integrate_observer_riccati(inputs, self.grid(),
                                         y0=np.array([[0.0]]))
        assert abs(sol.Y[-1, 0, 0] - np.tanh(1.0)) <= 1e-6

    def test_infeasible_gamma_reports_time(self):
        # a tiny gamma makes the weight term blow the solution past the cap
        inputs = self.make_inputs(a=0.0, gamma=1e-6, r=1.0)
        with pytest.raises(InfeasibilityError) as exc:
            integrate_detector_riccati(inputs, self.grid(),
                                       y0=np.array([[1.0]]))
        assert exc.value.t is not None
        assert exc.value.gamma == pytest.approx(1e-6)

    def test_solutions_stay_symmetric(self, design_cache):
        case = case_two_node()
        art = design_cache.artifacts(case, 2.0)
        for nd in art.nodes:
            y = nd.Y_det
            asym = np.abs(y - y.transpose(0, 2, 1)).max()
            assert asym <= 1e-10 * max(1.0, np.abs(y).max())

    def test_monotone_feasibility(self):
        # feasible at gamma implies feasible at every larger gamma
        case = case_two_node()
        grid = TimeGrid.for_horizon(2.0, case.h)
        for scale in (1.0, 2.0, 4.0):
            design(case.model, case.topo, case.shapers, grid,
                   case.gamma * scale, case.gamma_bar)

    def test_off_grid_breakpoint_rejected(self):
        from resobs.plant import MatrixSchedule as MS

        case = case_single_scalar()
        case.model.A = MS(np.array([[[-1.0]], [[-2.0]]]),
                          np.array([0.30037]))
        grid = TimeGrid.for_horizon(1.0, case.h)
        with pytest.raises(ParameterError) as exc:
            design(case.model, case.topo, case.shapers, grid,
                   case.gamma, case.gamma_bar)
        assert "breakpoint" in str(exc.value)


class TestGainExtraction:
    def test_scalar_partition(self):
        # Y = diag(2, 3), C = [1, 0], E = 1: gain stack (2, 0)', so the
        # plant row picks 2 and the attack row 0
        sysm = NodeSystem(
            node=0, breaks=np.array([]),
            A=np.zeros((1, 2, 2)), BB=np.zeros((1, 2, 2)),
            C=np.array([[[1.0, 0.0]]]),
            E=np.array([[[1.0]]]),
            CtEinv=np.array([[[1.0], [0.0]]]),
            col_offsets=np.array([0, 1]),
        )
        model = type("M", (), {"n": 1})()
        grid = TimeGrid(h=1.0, steps=1)
        y = np.stack([np.diag([2.0, 3.0])] * 2)
        gains = extract_detector_gains(y, sysm, model, grid)
        assert gains.L_hat()[0, 0, 0] == pytest.approx(2.0)
        assert gains.L_check()[0, 0, 0] == pytest.approx(0.0)

    def test_zero_y_zero_gains(self, design_cache):
        case = case_single_scalar()
        art = design_cache.artifacts(case, 2.0)
        sysm = art.systems_det[0]
        grid = TimeGrid(h=case.h, steps=4)
        y = np.zeros((5, 2, 2))
        gains = extract_detector_gains(y, sysm, case.model, grid)
        assert np.all(gains.stack == 0.0)

    def test_partition_widths(self):
        # p_i = 2 plus one neighbour with p_ij = 3: the neighbour block has
        # three columns
        rng = np.random.default_rng(2)
        model = PlantModel(
            n=2, m=1,
            A=MatrixSchedule.constant(np.zeros((2, 2))),
            B=MatrixSchedule.constant(np.ones((2, 1))),
            C=[MatrixSchedule.constant(rng.standard_normal((2, 2)))],
            D=[MatrixSchedule.constant(np.eye(2))],
            F=[np.ones((2, 1))],
            x0=np.zeros(2),
        )
        topo = Topology(N=2, n=2, neighbors=[
            [Edge(src=1, W=rng.standard_normal((3, 2)),
                  H=rng.standard_normal((3, 1)), Z=np.eye(3))],
            [],
        ])
        # second node has no outputs of its own wired here; give it C too
        model.C.append(MatrixSchedule.constant(np.eye(2)))
        model.D.append(MatrixSchedule.constant(np.eye(2)))
        model.F.append(np.ones((2, 1)))
        sysm = assemble_detector_system(
            model, topo, [make_shaper(1, 1.0), make_shaper(1, 1.0)], 0
        )
        grid = TimeGrid(h=1.0, steps=1)
        y = np.stack([np.eye(3)] * 2)
        gains = extract_detector_gains(y, sysm, model, grid)
        assert gains.K_hat(0).shape[2] == 3
        assert gains.K_check(0).shape[2] == 3

    def test_observer_scalar(self):
        # Y = 2, C = 3, E = 9: gain 2/3
        sysm = scalar_system(c=3.0, e=9.0)
        grid = TimeGrid(h=1.0, steps=1)
        y = np.full((2, 1, 1), 2.0)
        gains = extract_observer_gains(y, sysm, grid)
        assert gains.L()[0, 0, 0] == pytest.approx(2.0 / 3.0)

    def test_observer_identity(self):
        sysm = scalar_system(c=1.0, e=1.0)
        grid = TimeGrid(h=1.0, steps=1)
        y = np.ones((2, 1, 1))
        gains = extract_observer_gains(y, sysm, grid)
        assert gains.stack[0, 0, 0] == pytest.approx(1.0)


class TestBarGains:
    def test_equal_gains_cancel(self, design_cache):
        case = case_single_scalar()
        art = design_cache.artifacts(case, 2.0)
        nd = art.nodes[0]
        recomputed = compute_bar_gains(nd.det, nd.obs)
        assert np.array_equal(recomputed.stack, nd.bar.stack)

    def test_scalar_difference(self):
        from resobs.designer import DetectorGains, ObserverGains

        det = DetectorGains(stack=np.full((3, 2, 1), 2.0),
                            col_offsets=np.array([0, 1]), n=1)
        obs = ObserverGains(stack=np.full((3, 1, 1), 0.5),
                            col_offsets=np.array([0, 1]))
        bar = compute_bar_gains(det, obs)
        assert np.all(bar.stack == 1.5)

    def test_splitting_identity_bitexact(self, design_cache):
        case = case_two_node()
        art = design_cache.artifacts(case, 2.0)
        for nd in art.nodes:
            top = nd.det.stack[:, : case.model.n, :]
            assert np.array_equal(nd.bar.stack, top - nd.obs.stack)
            recon = nd.bar.stack + nd.obs.stack
            denom = max(np.abs(top).max(), 1.0)
            assert np.abs(recon - top).max() <= 1e-13 * denom


class TestDesignOrchestration:
    def test_design_report(self, design_cache):
        case = case_two_node()
        art = design_cache.artifacts(case, 2.0)
        rep = art.report_dict()
        assert rep["schema"] == 1
        assert rep["lmi"]["detector_lambda_min"] >= art.margin / 2
        assert rep["lmi"]["observer_lambda_min"] >= art.margin / 2
        assert len(rep["nodes"]) == 2
        for nd in rep["nodes"]:
            assert nd["detector"]["lambda_min"] > 0
            assert nd["observer"]["lambda_min"] > 0

    def test_bad_gamma_rejected(self):
        case = case_single_scalar()
        with pytest.raises(ParameterError):
            solve_detector_lmi(case.topo, -1.0, [np.eye(1)])

    def test_find_min_gamma_detector(self):
        case = case_single_scalar()
        grid = TimeGrid.for_horizon(1.0, 1e-3)
        gmin = find_min_gamma(case.model, case.topo, case.shapers, grid,
                              stage="detector", gamma0=4.0)
        assert 0 < gmin <= 4.0
        # returned level is feasible
        design(case.model, case.topo, case.shapers, grid, gmin, 4.0)

    def test_search_bracket_expands_upward(self):
        case = case_two_node()
        grid = TimeGrid.for_horizon(1.0, 1e-3)
        gmin = find_min_gamma(case.model, case.topo, case.shapers, grid,
                              stage="observer", gamma0=0.05)
        design(case.model, case.topo, case.shapers, grid, case.gamma, gmin)

    def test_alt_channel_weights_feed_observer_pass(self):
        # a per-edge second-stage weight changes the observer-side output
        # Gram and interconnection while leaving the detector side alone
        case = case_two_node()
        for edges in case.topo.neighbors:
            for e in edges:
                e.Z_alt = 2.0 * np.eye(2)
        grid = TimeGrid.for_horizon(1.0, case.h)
        sys_plain = assemble_observer_system(case.model, case.topo, 0)
        sys_alt = assemble_observer_system(case.model, case.topo, 0,
                                           alt_weights=True)
        p0 = case.model.p(0)
        assert np.allclose(sys_alt.E[0][p0:, p0:] - sys_plain.E[0][p0:, p0:],
                           np.eye(2))
        sys_det = assemble_detector_system(case.model, case.topo,
                                           case.shapers, 0)
        assert np.allclose(sys_det.E[0][p0:, p0:],
                           sys_plain.E[0][p0:, p0:])
        ic_alt = build_interconnection(case.topo, alt=True)
        ic_plain = build_interconnection(case.topo)
        assert not np.allclose(ic_alt.Phi, ic_plain.Phi)
        # the full design accepts the override
        design(case.model, case.topo, case.shapers, grid,
               case.gamma, case.gamma_bar)
