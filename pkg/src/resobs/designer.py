"""Design pipeline for the resilient observer network.

The pipeline has a central pre-pass and a per-node pass:

1. Two always-feasible linear matrix inequalities are solved by scaled
   identity construction, with eigenvalue certificates recomputed by the
   Jacobi eigensolver. This step needs only the communication topology.
2. Per node, two differential Riccati equations are integrated forward with
   RK4 on a fixed grid: one for the joint detector of the extended error
   (plant error plus attack-shaper state), one for the controlled plant
   observer. Positivity and boundedness of the solutions are monitored at
   every grid point; a violation means the requested attenuation level is
   infeasible on this horizon.
3. Gains are read off by partitioning Y C' E^-1 along the measurement and
   neighbour column blocks, and the detector innovation gains are the
   difference of the joint and observer gains, stored exactly as computed.

Each node's Riccati integration consumes only node-local data plus the
centrally distributed weights, so step 2 parallelizes across nodes.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .attack import AttackShaper
from .errors import DimensionError, InfeasibilityError, ParameterError
from .matlin import as_matrix, solve_spd, spd_inverse, sym_eig
from .network import Topology, build_interconnection
from .plant import PlantModel


@dataclass
class TimeGrid:
    """Uniform grid [0, steps * h] with steps + 1 points."""

    h: float
    steps: int

    def __post_init__(self):
        if self.h <= 0:
            raise ParameterError(f"grid step must be positive, got {self.h}")
        if self.steps < 1:
            raise ParameterError(f"grid needs at least one step, got {self.steps}")

    @property
    def T(self):
        return self.steps * self.h

    def times(self):
        return np.arange(self.steps + 1) * self.h

    @classmethod
    def for_horizon(cls, T, h):
        steps = int(round(T / h))
        if abs(steps * h - T) > 1e-9 * max(1.0, abs(T)):
            raise ParameterError(
                f"horizon {T} is not an integer multiple of step {h}"
            )
        return cls(h=h, steps=steps)


# ---------------------------------------------------------------------------
# LMI construction with eigenvalue certificates


def solve_detector_lmi(topo, gamma, upsilons, margin=0.01, interconn=None):
    """Feasible weights for the detector design conditions.

    R is chosen as r I with r just large enough that
    R + gamma^2 (Phi + Phi' - Delta) is positive definite with margin to
    spare, and each attack-state weight as Upsilon' Upsilon + margin I.
    Always feasible; returns the constructed weights and the certificate
    lambda_min recomputed independently by the eigensolver.
    """
    if gamma <= 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    if margin <= 0:
        raise ParameterError(f"margin must be positive, got {margin}")
    if interconn is None:
        interconn = build_interconnection(topo)
    gap = gamma**2 * interconn.gap
    lmin_gap = sym_eig(gap).eigenvalues[0]
    r = max(0.0, -lmin_gap) + margin
    cert = sym_eig(r * np.eye(gap.shape[0]) + gap).eigenvalues[0]
    if cert < margin / 2:
        raise InfeasibilityError(
            f"detector LMI certificate {cert:.3e} below margin/2", gamma=gamma
        )
    r_check = [
        u.T @ u + margin * np.eye(u.shape[1]) for u in upsilons
    ]
    return {
        "r": r,
        "R": r * np.eye(topo.n),
        "R_check": r_check,
        "lambda_min": cert,
        "margin": margin,
    }


def solve_observer_lmi(topo, gamma_bar, P, margin=0.01, interconn=None):
    """Feasible weight for the observer design condition.

    R_bar = rbar I with rbar = max(0, lambda_max(P - gamma_bar^2 gap)) +
    margin certifies R_bar + gamma_bar^2 gap > P. Always feasible.
    """
    if gamma_bar <= 0:
        raise ParameterError(f"gamma_bar must be positive, got {gamma_bar}")
    if margin <= 0:
        raise ParameterError(f"margin must be positive, got {margin}")
    if interconn is None:
        interconn = build_interconnection(topo, alt=topo.has_alt_weights())
    gap = gamma_bar**2 * interconn.gap
    P = as_matrix(P, "performance weight P")
    if P.shape != gap.shape:
        raise DimensionError(
            f"performance weight P: expected {gap.shape}, got {P.shape}"
        )
    lmax = sym_eig(P - gap).eigenvalues[-1]
    rbar = max(0.0, lmax) + margin
    cert = sym_eig(rbar * np.eye(gap.shape[0]) + gap - P).eigenvalues[0]
    if cert < margin / 2:
        raise InfeasibilityError(
            f"observer LMI certificate {cert:.3e} below margin/2",
            gamma=gamma_bar,
        )
    return {
        "rbar": rbar,
        "R_bar": rbar * np.eye(topo.n),
        "lambda_min": cert,
        "margin": margin,
    }


# ---------------------------------------------------------------------------
# per-node assembled systems (piecewise-constant segments)


def _merged_breaks(schedules):
    breaks = sorted({float(b) for s in schedules for b in s.breaks})
    return np.asarray(breaks)


def _break_half_indices(breaks, h, label):
    """Breakpoints as half-grid indices; they must land on grid points."""
    idx = np.round(breaks / (0.5 * h)).astype(np.int64)
    off = np.abs(breaks - idx * 0.5 * h)
    if np.any(off > 1e-9 * np.maximum(1.0, np.abs(breaks))):
        k = int(np.argmax(off))
        raise ParameterError(
            f"{label}: breakpoint {breaks[k]} does not lie on the design grid"
        )
    return idx


@dataclass
class NodeSystem:
    """Piecewise-constant coefficient segments of one node's design system."""

    node: int
    breaks: np.ndarray      # interior segment boundaries (times)
    A: np.ndarray           # (S, d, d) drift per segment
    BB: np.ndarray          # (S, d, d) input Gram per segment
    C: np.ndarray           # (S, r, d) stacked output map
    E: np.ndarray           # (S, r, r) output Gram, SPD
    CtEinv: np.ndarray      # (S, d, r) C' E^-1 per segment
    col_offsets: np.ndarray  # output column partition [0, p_i, p_i+p_ij1, ...]

    @property
    def dim(self):
        return self.A.shape[1]

    @property
    def out_dim(self):
        return self.C.shape[1]

    def half_segment_indices(self, grid: TimeGrid):
        bidx = _break_half_indices(self.breaks, grid.h, f"node {self.node}")
        j = np.arange(2 * grid.steps + 1, dtype=np.int64)
        return np.searchsorted(bidx, j, side="right").astype(np.int64)

    def grid_segment_indices(self, grid: TimeGrid):
        return self.half_segment_indices(grid)[::2]


def _stack_outputs(model, topo, i, t):
    """Stacked output map [C_i; W_ij1; ...] and output Gram
    blockdiag(D D', U_ij1, ...) at time t."""
    c_i = model.C[i].value(t)
    d_i = model.D[i].value(t)
    blocks_c = [c_i] + [e.W for e in topo.neighbors[i]]
    blocks_e = [d_i @ d_i.T] + [e.U() for e in topo.neighbors[i]]
    rows = sum(b.shape[0] for b in blocks_c)
    n = model.n
    c = np.zeros((rows, n))
    e_mat = np.zeros((rows, rows))
    r0 = 0
    for bc, be in zip(blocks_c, blocks_e):
        r1 = r0 + bc.shape[0]
        c[r0:r1] = bc
        e_mat[r0:r1, r0:r1] = be
        r0 = r1
    return c, e_mat


def _col_offsets(model, topo, i):
    widths = [model.p(i)] + [e.p for e in topo.neighbors[i]]
    return np.concatenate(([0], np.cumsum(widths))).astype(np.int64)


def assemble_detector_system(
    model: PlantModel, topo: Topology, shapers, i
) -> NodeSystem:
    """Extended design system of node i: plant error augmented with the
    attack-shaper state.

    Drift [[A, -F Upsilon], [0, Omega]], input Gram from [[B, F], [0, Gamma]],
    outputs [C_i; W_ij...] acting on the plant-error part only, output Gram
    blockdiag(D D', U_ij...). The output Gram must be SPD on every segment.
    """
    sh: AttackShaper = shapers[i]
    n = model.n
    nf = model.n_f(i)
    if sh.n_f != nf:
        raise DimensionError(
            f"node {i}: shaper dimension {sh.n_f} != attack channel width {nf}"
        )
    d = n + nf
    breaks = _merged_breaks([model.A, model.B, model.C[i], model.D[i]])
    starts = np.concatenate(([0.0], breaks))
    nseg = len(starts)

    a_seg = np.zeros((nseg, d, d))
    bb_seg = np.zeros((nseg, d, d))
    c_rows = _col_offsets(model, topo, i)[-1]
    c_seg = np.zeros((nseg, c_rows, d))
    e_seg = np.zeros((nseg, c_rows, c_rows))
    cte_seg = np.zeros((nseg, d, c_rows))
    f_i = model.F[i]
    for s, t in enumerate(starts):
        a_seg[s, :n, :n] = model.A.value(t)
        a_seg[s, :n, n:] = -f_i @ sh.Upsilon
        a_seg[s, n:, n:] = sh.Omega
        big_b = np.zeros((d, model.m + nf))
        big_b[:n, : model.m] = model.B.value(t)
        big_b[:n, model.m:] = f_i
        big_b[n:, model.m:] = sh.Gamma
        bb_seg[s] = big_b @ big_b.T
        c_stack, e_mat = _stack_outputs(model, topo, i, t)
        c_seg[s, :, :n] = c_stack
        e_seg[s] = e_mat
        einv_c = solve_spd(
            e_mat, c_seg[s], context=f"output Gram of node {i} at t={t}"
        )
        cte_seg[s] = einv_c.T
    return NodeSystem(
        node=i,
        breaks=breaks,
        A=a_seg,
        BB=bb_seg,
        C=c_seg,
        E=e_seg,
        CtEinv=cte_seg,
        col_offsets=_col_offsets(model, topo, i),
    )


def assemble_observer_system(
    model: PlantModel, topo: Topology, i, alt_weights=False
) -> NodeSystem:
    """Plant-observer design system of node i: drift A, input Gram
    B B' + F F', outputs [C_i; W_ij...]."""
    n = model.n
    breaks = _merged_breaks([model.A, model.B, model.C[i], model.D[i]])
    starts = np.concatenate(([0.0], breaks))
    nseg = len(starts)
    c_rows = _col_offsets(model, topo, i)[-1]

    a_seg = np.zeros((nseg, n, n))
    bb_seg = np.zeros((nseg, n, n))
    c_seg = np.zeros((nseg, c_rows, n))
    e_seg = np.zeros((nseg, c_rows, c_rows))
    cte_seg = np.zeros((nseg, n, c_rows))
    f_i = model.F[i]
    for s, t in enumerate(starts):
        a_seg[s] = model.A.value(t)
        b_t = model.B.value(t)
        bb_seg[s] = b_t @ b_t.T + f_i @ f_i.T
        c_stack, e_mat = _stack_outputs(model, topo, i, t)
        if alt_weights:
            d_i = model.D[i].value(t)
            blocks = [d_i @ d_i.T] + [e.U(alt=True) for e in topo.neighbors[i]]
            r0 = 0
            e_mat = np.zeros_like(e_mat)
            for b in blocks:
                r1 = r0 + b.shape[0]
                e_mat[r0:r1, r0:r1] = b
                r0 = r1
        c_seg[s] = c_stack
        e_seg[s] = e_mat
        einv_c = solve_spd(
            e_mat, c_stack, context=f"output Gram of node {i} at t={t}"
        )
        cte_seg[s] = einv_c.T
    return NodeSystem(
        node=i,
        breaks=breaks,
        A=a_seg,
        BB=bb_seg,
        C=c_seg,
        E=e_seg,
        CtEinv=cte_seg,
        col_offsets=_col_offsets(model, topo, i),
    )


# ---------------------------------------------------------------------------
# Riccati integration


@dataclass
class DetectorDesignInputs:
    """Everything node i needs for its detector Riccati: the assembled
    system, the attenuation level, and the weights R_i (plant block),
    R_check_i (attack block), X_i / X_check_i (initial-condition blocks)."""

    system: NodeSystem
    gamma: float
    R: np.ndarray
    R_check: np.ndarray
    X: np.ndarray
    X_check: np.ndarray

    def weight_block(self):
        n = self.R.shape[0]
        nf = self.R_check.shape[0]
        blk = np.zeros((n + nf, n + nf))
        blk[:n, :n] = self.R
        blk[n:, n:] = self.R_check
        return blk

    def initial_value(self):
        n = self.X.shape[0]
        nf = self.X_check.shape[0]
        y0 = np.zeros((n + nf, n + nf))
        y0[:n, :n] = spd_inverse(self.X, context="X")
        y0[n:, n:] = spd_inverse(self.X_check, context="X_check")
        return y0


@dataclass
class ObserverDesignInputs:
    system: NodeSystem
    gamma_bar: float
    R_bar: np.ndarray
    X_bar: np.ndarray

    def initial_value(self):
        return spd_inverse(self.X_bar, context="X_bar")


@dataclass
class RiccatiSolution:
    Y: np.ndarray        # (K+1, d, d)
    lam_min: np.ndarray  # (K+1,)
    lam_max: np.ndarray  # (K+1,)


def _integrate_riccati(system, q_seg, y0, grid, bound_cap_factor, gamma,
                       stage, node):
    hseg = system.half_segment_indices(grid)
    # cap scales with the initial value but never collapses for tiny Y(0)
    cap = bound_cap_factor * max(np.sqrt((y0**2).sum()), 1.0)
    traj, lam_min, lam_max, fail = kernels.riccati_rk4(
        np.ascontiguousarray(system.A),
        np.ascontiguousarray(q_seg),
        np.ascontiguousarray(system.BB),
        hseg,
        np.ascontiguousarray(y0),
        grid.h,
        cap,
    )
    if fail >= 0:
        t_fail = fail * grid.h
        lmin = lam_min[fail]
        lmax = lam_max[fail]
        raise InfeasibilityError(
            f"{stage} Riccati at node {node} lost a bounded positive definite "
            f"solution at t={t_fail:.6g} (lambda_min={lmin:.3e}, "
            f"lambda_max={lmax:.3e}, cap={cap:.3e}); attenuation level "
            f"{gamma} is infeasible on this horizon",
            t=t_fail,
            gamma=gamma,
            node=node,
            stage=stage,
        )
    return RiccatiSolution(Y=traj, lam_min=lam_min, lam_max=lam_max)


def detector_q_segments(inputs: DetectorDesignInputs):
    """Quadratic coefficient C' E^-1 C - gamma^-2 R per segment."""
    sysm = inputs.system
    rblk = inputs.weight_block()
    q = np.empty_like(sysm.A)
    for s in range(sysm.A.shape[0]):
        q[s] = sysm.CtEinv[s] @ sysm.C[s] - rblk / inputs.gamma**2
    return q


def observer_q_segments(inputs: ObserverDesignInputs):
    sysm = inputs.system
    q = np.empty_like(sysm.A)
    for s in range(sysm.A.shape[0]):
        q[s] = sysm.CtEinv[s] @ sysm.C[s] - inputs.R_bar / inputs.gamma_bar**2
    return q


def integrate_detector_riccati(
    inputs: DetectorDesignInputs, grid: TimeGrid,
    bound_cap_factor=1e6, y0=None,
) -> RiccatiSolution:
    """Forward RK4 integration of the detector Riccati equation.

    The iterate is symmetrized after every step; positivity and the bound
    cap are monitored at every grid point and a violation raises
    :class:`InfeasibilityError` carrying the offending time. ``y0``
    overrides the default initial value inv(X) (useful for testing; the
    positivity monitor then starts from the first step).
    """
    if y0 is None:
        y0 = inputs.initial_value()
    q = detector_q_segments(inputs)
    return _integrate_riccati(
        inputs.system, q, np.asarray(y0, dtype=float), grid,
        bound_cap_factor, inputs.gamma, "detector", inputs.system.node,
    )


def integrate_observer_riccati(
    inputs: ObserverDesignInputs, grid: TimeGrid,
    bound_cap_factor=1e6, y0=None,
) -> RiccatiSolution:
    """Forward RK4 integration of the observer Riccati equation."""
    if y0 is None:
        y0 = inputs.initial_value()
    q = observer_q_segments(inputs)
    return _integrate_riccati(
        inputs.system, q, np.asarray(y0, dtype=float), grid,
        bound_cap_factor, inputs.gamma_bar, "observer", inputs.system.node,
    )


# ---------------------------------------------------------------------------
# gain extraction


@dataclass
class GainStack:
    """Time-indexed gain matrix partitioned along output column blocks.

    ``stack[k]`` is the full gain at grid point k; columns split as
    [own measurement | neighbour 1 | neighbour 2 | ...].
    """

    stack: np.ndarray        # (K+1, rows, r)
    col_offsets: np.ndarray

    def block(self, slot):
        """Column block: slot 0 is the own-measurement gain, slot j >= 1 the
        gain on neighbour j's channel."""
        c0, c1 = self.col_offsets[slot], self.col_offsets[slot + 1]
        return self.stack[:, :, c0:c1]

    @property
    def n_slots(self):
        return len(self.col_offsets) - 1


def _gain_stack_from(Y, system, grid, rows=None):
    """Y(t) C'(t) E(t)^-1 evaluated on the grid, vectorized per segment."""
    gseg = system.grid_segment_indices(grid)
    npts = Y.shape[0]
    out = np.empty((npts, Y.shape[1], system.out_dim))
    for s in range(system.A.shape[0]):
        mask = gseg == s
        if not mask.any():
            continue
        out[mask] = Y[mask] @ system.CtEinv[s]
    if rows is not None:
        out = out[:, :rows, :]
    return out


@dataclass
class DetectorGains:
    """Joint detector gain partition: top rows act on the plant-error
    estimate (L_hat / K_hat), bottom rows on the attack-state estimate
    (L_check / K_check)."""

    stack: np.ndarray
    col_offsets: np.ndarray
    n: int

    def L_hat(self):
        return self.stack[:, : self.n, : self.col_offsets[1]]

    def K_hat(self, j):
        c0, c1 = self.col_offsets[j + 1], self.col_offsets[j + 2]
        return self.stack[:, : self.n, c0:c1]

    def L_check(self):
        return self.stack[:, self.n:, : self.col_offsets[1]]

    def K_check(self, j):
        c0, c1 = self.col_offsets[j + 1], self.col_offsets[j + 2]
        return self.stack[:, self.n:, c0:c1]


@dataclass
class ObserverGains:
    stack: np.ndarray
    col_offsets: np.ndarray

    def L(self):
        return self.stack[:, :, : self.col_offsets[1]]

    def K(self, j):
        c0, c1 = self.col_offsets[j + 1], self.col_offsets[j + 2]
        return self.stack[:, :, c0:c1]


def extract_detector_gains(Y_traj, system: NodeSystem, model, grid) -> DetectorGains:
    """Partition Y C' E^-1 into the four detector gain families."""
    stack = _gain_stack_from(Y_traj, system, grid)
    return DetectorGains(
        stack=stack, col_offsets=system.col_offsets, n=model.n
    )


def extract_observer_gains(Y_traj, system: NodeSystem, grid) -> ObserverGains:
    """Partition Y C' E^-1 into the observer gain families."""
    stack = _gain_stack_from(Y_traj, system, grid)
    return ObserverGains(stack=stack, col_offsets=system.col_offsets)


def compute_bar_gains(det: DetectorGains, obs: ObserverGains) -> ObserverGains:
    """Innovation gains of the detector: the joint gains minus the observer
    gains, pointwise on the grid. Stored exactly as the computed difference
    so the splitting identity holds bit for bit."""
    top = det.stack[:, : det.n, :]
    if top.shape != obs.stack.shape:
        raise DimensionError(
            f"gain stacks disagree: {top.shape} vs {obs.stack.shape}"
        )
    return ObserverGains(
        stack=top - obs.stack, col_offsets=det.col_offsets
    )


# ---------------------------------------------------------------------------
# full design


@dataclass
class NodeDesign:
    node: int
    det: DetectorGains
    obs: ObserverGains
    bar: ObserverGains
    Y_det: np.ndarray
    Y_obs: np.ndarray
    lam_det: np.ndarray   # (K+1, 2) [min, max]
    lam_obs: np.ndarray
    det_stationary: bool
    obs_stationary: bool
    det_drift: float
    obs_drift: float


@dataclass
class DesignArtifacts:
    """Everything the simulator and the verifier need from the design."""

    grid: TimeGrid
    gamma: float
    gamma_bar: float
    margin: float
    P: np.ndarray
    r: float
    rbar: float
    R_check: list
    X: list
    X_check: list
    X_bar: list
    det_cert: float
    obs_cert: float
    nodes: list
    shapers: list
    systems_det: list = field(default_factory=list)
    systems_obs: list = field(default_factory=list)

    def report_dict(self):
        rep = {
            "schema": 1,
            "gamma": self.gamma,
            "gamma_bar": self.gamma_bar,
            "margin": self.margin,
            "lmi": {
                "r": self.r,
                "rbar": self.rbar,
                "detector_lambda_min": self.det_cert,
                "observer_lambda_min": self.obs_cert,
            },
            "grid": {"h": self.grid.h, "steps": self.grid.steps, "T": self.grid.T},
            "nodes": [],
        }
        for nd in self.nodes:
            rep["nodes"].append({
                "node": nd.node + 1,
                "detector": {
                    "lambda_min": float(nd.lam_det[:, 0].min()),
                    "lambda_max": float(nd.lam_det[:, 1].max()),
                    "stationary": bool(nd.det_stationary),
                    "final_drift": nd.det_drift,
                },
                "observer": {
                    "lambda_min": float(nd.lam_obs[:, 0].min()),
                    "lambda_max": float(nd.lam_obs[:, 1].max()),
                    "stationary": bool(nd.obs_stationary),
                    "final_drift": nd.obs_drift,
                },
            })
        return rep


def _final_drift(system, q_seg, sol, grid):
    gseg = system.grid_segment_indices(grid)
    s = int(gseg[-1])
    y = sol.Y[-1]
    rhs = system.A[s] @ y + y @ system.A[s].T - y @ (q_seg[s] @ y) + system.BB[s]
    return float(np.sqrt((rhs**2).sum()))


def design_node(
    model, topo, shapers, i, grid, gamma, gamma_bar,
    R, R_check_i, R_bar, X_i, X_check_i, X_bar_i,
    bound_cap_factor=1e6, alt_weights=False,
):
    """Run the full per-node design. Consumes only node-local model data and
    the centrally distributed weights. Returns the node design plus the two
    assembled systems."""
    sys_det = assemble_detector_system(model, topo, shapers, i)
    sys_obs = assemble_observer_system(model, topo, i, alt_weights=alt_weights)
    det_in = DetectorDesignInputs(
        system=sys_det, gamma=gamma, R=R, R_check=R_check_i,
        X=X_i, X_check=X_check_i,
    )
    obs_in = ObserverDesignInputs(
        system=sys_obs, gamma_bar=gamma_bar, R_bar=R_bar, X_bar=X_bar_i,
    )
    det_sol = integrate_detector_riccati(det_in, grid, bound_cap_factor)
    obs_sol = integrate_observer_riccati(obs_in, grid, bound_cap_factor)

    det_gains = extract_detector_gains(det_sol.Y, sys_det, model, grid)
    obs_gains = extract_observer_gains(obs_sol.Y, sys_obs, grid)
    bar_gains = compute_bar_gains(det_gains, obs_gains)

    q_det = detector_q_segments(det_in)
    q_obs = observer_q_segments(obs_in)
    det_drift = _final_drift(sys_det, q_det, det_sol, grid)
    obs_drift = _final_drift(sys_obs, q_obs, obs_sol, grid)

    nd = NodeDesign(
        node=i,
        det=det_gains,
        obs=obs_gains,
        bar=bar_gains,
        Y_det=det_sol.Y,
        Y_obs=obs_sol.Y,
        lam_det=np.stack([det_sol.lam_min, det_sol.lam_max], axis=1),
        lam_obs=np.stack([obs_sol.lam_min, obs_sol.lam_max], axis=1),
        det_stationary=det_drift < 1e-6,
        obs_stationary=obs_drift < 1e-6,
        det_drift=det_drift,
        obs_drift=obs_drift,
    )
    return nd, sys_det, sys_obs


def design(
    model: PlantModel, topo: Topology, shapers, grid: TimeGrid,
    gamma, gamma_bar, P=None, margin=0.01,
    X=None, X_check=None, X_bar=None, bound_cap_factor=1e6,
) -> DesignArtifacts:
    """Full design: central LMI pre-pass, then the per-node Riccati pass."""
    N, n = topo.N, topo.n
    if model.N != N:
        raise DimensionError(
            f"model has {model.N} nodes but topology has {N}"
        )
    if P is None:
        P = np.eye(n * N)
    X = X or [np.eye(n) for _ in range(N)]
    X_check = X_check or [np.eye(model.n_f(i)) for i in range(N)]
    X_bar = X_bar or [np.eye(n) for _ in range(N)]

    interconn = build_interconnection(topo)
    det_lmi = solve_detector_lmi(
        topo, gamma, [shapers[i].Upsilon for i in range(N)],
        margin=margin, interconn=interconn,
    )
    alt = topo.has_alt_weights()
    obs_interconn = build_interconnection(topo, alt=True) if alt else interconn
    obs_lmi = solve_observer_lmi(
        topo, gamma_bar, P, margin=margin, interconn=obs_interconn
    )

    nodes, sys_dets, sys_obss = [], [], []
    for i in range(N):
        nd, sd, so = design_node(
            model, topo, shapers, i, grid, gamma, gamma_bar,
            det_lmi["R"], det_lmi["R_check"][i], obs_lmi["R_bar"],
            X[i], X_check[i], X_bar[i],
            bound_cap_factor=bound_cap_factor, alt_weights=alt,
        )
        nodes.append(nd)
        sys_dets.append(sd)
        sys_obss.append(so)

    return DesignArtifacts(
        grid=grid,
        gamma=gamma,
        gamma_bar=gamma_bar,
        margin=margin,
        P=P,
        r=det_lmi["r"],
        rbar=obs_lmi["rbar"],
        R_check=det_lmi["R_check"],
        X=X,
        X_check=X_check,
        X_bar=X_bar,
        det_cert=det_lmi["lambda_min"],
        obs_cert=obs_lmi["lambda_min"],
        nodes=nodes,
        shapers=list(shapers),
        systems_det=sys_dets,
        systems_obs=sys_obss,
    )


def find_min_gamma(
    model, topo, shapers, grid, stage="detector",
    gamma0=1.0, P=None, margin=0.01,
    X=None, X_check=None, X_bar=None, bound_cap_factor=1e6,
    bracket_steps=20, bisect_steps=20, other_gamma=None,
):
    """Smallest feasible attenuation level by factor-2 bracketing plus
    bisection. ``stage`` selects which Riccati family is probed; the other
    one is skipped. Returns the feasible upper end of the final bracket."""
    N = topo.N
    if P is None:
        P = np.eye(topo.n * N)
    X = X or [np.eye(topo.n) for _ in range(N)]
    X_check = X_check or [np.eye(model.n_f(i)) for i in range(N)]
    X_bar = X_bar or [np.eye(topo.n) for _ in range(N)]
    interconn = build_interconnection(topo)
    alt = topo.has_alt_weights()
    obs_interconn = build_interconnection(topo, alt=True) if alt else interconn
    sys_dets = [
        assemble_detector_system(model, topo, shapers, i) for i in range(N)
    ]
    sys_obss = [
        assemble_observer_system(model, topo, i, alt_weights=alt)
        for i in range(N)
    ]

    def feasible(g):
        try:
            if stage == "detector":
                lmi = solve_detector_lmi(
                    topo, g, [shapers[i].Upsilon for i in range(N)],
                    margin=margin, interconn=interconn,
                )
                for i in range(N):
                    integrate_detector_riccati(
                        DetectorDesignInputs(
                            system=sys_dets[i], gamma=g, R=lmi["R"],
                            R_check=lmi["R_check"][i], X=X[i],
                            X_check=X_check[i],
                        ),
                        grid, bound_cap_factor,
                    )
            else:
                lmi = solve_observer_lmi(
                    topo, g, P, margin=margin, interconn=obs_interconn
                )
                for i in range(N):
                    integrate_observer_riccati(
                        ObserverDesignInputs(
                            system=sys_obss[i], gamma_bar=g,
                            R_bar=lmi["R_bar"], X_bar=X_bar[i],
                        ),
                        grid, bound_cap_factor,
                    )
        except InfeasibilityError:
            return False
        return True

    g = float(gamma0)
    if feasible(g):
        hi, lo = g, g / 2.0
        for _ in range(bracket_steps):
            if not feasible(lo):
                break
            hi, lo = lo, lo / 2.0
        else:
            return hi  # feasible all the way down the bracket
    else:
        lo, hi = g, 2.0 * g
        for _ in range(bracket_steps):
            if feasible(hi):
                break
            lo, hi = hi, 2.0 * hi
        else:
            raise InfeasibilityError(
                f"no feasible attenuation level found up to {hi}",
                gamma=hi, stage=stage,
            )
    for _ in range(bisect_steps):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi
