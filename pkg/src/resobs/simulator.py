"""Deterministic closed-loop simulation of the observer network and the
directly integrated detector-error reference.

Both simulations integrate one coupled linear time-varying system with a
single global RK4 sweep. Per integration step the system matrices are frozen
(gains are held at the value of the design cell the step starts in, and the
piecewise-constant plant segments change only at grid points), so each step
integrates a constant-coefficient system exactly to RK4 order. Exogenous
inputs are sampled at the three stage times of each step, taking the left
limit at the step's right endpoint so that jumps sitting on grid points
never straddle a step.

The closed-loop state is [x, xhat_i..., ehat_i..., epshat_i..., eps_i...]
where eps_i is the true attack-shaper state, carried passively (nothing in
the loop depends on it) to make the attack-tracking mismatch reconstructable
from the trace. The reference system integrates the detector-error states
[z_i..., delta_i..., eps_i...] directly; equality of z_i with e_i - ehat_i
(and delta_i with eps_i - epshat_i) up to integration error is the key
correctness property of the pair.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import kernels
from .designer import DesignArtifacts
from .errors import DimensionError, DivergenceError, ParameterError
from .network import Topology
from .plant import DisturbanceRealization, PlantModel

_CHUNK = 2048


# ---------------------------------------------------------------------------
# state and input layouts


class NetLayout:
    """Offsets of the closed-loop state vector and the shared input vector."""

    def __init__(self, model: PlantModel, topo: Topology):
        n, N = model.n, model.N
        self.n, self.N = n, N
        self.nf = [model.n_f(i) for i in range(N)]
        self.x = slice(0, n)
        off = n
        self.xhat = []
        for _ in range(N):
            self.xhat.append(slice(off, off + n))
            off += n
        self.ehat = []
        for _ in range(N):
            self.ehat.append(slice(off, off + n))
            off += n
        self.epshat = []
        for i in range(N):
            self.epshat.append(slice(off, off + self.nf[i]))
            off += self.nf[i]
        self.eps = []
        for i in range(N):
            self.eps.append(slice(off, off + self.nf[i]))
            off += self.nf[i]
        self.dim = off

        # shared input vector: [w, v_i..., v_ij..., f_i...]
        self.w_in = slice(0, model.m)
        off = model.m
        self.v_in = []
        for i in range(N):
            mv = model.m_v(i)
            self.v_in.append(slice(off, off + mv))
            off += mv
        self.vij_in = []
        for i in range(N):
            slots = []
            for e in topo.neighbors[i]:
                slots.append(slice(off, off + e.m_c))
                off += e.m_c
            self.vij_in.append(slots)
        self.f_in = []
        for i in range(N):
            self.f_in.append(slice(off, off + self.nf[i]))
            off += self.nf[i]
        self.in_dim = off

    def node_of_state(self, idx):
        """(block name, node) owning a state offset, for divergence reports."""
        if idx < self.n:
            return "x", None
        for name in ("xhat", "ehat", "epshat", "eps"):
            for i, sl in enumerate(getattr(self, name)):
                if sl.start <= idx < sl.stop:
                    return name, i
        return "?", None


class OracleLayout:
    """Offsets of the detector-error reference state [z_i, delta_i, eps_i]."""

    def __init__(self, model: PlantModel, topo: Topology):
        n, N = model.n, model.N
        self.n, self.N = n, N
        self.nf = [model.n_f(i) for i in range(N)]
        off = 0
        self.z = []
        for _ in range(N):
            self.z.append(slice(off, off + n))
            off += n
        self.delta = []
        for i in range(N):
            self.delta.append(slice(off, off + self.nf[i]))
            off += self.nf[i]
        self.eps = []
        for i in range(N):
            self.eps.append(slice(off, off + self.nf[i]))
            off += self.nf[i]
        self.dim = off


# ---------------------------------------------------------------------------
# gain-product precomputation (vectorized over the design grid)


class _NodeProducts:
    """Per-design-cell products of gains with the plant/channel matrices.

    All arrays have leading dimension = number of design cells; cell k uses
    the gain value at design grid point k (zero-order hold).
    """

    def __init__(self, model, topo, artifacts, i, ncells):
        nd = artifacts.nodes[i]
        n = model.n
        sh = artifacts.shapers[i]
        self.F = model.F[i]
        self.FU = self.F @ sh.Upsilon
        self.Omega = sh.Omega
        self.Gamma = sh.Gamma
        self.OmGU = sh.Omega + sh.Gamma @ sh.Upsilon
        self.Upsilon = sh.Upsilon

        # C_i, D_i per design cell (piecewise constant)
        cseg = model.C[i]
        dseg = model.D[i]
        tcells = np.arange(ncells) * artifacts.grid.h
        cidx = np.searchsorted(cseg.breaks, tcells + 1e-9 * artifacts.grid.h,
                               side="right")
        didx = np.searchsorted(dseg.breaks, tcells + 1e-9 * artifacts.grid.h,
                               side="right")

        Lr = nd.obs.L()[:ncells]
        Lh = nd.det.L_hat()[:ncells]
        Lb = nd.bar.L()[:ncells]
        Lc = nd.det.L_check()[:ncells]

        def times_msched(gain, sched, idx):
            out = np.empty((ncells, gain.shape[1], sched.shape[1]))
            for s in range(sched.values.shape[0]):
                mask = idx == s
                if mask.any():
                    out[mask] = gain[mask] @ sched.values[s]
            return out

        self.LrC = times_msched(Lr, cseg, cidx)
        self.LhC = times_msched(Lh, cseg, cidx)
        self.LbC = times_msched(Lb, cseg, cidx)
        self.LcC = times_msched(Lc, cseg, cidx)
        self.LrD = times_msched(Lr, dseg, didx)
        self.LhD = times_msched(Lh, dseg, didx)
        self.LbD = times_msched(Lb, dseg, didx)
        self.LcD = times_msched(Lc, dseg, didx)

        self.KrW, self.KhW, self.KbW, self.KcW = [], [], [], []
        self.KrH, self.KhH, self.KbH, self.KcH = [], [], [], []
        for j, e in enumerate(topo.neighbors[i]):
            Kr = nd.obs.K(j)[:ncells]
            Kh = nd.det.K_hat(j)[:ncells]
            Kb = nd.bar.K(j)[:ncells]
            Kc = nd.det.K_check(j)[:ncells]
            self.KrW.append(Kr @ e.W)
            self.KhW.append(Kh @ e.W)
            self.KbW.append(Kb @ e.W)
            self.KcW.append(Kc @ e.W)
            self.KrH.append(Kr @ e.H)
            self.KhH.append(Kh @ e.H)
            self.KbH.append(Kb @ e.H)
            self.KcH.append(Kc @ e.H)

        zn = np.zeros((ncells, n, n))
        self.sumKrW = sum(self.KrW, zn.copy())
        self.sumKhW = sum(self.KhW, zn.copy())
        self.sumKbW = sum(self.KbW, zn.copy())
        self.sumKcW = sum(self.KcW, np.zeros((ncells, sh.n_f, n)))


class _Precomputed:
    def __init__(self, model, topo, artifacts, ncells):
        grid = artifacts.grid
        tcells = np.arange(ncells) * grid.h
        nudge = 1e-9 * grid.h
        self.A_cells = np.empty((ncells, model.n, model.n))
        self.B_cells = np.empty((ncells, model.n, model.m))
        aidx = np.searchsorted(model.A.breaks, tcells + nudge, side="right")
        bidx = np.searchsorted(model.B.breaks, tcells + nudge, side="right")
        for s in range(model.A.values.shape[0]):
            self.A_cells[aidx == s] = model.A.values[s]
        for s in range(model.B.values.shape[0]):
            self.B_cells[bidx == s] = model.B.values[s]
        self.nodes = [
            _NodeProducts(model, topo, artifacts, i, ncells)
            for i in range(model.N)
        ]


def _check_coverage(artifacts: DesignArtifacts, T, h):
    hd = artifacts.grid.h
    ratio = hd / h
    refine = int(round(ratio))
    if refine < 1 or abs(ratio - refine) > 1e-9:
        raise ParameterError(
            f"simulation step {h} must refine the design step {hd} by an "
            f"integer factor"
        )
    steps = int(round(T / h))
    if abs(steps * h - T) > 1e-9 * max(1.0, abs(T)):
        raise ParameterError(
            f"horizon {T} is not an integer multiple of the step {h}"
        )
    if steps * h > artifacts.grid.T + 1e-9:
        raise ParameterError(
            f"design artifacts cover [0, {artifacts.grid.T}] but horizon "
            f"{T} was requested"
        )
    return steps, refine


def _assemble_closed_loop(model, topo, artifacts, pre, lay, cells,
                          feedback=True):
    """Closed-loop system matrix M and input matrix G for the design cells
    in ``cells`` (one entry per simulation step)."""
    nc = len(cells)
    M = np.zeros((nc, lay.dim, lay.dim))
    G = np.zeros((nc, lay.dim, lay.in_dim))
    A = pre.A_cells[cells]
    M[:, lay.x, lay.x] = A
    G[:, lay.x, lay.w_in] = pre.B_cells[cells]
    for i in range(model.N):
        np_i = pre.nodes[i]
        LrC = np_i.LrC[cells]
        LbC = np_i.LbC[cells]
        LcC = np_i.LcC[cells]
        sKr = np_i.sumKrW[cells]
        sKb = np_i.sumKbW[cells]
        sKc = np_i.sumKcW[cells]

        # plant observer row
        M[:, lay.xhat[i], lay.x] = LrC
        M[:, lay.xhat[i], lay.xhat[i]] = A - LrC - sKr
        if feedback:
            M[:, lay.xhat[i], lay.epshat[i]] = -np_i.FU
        G[:, lay.xhat[i], lay.v_in[i]] = np_i.LrD[cells]
        G[:, lay.xhat[i], lay.f_in[i]] = np_i.F

        # detector plant-error row
        M[:, lay.ehat[i], lay.x] = LbC
        M[:, lay.ehat[i], lay.xhat[i]] = -LbC - sKb
        M[:, lay.ehat[i], lay.ehat[i]] = A - LrC - sKr - LbC - sKb
        G[:, lay.ehat[i], lay.v_in[i]] = np_i.LbD[cells]

        # detector attack-state row
        M[:, lay.epshat[i], lay.x] = LcC
        M[:, lay.epshat[i], lay.xhat[i]] = -LcC - sKc
        M[:, lay.epshat[i], lay.ehat[i]] = -LcC - sKc
        M[:, lay.epshat[i], lay.epshat[i]] = np_i.Omega
        G[:, lay.epshat[i], lay.v_in[i]] = np_i.LcD[cells]

        # true shaper row (passive)
        M[:, lay.eps[i], lay.eps[i]] = np_i.OmGU
        G[:, lay.eps[i], lay.f_in[i]] = -np_i.Gamma

        for j, e in enumerate(topo.neighbors[i]):
            src = e.src
            KrW = np_i.KrW[j][cells]
            KbW = np_i.KbW[j][cells]
            KcW = np_i.KcW[j][cells]
            M[:, lay.xhat[i], lay.xhat[src]] += KrW
            M[:, lay.ehat[i], lay.xhat[src]] += KbW
            M[:, lay.ehat[i], lay.ehat[src]] += KrW + KbW
            M[:, lay.epshat[i], lay.xhat[src]] += KcW
            M[:, lay.epshat[i], lay.ehat[src]] += KcW
            G[:, lay.xhat[i], lay.vij_in[i][j]] = np_i.KrH[j][cells]
            G[:, lay.ehat[i], lay.vij_in[i][j]] = np_i.KbH[j][cells]
            G[:, lay.epshat[i], lay.vij_in[i][j]] = np_i.KcH[j][cells]
    return M, G


def _assemble_oracle(model, topo, artifacts, pre, lay_in, olay, cells):
    nc = len(cells)
    M = np.zeros((nc, olay.dim, olay.dim))
    G = np.zeros((nc, olay.dim, lay_in.in_dim))
    A = pre.A_cells[cells]
    for i in range(model.N):
        np_i = pre.nodes[i]
        LhC = np_i.LhC[cells]
        LcC = np_i.LcC[cells]
        sKh = np_i.sumKhW[cells]
        sKc = np_i.sumKcW[cells]

        M[:, olay.z[i], olay.z[i]] = A - LhC - sKh
        M[:, olay.z[i], olay.delta[i]] = -np_i.FU
        M[:, olay.z[i], olay.eps[i]] = np_i.FU
        G[:, olay.z[i], lay_in.w_in] = pre.B_cells[cells]
        G[:, olay.z[i], lay_in.v_in[i]] = -np_i.LhD[cells]
        G[:, olay.z[i], lay_in.f_in[i]] = -np_i.F

        M[:, olay.delta[i], olay.z[i]] = -LcC - sKc
        M[:, olay.delta[i], olay.delta[i]] = np_i.Omega
        M[:, olay.delta[i], olay.eps[i]] = np_i.Gamma @ np_i.Upsilon
        G[:, olay.delta[i], lay_in.v_in[i]] = -np_i.LcD[cells]
        G[:, olay.delta[i], lay_in.f_in[i]] = -np_i.Gamma

        M[:, olay.eps[i], olay.eps[i]] = np_i.OmGU
        G[:, olay.eps[i], lay_in.f_in[i]] = -np_i.Gamma

        for j, e in enumerate(topo.neighbors[i]):
            src = e.src
            M[:, olay.z[i], olay.z[src]] += np_i.KhW[j][cells]
            M[:, olay.delta[i], olay.z[src]] += np_i.KcW[j][cells]
            G[:, olay.z[i], lay_in.vij_in[i][j]] = -np_i.KhH[j][cells]
            G[:, olay.delta[i], lay_in.vij_in[i][j]] = -np_i.KcH[j][cells]
    return M, G


# ---------------------------------------------------------------------------
# input sampling


def _sample_inputs_stages(model, topo, lay, dist, f_samplers, steps, h):
    """Input samples at the three RK4 stage times of every step.

    The end-of-step sample takes the left limit so that input jumps sitting
    on grid points never fall inside a step.
    """
    ts = np.arange(steps) * h
    nudge = 1e-7 * h
    t_sets = (ts + nudge, ts + 0.5 * h, ts + h - nudge)
    u = np.zeros((steps, 3, lay.in_dim))
    for s, tarr in enumerate(t_sets):
        u[:, s, lay.w_in] = dist.w.sample(tarr)
        for i in range(model.N):
            u[:, s, lay.v_in[i]] = dist.v[i].sample(tarr)
            for j in range(len(topo.neighbors[i])):
                u[:, s, lay.vij_in[i][j]] = dist.v_edge[i][j].sample(tarr)
            u[:, s, lay.f_in[i]] = f_samplers[i](tarr)
    return u


def _sample_inputs_grid(model, topo, lay, dist, f_samplers, steps, h):
    """Right-continuous input samples on the output grid, for the trace."""
    tg = np.arange(steps + 1) * h + 1e-7 * h
    w = dist.w.sample(tg)
    v = [dist.v[i].sample(tg) for i in range(model.N)]
    v_edge = [
        [dist.v_edge[i][j].sample(tg) for j in range(len(topo.neighbors[i]))]
        for i in range(model.N)
    ]
    f = [f_samplers[i](tg) for i in range(model.N)]
    return w, v, v_edge, f


# ---------------------------------------------------------------------------
# traces


@dataclass
class SimTrace:
    """Closed-loop trajectory on a uniform grid plus the sampled inputs."""

    layout: NetLayout
    t: np.ndarray
    S: np.ndarray
    w: np.ndarray
    v: list
    v_edge: list
    f: list
    shapers: list
    F: list
    xi: np.ndarray

    @property
    def h(self):
        return float(self.t[1] - self.t[0])

    def x(self):
        return self.S[:, self.layout.x]

    def xhat(self, i):
        return self.S[:, self.layout.xhat[i]]

    def e(self, i):
        return self.S[:, self.layout.x] - self.S[:, self.layout.xhat[i]]

    def ehat(self, i):
        return self.S[:, self.layout.ehat[i]]

    def epshat(self, i):
        return self.S[:, self.layout.epshat[i]]

    def eps(self, i):
        return self.S[:, self.layout.eps[i]]

    def phi(self, i):
        return self.epshat(i) @ self.shapers[i].Upsilon.T

    def fhat(self, i):
        """Output of the true tracking shaper."""
        return self.eps(i) @ self.shapers[i].Upsilon.T

    def u(self, i):
        return -(self.phi(i) @ self.F[i].T)

    def nu(self, i):
        """Tracking-loop mismatch fhat_i - f_i."""
        return self.fhat(i) - self.f[i]

    def e_stacked(self):
        return np.hstack([self.e(i) for i in range(self.layout.N)])

    def to_csv(self, path):
        """One row per grid point; columns t, x[k], then per node i (1-based)
        xhat{i}[k], e{i}[k], phi{i}[k], f{i}[k], u{i}[k]."""
        lay = self.layout
        cols = ["t"]
        blocks = [self.t[:, None]]
        cols += [f"x[{k}]" for k in range(lay.n)]
        blocks.append(self.x())
        for name, getter, width in (
            ("xhat", self.xhat, lambda i: lay.n),
            ("e", self.e, lambda i: lay.n),
            ("phi", self.phi, lambda i: lay.nf[i]),
            ("f", lambda i: self.f[i], lambda i: lay.nf[i]),
            ("u", self.u, lambda i: lay.n),
        ):
            for i in range(lay.N):
                cols += [f"{name}{i + 1}[{k}]" for k in range(width(i))]
                blocks.append(np.asarray(getter(i)))
        data = np.hstack(blocks)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for row in data:
                writer.writerow([repr(float(val)) for val in row])


@dataclass
class OracleTrace:
    """Directly integrated detector-error trajectories."""

    layout: OracleLayout
    t: np.ndarray
    Z: np.ndarray
    topo: object

    @property
    def h(self):
        return float(self.t[1] - self.t[0])

    def z(self, i):
        return self.Z[:, self.layout.z[i]]

    def delta(self, i):
        return self.Z[:, self.layout.delta[i]]

    def eps(self, i):
        return self.Z[:, self.layout.eps[i]]

    def eta(self, i, j):
        """Interconnection signal -W_ij z_j of in-edge j of node i."""
        e = self.topo.neighbors[i][j]
        return -(self.z(e.src) @ e.W.T)


# ---------------------------------------------------------------------------
# drivers


def _closed_loop_traj(model, topo, artifacts, dist, f_samplers, steps,
                      refine, xi, feedback=True):
    lay = NetLayout(model, topo)
    ncells = artifacts.grid.steps
    pre = _Precomputed(model, topo, artifacts, ncells)
    h = artifacts.grid.h / refine
    u = _sample_inputs_stages(model, topo, lay, dist, f_samplers, steps, h)

    s0 = np.zeros(lay.dim)
    s0[lay.x] = model.x0
    for i in range(model.N):
        s0[lay.xhat[i]] = xi[i]

    def builder(k0, k1):
        cells = np.arange(k0, k1) // refine
        m_chunk, g_chunk = _assemble_closed_loop(
            model, topo, artifacts, pre, lay, cells, feedback=feedback
        )
        return m_chunk, g_chunk, u[k0:k1]

    def fail_info(state, t):
        bad = np.flatnonzero(~np.isfinite(state))
        block, node = lay.node_of_state(int(bad[0])) if bad.size else ("?", None)
        where = f"node {node + 1} ({block})" if node is not None else block
        return (
            f"closed-loop state diverged at t={t:.6g} in {where}",
            t,
            node,
        )

    traj = np.empty((steps + 1, lay.dim))
    traj[0] = s0
    s = s0.copy()
    for k0 in range(0, steps, _CHUNK):
        k1 = min(k0 + _CHUNK, steps)
        m_chunk, g_chunk, u_chunk = builder(k0, k1)
        # overflow is caught by the per-step finiteness check, no warning
        with np.errstate(over="ignore", invalid="ignore"):
            part, fail = kernels.lti_rk4_chunk(m_chunk, g_chunk, u_chunk,
                                               s, h)
        traj[k0 + 1: k1 + 1] = part
        if fail >= 0:
            msg, t_bad, node = fail_info(part[fail], (k0 + fail + 1) * h)
            raise DivergenceError(msg, t=t_bad, node=node)
        s = traj[k1].copy()
    return lay, traj


def simulate(
    model: PlantModel, topo: Topology, artifacts: DesignArtifacts,
    dist: DisturbanceRealization, attacks, T, h,
    xi=None, feedback=True,
) -> SimTrace:
    """Closed-loop simulation over [0, T] with step h.

    ``h`` must refine the design grid step by an integer factor and the
    design must cover the horizon. ``xi`` holds the per-node initial
    estimates (defaults to zeros). ``feedback=False`` forces the attack
    cancelling control to zero while leaving the detectors running, for
    comparison runs. Deterministic: identical inputs give bit-identical
    traces.
    """
    from .attack import attack_input_for_node

    steps, refine = _check_coverage(artifacts, T, h)
    if xi is None:
        xi = np.zeros((model.N, model.n))
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (model.N, model.n):
        raise DimensionError(
            f"xi: expected shape {(model.N, model.n)}, got {xi.shape}"
        )
    f_samplers = [
        attack_input_for_node(attacks, i, model.n_f(i)) for i in range(model.N)
    ]
    lay, traj = _closed_loop_traj(
        model, topo, artifacts, dist, f_samplers, steps, refine, xi,
        feedback=feedback,
    )
    w, v, v_edge, f = _sample_inputs_grid(
        model, topo, lay, dist, f_samplers, steps, h
    )
    return SimTrace(
        layout=lay,
        t=np.arange(steps + 1) * h,
        S=traj,
        w=w,
        v=v,
        v_edge=v_edge,
        f=f,
        shapers=artifacts.shapers,
        F=[model.F[i] for i in range(model.N)],
        xi=xi,
    )


def simulate_error_system_oracle(
    model: PlantModel, topo: Topology, artifacts: DesignArtifacts,
    dist: DisturbanceRealization, attacks, T, h,
    xi=None, refine=2,
) -> OracleTrace:
    """Directly integrate the detector-error dynamics driven by the true
    tracking-loop mismatch and the disturbances.

    Integrates internally at step h / refine (default 2) and reports on the
    h grid, so the result doubles as a fine-step reference for the closed
    loop: the deviation of the closed-loop differences from this trajectory
    is dominated by the closed-loop integration error and shrinks by ~16x
    when h is halved.
    """
    from .attack import attack_input_for_node

    steps, base_refine = _check_coverage(artifacts, T, h)
    if refine < 1:
        raise ParameterError(f"oracle refine must be >= 1, got {refine}")
    if xi is None:
        xi = np.zeros((model.N, model.n))
    xi = np.asarray(xi, dtype=float)

    olay = OracleLayout(model, topo)
    lay = NetLayout(model, topo)
    fine_steps = steps * refine
    fine_h = h / refine
    total_refine = base_refine * refine

    ncells = artifacts.grid.steps
    pre = _Precomputed(model, topo, artifacts, ncells)
    f_samplers = [
        attack_input_for_node(attacks, i, model.n_f(i)) for i in range(model.N)
    ]
    u = _sample_inputs_stages(
        model, topo, lay, dist, f_samplers, fine_steps, fine_h
    )

    s0 = np.zeros(olay.dim)
    for i in range(model.N):
        s0[olay.z[i]] = model.x0 - xi[i]

    traj = np.empty((fine_steps + 1, olay.dim))
    traj[0] = s0
    s = s0.copy()
    for k0 in range(0, fine_steps, _CHUNK):
        k1 = min(k0 + _CHUNK, fine_steps)
        cells = np.arange(k0, k1) // total_refine
        m_chunk, g_chunk = _assemble_oracle(
            model, topo, artifacts, pre, lay, olay, cells
        )
        with np.errstate(over="ignore", invalid="ignore"):
            part, fail = kernels.lti_rk4_chunk(
                m_chunk, g_chunk, u[k0:k1], s, fine_h
            )
        traj[k0 + 1: k1 + 1] = part
        if fail >= 0:
            t_bad = (k0 + fail + 1) * fine_h
            raise DivergenceError(
                f"detector-error reference diverged at t={t_bad:.6g}",
                t=t_bad,
            )
        s = traj[k1].copy()

    return OracleTrace(
        layout=olay,
        t=np.arange(steps + 1) * h,
        Z=traj[::refine].copy(),
        topo=topo,
    )


# ---------------------------------------------------------------------------
# single-step interface


@dataclass
class SimState:
    """Coupled network state at one instant."""

    t: float
    S: np.ndarray
    layout: NetLayout


def initial_state(model, topo, xi=None) -> SimState:
    lay = NetLayout(model, topo)
    if xi is None:
        xi = np.zeros((model.N, model.n))
    s0 = np.zeros(lay.dim)
    s0[lay.x] = model.x0
    for i in range(model.N):
        s0[lay.xhat[i]] = np.asarray(xi[i], dtype=float)
    return SimState(t=0.0, S=s0, layout=lay)


def step_closed_loop(
    state: SimState, model, topo, artifacts, dist, attacks, h,
    feedback=True,
) -> SimState:
    """Advance the coupled network by one RK4 step of size h."""
    from .attack import attack_input_for_node

    lay = state.layout
    hd = artifacts.grid.h
    cell = int(np.floor(state.t / hd + 1e-9))
    cell = min(max(cell, 0), artifacts.grid.steps - 1)
    ncells = artifacts.grid.steps
    pre = _Precomputed(model, topo, artifacts, ncells)
    m_one, g_one = _assemble_closed_loop(
        model, topo, artifacts, pre, lay, np.array([cell]), feedback=feedback
    )
    f_samplers = [
        attack_input_for_node(attacks, i, model.n_f(i)) for i in range(model.N)
    ]
    nudge = 1e-7 * h
    u = np.zeros((1, 3, lay.in_dim))
    for s, tt in enumerate((state.t + nudge, state.t + 0.5 * h,
                            state.t + h - nudge)):
        tarr = np.asarray([tt])
        u[0, s, lay.w_in] = dist.w.sample(tarr)[0]
        for i in range(model.N):
            u[0, s, lay.v_in[i]] = dist.v[i].sample(tarr)[0]
            for j in range(len(topo.neighbors[i])):
                u[0, s, lay.vij_in[i][j]] = dist.v_edge[i][j].sample(tarr)[0]
            u[0, s, lay.f_in[i]] = f_samplers[i](tarr)[0]
    part, fail = kernels.lti_rk4_chunk(m_one, g_one, u, state.S, h)
    if fail >= 0:
        raise DivergenceError(
            f"closed-loop state diverged at t={state.t + h:.6g}",
            t=state.t + h,
        )
    return SimState(t=state.t + h, S=part[0], layout=lay)
