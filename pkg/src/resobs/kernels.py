"""Hot numeric kernels.

Every function here is written in nopython-compatible style and exported
twice: ``_name`` is the plain-Python/numpy implementation and ``name`` is the
numba-compiled alias (or the same function when numba is disabled, see
:mod:`resobs._accel`). Matrices are dense C-contiguous float64; problem sizes
stay small (state dimensions of a few tens), which is why cyclic Jacobi and
unblocked Cholesky are entirely adequate.
"""

import math

import numpy as np

from ._accel import maybe_njit

#: sweeps cap for the Jacobi eigensolver; quadratic convergence makes
#: anything beyond ~15 sweeps pathological for the sizes used here
_MAX_SWEEPS = 64


def _jacobi_eigh(a):
    """Cyclic-sweep Jacobi eigendecomposition of a symmetric matrix.

    Operates on a copy of ``a``. Returns ``(w, v, sweeps)`` with eigenvalues
    ``w`` ascending and orthonormal eigenvectors in the columns of ``v``.
    Sweeps stop once the off-diagonal Frobenius norm drops below
    ``1e-12 * max(1, ||a||_F)``.
    """
    n = a.shape[0]
    d = a.copy()
    v = np.eye(n)
    fro = 0.0
    for i in range(n):
        for j in range(n):
            fro += d[i, j] * d[i, j]
    tol = 1e-12 * max(1.0, math.sqrt(fro))

    sweeps = 0
    for _ in range(_MAX_SWEEPS):
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                off += d[i, j] * d[i, j]
        if math.sqrt(2.0 * off) <= tol:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = d[p, q]
                if abs(apq) == 0.0:
                    continue
                app = d[p, p]
                aqq = d[q, q]
                tau = (aqq - app) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                d[p, p] = app - t * apq
                d[q, q] = aqq + t * apq
                d[p, q] = 0.0
                d[q, p] = 0.0
                for k in range(n):
                    if k != p and k != q:
                        akp = d[k, p]
                        akq = d[k, q]
                        d[k, p] = c * akp - s * akq
                        d[p, k] = d[k, p]
                        d[k, q] = s * akp + c * akq
                        d[q, k] = d[k, q]
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq

    w = np.empty(n)
    for i in range(n):
        w[i] = d[i, i]
    order = np.argsort(w)
    w_sorted = np.empty(n)
    v_sorted = np.empty((n, n))
    for i in range(n):
        w_sorted[i] = w[order[i]]
        for k in range(n):
            v_sorted[k, i] = v[k, order[i]]
    return w_sorted, v_sorted, sweeps


def _eig_range(a):
    """Extreme eigenvalues (lmin, lmax) of a symmetric matrix, values only."""
    n = a.shape[0]
    d = a.copy()
    fro = 0.0
    for i in range(n):
        for j in range(n):
            fro += d[i, j] * d[i, j]
    tol = 1e-12 * max(1.0, math.sqrt(fro))

    for _ in range(_MAX_SWEEPS):
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                off += d[i, j] * d[i, j]
        if math.sqrt(2.0 * off) <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = d[p, q]
                if abs(apq) == 0.0:
                    continue
                app = d[p, p]
                aqq = d[q, q]
                tau = (aqq - app) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                d[p, p] = app - t * apq
                d[q, q] = aqq + t * apq
                d[p, q] = 0.0
                d[q, p] = 0.0
                for k in range(n):
                    if k != p and k != q:
                        akp = d[k, p]
                        akq = d[k, q]
                        d[k, p] = c * akp - s * akq
                        d[p, k] = d[k, p]
                        d[k, q] = s * akp + c * akq
                        d[q, k] = d[k, q]

    lmin = d[0, 0]
    lmax = d[0, 0]
    for i in range(1, n):
        if d[i, i] < lmin:
            lmin = d[i, i]
        if d[i, i] > lmax:
            lmax = d[i, i]
    return lmin, lmax


def _chol_lower(a):
    """Unblocked Cholesky. Returns ``(L, fail)``; fail is the pivot index
    where positivity failed, or -1 on success."""
    n = a.shape[0]
    low = np.zeros((n, n))
    for j in range(n):
        diag = a[j, j]
        for k in range(j):
            diag -= low[j, k] * low[j, k]
        if diag <= 0.0 or not np.isfinite(diag):
            return low, j
        ljj = math.sqrt(diag)
        low[j, j] = ljj
        for i in range(j + 1, n):
            acc = a[i, j]
            for k in range(j):
                acc -= low[i, k] * low[j, k]
            low[i, j] = acc / ljj
    return low, -1


def _chol_solve(low, b):
    """Solve ``(L L') x = b`` for a 2-D right-hand side ``b``."""
    n = low.shape[0]
    m = b.shape[1]
    x = np.empty((n, m))
    for col in range(m):
        # forward: L y = b
        for i in range(n):
            acc = b[i, col]
            for k in range(i):
                acc -= low[i, k] * x[k, col]
            x[i, col] = acc / low[i, i]
        # backward: L' x = y
        for i in range(n - 1, -1, -1):
            acc = x[i, col]
            for k in range(i + 1, n):
                acc -= low[k, i] * x[k, col]
            x[i, col] = acc / low[i, i]
    return x


def _riccati_rk4(a_seg, q_seg, bb_seg, hseg, y0, h, cap):
    """Integrate a matrix Riccati differential equation with classical RK4.

    dY/dt = A Y + Y A' - Y Q Y + BB, with piecewise-constant coefficient
    segments indexed per half-grid point by ``hseg`` (length 2K+1, covering
    the stage times t, t+h/2, t+h of each step). The iterate is symmetrized
    after every step. Positivity (lmin > 0, checked from step 1 onward) and
    boundedness (lmax < cap) are monitored at every grid point.

    Returns ``(traj, lam_min, lam_max, fail)`` where ``fail`` is the first
    offending grid-point index or -1.
    """
    d = y0.shape[0]
    nsteps = (hseg.shape[0] - 1) // 2
    traj = np.zeros((nsteps + 1, d, d))
    lam_min = np.zeros(nsteps + 1)
    lam_max = np.zeros(nsteps + 1)

    y = 0.5 * (y0 + y0.T)
    traj[0] = y
    lmin, lmax = _eig_range_jit(y)
    lam_min[0] = lmin
    lam_max[0] = lmax
    if not np.isfinite(y.sum()) or lmax >= cap:
        return traj, lam_min, lam_max, 0

    for k in range(nsteps):
        s0 = hseg[2 * k]
        sm = hseg[2 * k + 1]
        s1 = hseg[2 * k + 2]

        a0 = a_seg[s0]
        k1 = a0 @ y + y @ a0.T - y @ (q_seg[s0] @ y) + bb_seg[s0]
        y2 = y + (0.5 * h) * k1
        am = a_seg[sm]
        k2 = am @ y2 + y2 @ am.T - y2 @ (q_seg[sm] @ y2) + bb_seg[sm]
        y3 = y + (0.5 * h) * k2
        k3 = am @ y3 + y3 @ am.T - y3 @ (q_seg[sm] @ y3) + bb_seg[sm]
        y4 = y + h * k3
        a1 = a_seg[s1]
        k4 = a1 @ y4 + y4 @ a1.T - y4 @ (q_seg[s1] @ y4) + bb_seg[s1]

        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        y = 0.5 * (y + y.T)
        traj[k + 1] = y

        if not np.isfinite(y.sum()):
            return traj, lam_min, lam_max, k + 1
        lmin, lmax = _eig_range_jit(y)
        lam_min[k + 1] = lmin
        lam_max[k + 1] = lmax
        if lmin <= 0.0 or lmax >= cap:
            return traj, lam_min, lam_max, k + 1

    return traj, lam_min, lam_max, -1


def _lti_rk4_chunk(m_steps, g_steps, u_stages, s0, h):
    """RK4 over a chunk of a linear time-varying system.

    State update for step k uses the frozen matrices ``m_steps[k]``,
    ``g_steps[k]`` (constant across the step) and the three stage input
    samples ``u_stages[k, 0..2]`` (start, midpoint, end). Returns the state
    trajectory after each step and the local index of the first step whose
    result is non-finite (-1 if none).
    """
    nsteps = m_steps.shape[0]
    dim = s0.shape[0]
    traj = np.zeros((nsteps, dim))
    s = s0.copy()
    for k in range(nsteps):
        mk = m_steps[k]
        gk = g_steps[k]
        d0 = u_stages[k, 0]
        dm = u_stages[k, 1]
        de = u_stages[k, 2]
        k1 = mk @ s + gk @ d0
        k2 = mk @ (s + (0.5 * h) * k1) + gk @ dm
        k3 = mk @ (s + (0.5 * h) * k2) + gk @ dm
        k4 = mk @ (s + h * k3) + gk @ de
        s = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        traj[k] = s
        if not np.isfinite(s.sum()):
            return traj, k
    return traj, -1


# Compiled aliases. _riccati_rk4 calls the compiled eigenvalue kernel through
# the module-global name, so keep the definition order.
_eig_range_jit = maybe_njit(_eig_range)

jacobi_eigh = maybe_njit(_jacobi_eigh)
eig_range = _eig_range_jit
chol_lower = maybe_njit(_chol_lower)
chol_solve = maybe_njit(_chol_solve)
riccati_rk4 = maybe_njit(_riccati_rk4)
lti_rk4_chunk = maybe_njit(_lti_rk4_chunk)


def warm_up():
    """Trigger compilation of all kernels on tiny inputs (no-op when numba
    is disabled). Call once before timing anything."""
    eye2 = np.eye(2)
    jacobi_eigh(eye2)
    eig_range(eye2)
    low, _ = chol_lower(eye2)
    chol_solve(low, eye2.copy())
    seg = np.zeros((1, 2, 2))
    hseg = np.zeros(3, dtype=np.int64)
    riccati_rk4(seg, seg, seg, hseg, eye2, 1e-3, 1e9)
    m = np.zeros((2, 2, 2))
    g = np.zeros((2, 2, 1))
    u = np.zeros((2, 3, 1))
    lti_rk4_chunk(m, g, u, np.zeros(2), 1e-3)
