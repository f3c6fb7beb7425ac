"""Active-set NNLS kernels.

Both kernels follow Lawson and Hanson's active-set method. They are written
in the subset of numpy that numba understands, so the same source runs
either jitted or as plain numpy (see :mod:`apsest._jit`).

Status codes: 0 converged, 1 iteration limit reached.
"""

import numpy as np

from ._jit import njit


@njit(cache=True)
def _columns(b_mat, idx, count):
    out = np.empty((b_mat.shape[0], count))
    for k in range(count):
        out[:, k] = b_mat[:, idx[k]]
    return out


@njit(cache=True)
def _principal(q_mat, idx, count):
    out = np.empty((count, count))
    for i in range(count):
        for k in range(count):
            out[i, k] = q_mat[idx[i], idx[k]]
    return out


@njit(cache=True)
def _passive_index(passive):
    n = passive.shape[0]
    idx = np.empty(n, dtype=np.int64)
    count = 0
    for j in range(n):
        if passive[j]:
            idx[count] = j
            count += 1
    return idx, count


@njit(cache=True)
def _pick_entering(w, passive, blocked, tol):
    """Index of the largest dual entry above ``tol`` among free variables, -1 if none.

    ``np.argmax``-style scan, so ties go to the smallest index.
    """
    best = -1
    best_val = tol
    for j in range(w.shape[0]):
        if not passive[j] and not blocked[j] and w[j] > best_val:
            best = j
            best_val = w[j]
    return best


@njit(cache=True)
def _step_to_boundary(x, s, passive):
    """Minimum-ratio step from ``x`` towards ``s``; returns (alpha, leaving index)."""
    alpha = 2.0
    leave = -1
    for i in range(x.shape[0]):
        if passive[i] and s[i] <= 0.0:
            denom = x[i] - s[i]
            ratio = x[i] / denom if denom > 0.0 else 0.0
            if ratio < alpha:
                alpha = ratio
                leave = i
    return alpha, leave


@njit(cache=True)
def lawson_hanson(b_mat, b_vec, tol, max_iter):
    """Minimize ``||B x - b||_2`` over ``x >= 0``.

    Passive-set subproblems are solved with ``lstsq`` on the passive
    columns. Returns ``(x, passive, iterations, status)``.
    """
    n = b_mat.shape[1]
    x = np.zeros(n)
    passive = np.zeros(n, dtype=np.bool_)
    blocked = np.zeros(n, dtype=np.bool_)
    iterations = 0
    w = b_mat.T @ (b_vec - b_mat @ x)
    while True:
        j = _pick_entering(w, passive, blocked, tol)
        if j < 0:
            return x, passive, iterations, 0
        passive[j] = True
        entering = j
        while True:
            if iterations >= max_iter:
                return x, passive, iterations, 1
            iterations += 1
            idx, count = _passive_index(passive)
            sub = _columns(b_mat, idx, count)
            sol = np.linalg.lstsq(sub, b_vec, -1.0)[0]
            s = np.zeros(n)
            for k in range(count):
                s[idx[k]] = sol[k]
            if entering >= 0 and s[entering] <= 0.0:
                # entering column cannot improve the fit numerically
                passive[entering] = False
                blocked[entering] = True
                break
            entering = -1
            alpha, leave = _step_to_boundary(x, s, passive)
            if leave < 0:
                x = s
                blocked[:] = False
                break
            x = x + alpha * (s - x)
            x[leave] = 0.0
            passive[leave] = False
            for i in range(n):
                if passive[i] and x[i] <= 0.0:
                    x[i] = 0.0
                    passive[i] = False
        w = b_mat.T @ (b_vec - b_mat @ x)


@njit(cache=True)
def _solve_passive(q_mat, c_vec, passive):
    n = q_mat.shape[0]
    idx, count = _passive_index(passive)
    s = np.zeros(n)
    if count == 0:
        return s
    sub = _principal(q_mat, idx, count)
    rhs = np.empty(count)
    for k in range(count):
        rhs[k] = c_vec[idx[k]]
    chol = np.linalg.cholesky(sub)
    # forward then back substitution with the Cholesky factor
    z = np.empty(count)
    for i in range(count):
        acc = rhs[i]
        for k in range(i):
            acc -= chol[i, k] * z[k]
        z[i] = acc / chol[i, i]
    sol = np.empty(count)
    for i in range(count - 1, -1, -1):
        acc = z[i]
        for k in range(i + 1, count):
            acc -= chol[k, i] * sol[k]
        sol[i] = acc / chol[i, i]
    for k in range(count):
        s[idx[k]] = sol[k]
    return s


@njit(cache=True)
def active_set_gram(q_mat, c_vec, passive_init, tol, max_iter):
    """Minimize ``y^T Q y - 2 c^T y`` over ``y >= 0`` for positive definite ``Q``.

    This is the Lawson-Hanson iteration for ``||B y - b||`` written in terms
    of ``Q = B^T B`` and ``c = B^T b``. ``passive_init`` warm-starts the
    passive set; indices whose restricted solution is not positive are
    dropped until a feasible starting point remains.
    """
    n = q_mat.shape[0]
    passive = passive_init.copy()
    blocked = np.zeros(n, dtype=np.bool_)
    iterations = 0
    x = np.zeros(n)
    while True:
        any_passive = False
        for i in range(n):
            if passive[i]:
                any_passive = True
                break
        if not any_passive:
            break
        iterations += 1
        s = _solve_passive(q_mat, c_vec, passive)
        ok = True
        for i in range(n):
            if passive[i] and s[i] <= 0.0:
                passive[i] = False
                ok = False
        if ok:
            x = s
            break
        if iterations >= max_iter:
            return np.zeros(n), np.zeros(n, dtype=np.bool_), iterations, 1
    w = c_vec - q_mat @ x
    while True:
        j = _pick_entering(w, passive, blocked, tol)
        if j < 0:
            return x, passive, iterations, 0
        passive[j] = True
        entering = j
        while True:
            if iterations >= max_iter:
                return x, passive, iterations, 1
            iterations += 1
            s = _solve_passive(q_mat, c_vec, passive)
            if entering >= 0 and s[entering] <= 0.0:
                passive[entering] = False
                blocked[entering] = True
                break
            entering = -1
            alpha, leave = _step_to_boundary(x, s, passive)
            if leave < 0:
                x = s
                blocked[:] = False
                break
            x = x + alpha * (s - x)
            x[leave] = 0.0
            passive[leave] = False
            for i in range(n):
                if passive[i] and x[i] <= 0.0:
                    x[i] = 0.0
                    passive[i] = False
        w = c_vec - q_mat @ x


@njit(cache=True)
def pocs_sweep(x, a_mat, target, pinv, relaxation, iterations, tol, res_out, dist_out, min_out):
    """Run up to ``iterations`` relaxed POCS steps in place.

    Each step is ``x <- x + lam (P_K(P_V(x)) - x)`` with
    ``P_V(x) = x - pinv (A x - r)``. Per-step residual ``||Ax - r||``,
    distance to ``V`` and minimum entry are written into the output arrays.
    Returns the number of steps taken.
    """
    r_norm = np.sqrt(np.sum(target * target))
    if r_norm == 0.0:
        r_norm = 1.0
    for k in range(iterations):
        resid = a_mat @ x - target
        corr = pinv @ resid
        proj = x - corr
        for i in range(proj.shape[0]):
            if proj[i] < 0.0:
                proj[i] = 0.0
        x += relaxation * (proj - x)
        resid = a_mat @ x - target
        res_out[k] = np.sqrt(np.sum(resid * resid))
        corr = pinv @ resid
        dist_out[k] = np.sqrt(np.sum(corr * corr))
        min_out[k] = np.min(x)
        if res_out[k] <= tol * r_norm and min_out[k] >= -tol:
            return k + 1
    return iterations


@njit(cache=True)
def haugazeau_q(m_mat, x, y, z, rel_tol):
    """Haugazeau's three-point map in the ``M`` geometry.

    Returns ``(point, status)``; status 1 means the two halfspaces do not
    intersect (``delta == 0`` with ``chi < 0``).
    """
    xy = x - y
    yz = y - z
    m_yz = m_mat @ yz
    chi = np.dot(xy, m_yz)
    mu = np.dot(xy, m_mat @ xy)
    nu = np.dot(yz, m_yz)
    delta = mu * nu - chi * chi
    if abs(delta) <= rel_tol * mu * nu:
        delta = 0.0
    if delta <= 0.0:
        if chi >= 0.0:
            return z.copy(), 0
        return z.copy(), 1
    if chi * nu >= delta:
        return x + (1.0 + chi / nu) * (z - y), 0
    return y + (nu / delta) * (chi * xy + mu * (z - y)), 0


@njit(cache=True)
def haugazeau_run(m_mat, chol_m, q_mat, atr, weight, rho_hat, rho, passive, steps, tol,
                  nnls_tol_rel, nnls_max_iter, q_rel_tol, gaps_out, prox_out):
    """Run up to ``steps`` Haugazeau iterations from ``rho`` (updated in place).

    Each step evaluates ``p = prox(rho)`` by the warm-started active-set
    solver, records the fixed-point gap ``||rho - p||_M`` and stops if it
    is at most ``tol``; otherwise ``rho <- Q(rho_hat, rho, p)``. The prox
    output of the last evaluated step is left in ``prox_out``.

    Returns ``(steps_done, converged, status)``; status 1 is an NNLS
    iteration limit and 2 a Haugazeau breakdown.
    """
    n = rho.shape[0]
    for k in range(steps):
        c = atr + weight * (m_mat @ rho)
        ctol = 0.0
        for i in range(n):
            if abs(c[i]) > ctol:
                ctol = abs(c[i])
        ctol = nnls_tol_rel * ctol
        if ctol == 0.0:
            ctol = 1e-300
        p, new_passive, _, status = active_set_gram(q_mat, c, passive, ctol, nnls_max_iter)
        if status != 0:
            return k, False, 1
        passive[:] = new_passive
        prox_out[:] = p
        diff = chol_m.T @ (rho - p)
        gap = np.sqrt(np.dot(diff, diff))
        gaps_out[k] = gap
        if gap <= tol:
            return k + 1, True, 0
        nxt, qstat = haugazeau_q(m_mat, rho_hat, rho, p, q_rel_tol)
        if qstat != 0:
            return k + 1, False, 2
        rho[:] = nxt
    return steps, False, 0
