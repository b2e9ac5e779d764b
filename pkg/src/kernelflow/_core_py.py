"""Pure-numpy implementation of the iterative inner loops.

Mirrors the compiled module function for function; used when the extension
is unavailable or KERNELFLOW_PURE=1 is set.
"""

import numpy as np

KGD, KSGD, KCD, KEGD = 0, 1, 2, 3
MAX_STEPS, CONVERGED, DIVERGED = 0, 1, 2
L1, LINF = 0, 1


def _direction(method, r, mix):
    if method == KGD:
        return r.copy()
    if method == KSGD:
        return np.sign(r)
    d = np.zeros_like(r)
    if method == KCD:
        m = int(np.argmax(np.abs(r)))
        d[m] = np.sign(r[m])
        return d
    a = np.abs(r)
    active = a >= mix * a.max()
    d[active] = np.sign(r[active])
    return d


def _norms(r):
    a = np.abs(r)
    return a.sum(), np.sqrt(r @ r), a.max() if a.size else 0.0


def new_state(y):
    """Solver state at alpha = 0: rows alpha, residual, velocity, K velocity, direction, K direction."""
    st = np.zeros((6, np.asarray(y).shape[0]))
    st[1] = y
    return st


def descent_run(K, y, method, eta, gamma, mix, max_steps, record_steps,
                stop_tol, diverge_limit, resync, state=None, k0=0):
    """Advance a descent method from `state` (alpha = 0 if None) at step k0 up to step max_steps.

    `state` is updated in place. Returns
    (snap_alpha, snap_norms, snap_steps, alpha, norms, steps_done, status).
    Snapshots are taken after every step listed in `record_steps` that is reached.
    """
    K = np.ascontiguousarray(K, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    record_steps = np.asarray(record_steps, dtype=np.int64)
    n = y.shape[0]
    if state is None:
        state = new_state(y)
    alpha, r, u, Ku = state[0], state[1], state[2], state[3]
    snaps_a, snaps_n, snaps_k = [], [], []
    idx = 0
    status = MAX_STEPS
    k = k0
    while k < max_steps:
        if np.abs(r).max() < stop_tol:
            status = CONVERGED
            break
        d = _direction(method, r, mix)
        state[4] = d
        u *= gamma
        u += d
        Ku *= gamma
        Ku += K @ d
        alpha += eta * u
        r -= eta * Ku
        k += 1
        if resync > 0 and k % resync == 0:
            r[:] = y - K @ alpha
            Ku[:] = K @ u
        l2 = np.sqrt(r @ r)
        if l2 > diverge_limit or not np.isfinite(l2):
            status = DIVERGED
            break
        while idx < record_steps.shape[0] and record_steps[idx] <= k:
            if record_steps[idx] == k:
                snaps_a.append(alpha.copy())
                snaps_n.append(_norms(r))
                snaps_k.append(k)
            idx += 1
    snap_alpha = np.array(snaps_a).reshape(len(snaps_a), n)
    snap_norms = np.array(snaps_n, dtype=float).reshape(len(snaps_n), 3)
    state[5] = K @ state[4]
    return (snap_alpha, snap_norms, np.array(snaps_k, dtype=np.int64),
            alpha.copy(), np.array(_norms(r)), k, status)


def soft_threshold(v, tau):
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def l1_ball_threshold(v, radius):
    """Threshold tau* with ||soft_threshold(v, tau*)||_1 == radius (0 if already inside)."""
    a = np.abs(np.asarray(v, dtype=float))
    if a.sum() <= radius:
        return 0.0
    u = np.sort(a)[::-1]
    css = np.cumsum(u) - radius
    ks = np.arange(1, u.shape[0] + 1)
    ok = u - css / ks > 0
    # the leading entry always qualifies; rounding can hide that for tiny radii
    ok[0] = True
    rho = np.nonzero(ok)[0][-1]
    return max(css[rho] / (rho + 1.0), 0.0)


def project_l1_ball(v, radius):
    v = np.asarray(v, dtype=float)
    if np.abs(v).sum() <= radius:
        return v.copy()
    return soft_threshold(v, l1_ball_threshold(v, radius))


def prox_linf(v, tau):
    v = np.asarray(v, dtype=float)
    if tau <= 0:
        return v.copy()
    return v - project_l1_ball(v, tau)


def prox_run(K, y, penalty, lam, eta, alpha0, max_iter, tol):
    """Proximal gradient on 0.5 a'Ka - y'a + lam * pen(a).

    Returns (alpha, iterations, converged).
    """
    K = np.ascontiguousarray(K, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    alpha = np.array(alpha0, dtype=float)
    tau = eta * lam
    prox = soft_threshold if penalty == L1 else prox_linf
    for it in range(1, max_iter + 1):
        v = alpha - eta * (K @ alpha - y)
        new = prox(v, tau)
        change = np.abs(new - alpha).max()
        alpha = new
        if change <= tol * eta:
            return alpha, it, True
    return alpha, max_iter, False
