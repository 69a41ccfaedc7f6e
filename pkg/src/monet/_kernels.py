"""Compiled inner loops for GloVe / MONET training.

The topology parameters are stored raw (``U``, ``V``). When projection is on,
the working rows are ``U_i - lam * Q_i @ AU`` where ``AU = Q^T U`` is kept in
sync incrementally as sparse updates land, so a step never touches all n rows
unless the metadata span itself moves.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def smoothing(c, x_max, alpha):
    if c < x_max:
        return (c / x_max) ** alpha
    return 1.0


@njit(cache=True)
def view_row(R, A, Q, i, lam, project, out):
    d = R.shape[1]
    for k in range(d):
        out[k] = R[i, k]
    if project:
        for r in range(Q.shape[1]):
            q = lam * Q[i, r]
            if q != 0.0:
                for k in range(d):
                    out[k] -= q * A[r, k]


@njit(cache=True)
def accumulate(bi, bj, bc, U, V, a, b, T1, T2, M, Q, AU, AV, lam, project, use_meta,
               x_max, alpha, slot_u, slot_v, rows_u, rows_v, gU, gV, ga, gb, gT1, gT2):
    """Gradients of the summed batch loss at the working point.

    Row gradients land in compact slots; ``rows_u[t]`` is the node owning slot
    ``t``. ``slot_u``/``slot_v`` must be all -1 on entry and are left filled
    for :func:`apply_adagrad` (or :func:`release_slots`) to clear.
    """
    d = U.shape[1]
    dz = T1.shape[1]
    m = M.shape[1]
    u = np.empty(d)
    v = np.empty(d)
    x = np.zeros(dz)
    y = np.zeros(dz)
    gT1[:, :] = 0.0
    gT2[:, :] = 0.0
    nu = 0
    nv = 0
    loss = 0.0
    for p in range(bi.shape[0]):
        i = bi[p]
        j = bj[p]
        c = bc[p]
        view_row(U, AU, Q, i, lam, project, u)
        view_row(V, AV, Q, j, lam, project, v)
        e = a[i] + b[j] - np.log(c)
        for k in range(d):
            e += u[k] * v[k]
        if use_meta:
            for r in range(dz):
                xs = 0.0
                ys = 0.0
                for q in range(m):
                    xs += M[i, q] * T1[q, r]
                    ys += M[j, q] * T2[q, r]
                x[r] = xs
                y[r] = ys
            for r in range(dz):
                e += x[r] * y[r]
        w = smoothing(c, x_max, alpha)
        loss += w * e * e
        s = 2.0 * w * e

        su = slot_u[i]
        if su < 0:
            su = nu
            slot_u[i] = su
            rows_u[su] = i
            nu += 1
            for k in range(d):
                gU[su, k] = 0.0
            ga[su] = 0.0
        for k in range(d):
            gU[su, k] += s * v[k]
        ga[su] += s

        sv = slot_v[j]
        if sv < 0:
            sv = nv
            slot_v[j] = sv
            rows_v[sv] = j
            nv += 1
            for k in range(d):
                gV[sv, k] = 0.0
            gb[sv] = 0.0
        for k in range(d):
            gV[sv, k] += s * u[k]
        gb[sv] += s

        if use_meta:
            for q in range(m):
                mi = M[i, q]
                mj = M[j, q]
                if mi != 0.0:
                    for r in range(dz):
                        gT1[q, r] += s * mi * y[r]
                if mj != 0.0:
                    for r in range(dz):
                        gT2[q, r] += s * mj * x[r]
    return nu, nv, loss


@njit(cache=True)
def release_slots(nu, nv, slot_u, slot_v, rows_u, rows_v):
    for t in range(nu):
        slot_u[rows_u[t]] = -1
    for t in range(nv):
        slot_v[rows_v[t]] = -1


@njit(cache=True)
def _adagrad_rows(lr, P, H, bias, hbias, Q, A, project, n_rows, slot, rows, G, gbias):
    d = P.shape[1]
    rz = Q.shape[1]
    step = np.empty(d)
    for t in range(n_rows):
        i = rows[t]
        for k in range(d):
            g = G[t, k]
            h = H[i, k] + g * g
            H[i, k] = h
            step[k] = lr * g / np.sqrt(h)
        for k in range(d):
            P[i, k] -= step[k]
        if project:
            for r in range(rz):
                q = Q[i, r]
                for k in range(d):
                    A[r, k] -= q * step[k]
        g = gbias[t]
        hbias[i] += g * g
        bias[i] -= lr * g / np.sqrt(hbias[i])
        slot[i] = -1


@njit(cache=True)
def _adagrad_dense(lr, P, H, G):
    for q in range(P.shape[0]):
        for r in range(P.shape[1]):
            g = G[q, r]
            H[q, r] += g * g
            P[q, r] -= lr * g / np.sqrt(H[q, r])


@njit(cache=True)
def apply_adagrad(lr, U, V, a, b, T1, T2, hU, hV, ha, hb, hT1, hT2, Q, AU, AV, project, use_meta,
                  nu, nv, slot_u, slot_v, rows_u, rows_v, gU, gV, ga, gb, gT1, gT2):
    """AdaGrad on every parameter group; raw U/V move by the unprojected update
    and ``AU``/``AV`` absorb its component along ``Q``."""
    _adagrad_rows(lr, U, hU, a, ha, Q, AU, project, nu, slot_u, rows_u, gU, ga)
    _adagrad_rows(lr, V, hV, b, hb, Q, AV, project, nv, slot_v, rows_v, gV, gb)
    if use_meta:
        _adagrad_dense(lr, T1, hT1, gT1)
        _adagrad_dense(lr, T2, hT2, gT2)


@njit(cache=True)
def refresh_basis(T1, T2, QM, RM, B, Q, AU, AV, U, V, rank_tol, span_tol, cur_rank):
    """Recompute the basis of span(M (T1 + T2)) = QM * span(RM (T1 + T2)).

    ``B`` holds the basis in ``QM`` coordinates. ``Q``, ``AU`` and ``AV`` are only
    rebuilt when the span moves by more than ``span_tol``. Returns the new rank.
    """
    dz = B.shape[1]
    rm = RM.shape[0]
    rank = 0
    Bn = np.zeros((rm, dz))
    if rm > 0 and dz > 0:
        S = RM @ (T1 + T2)
        Us, s, _ = np.linalg.svd(S, full_matrices=False)
        if s[0] > 0.0:
            for r in range(s.shape[0]):
                if s[r] > rank_tol * s[0]:
                    rank += 1
        for r in range(rank):
            for q in range(rm):
                Bn[q, r] = Us[q, r]
    same = rank == cur_rank
    if same and rank > 0:
        D = Bn - B @ (B.T @ Bn)
        if np.max(np.abs(D)) > span_tol:
            same = False
    if not same:
        B[:, :] = Bn
        Q[:, :] = QM @ Bn
        AU[:, :] = Q.T @ U
        AV[:, :] = Q.T @ V
    return rank


@njit(cache=True)
def run_epoch(I, J, C, order, batch_size, lr, lam, project, use_meta, x_max, alpha,
              U, V, a, b, T1, T2, hU, hV, ha, hb, hT1, hT2, M, QM, RM, B, Q, AU, AV,
              rank_tol, span_tol, cur_rank, slot_u, slot_v, rows_u, rows_v,
              gU, gV, ga, gb, gT1, gT2, batch_losses):
    """One pass over ``order`` in mini-batches.

    Returns ``(rank, failed_batch)``; ``failed_batch`` is -1 unless a batch loss
    came out non-finite, in which case training stops before applying it.
    """
    total = order.shape[0]
    n_batches = (total + batch_size - 1) // batch_size
    bi = np.empty(batch_size, dtype=np.int64)
    bj = np.empty(batch_size, dtype=np.int64)
    bc = np.empty(batch_size)
    for s in range(n_batches):
        lo = s * batch_size
        size = min(batch_size, total - lo)
        for p in range(size):
            idx = order[lo + p]
            bi[p] = I[idx]
            bj[p] = J[idx]
            bc[p] = C[idx]
        nu, nv, loss = accumulate(bi[:size], bj[:size], bc[:size], U, V, a, b, T1, T2, M, Q,
                                  AU, AV, lam, project, use_meta, x_max, alpha, slot_u, slot_v,
                                  rows_u, rows_v, gU, gV, ga, gb, gT1, gT2)
        batch_losses[s] = loss
        if not np.isfinite(loss):
            release_slots(nu, nv, slot_u, slot_v, rows_u, rows_v)
            return cur_rank, s
        apply_adagrad(lr, U, V, a, b, T1, T2, hU, hV, ha, hb, hT1, hT2, Q, AU, AV, project,
                      use_meta, nu, nv, slot_u, slot_v, rows_u, rows_v, gU, gV, ga, gb, gT1, gT2)
        if project:
            cur_rank = refresh_basis(T1, T2, QM, RM, B, Q, AU, AV, U, V, rank_tol, span_tol,
                                     cur_rank)
    return cur_rank, -1
