"""Jitted numerical kernels: P1 assembly, SGS-preconditioned CG, chain scan.

Everything here is a plain function of arrays so results are deterministic and
independent of thread count: parallel loops only ever write disjoint rows.
"""

import numpy as np
from numba import njit, prange

# Relative-residual history length is capped by maxit; kernels return the
# iteration count actually used, with hist[0] holding the initial residual.


@njit(cache=True)
def sgs_tridiag(diag, upper, r, t, z):
    """Apply the symmetric Gauss-Seidel preconditioner for a tridiagonal matrix.

    Solves (D+L) t = r, then z = (D+U)^{-1} D t, for A = D + L + U symmetric
    (upper[i] = A[i, i+1]). Writes into t and z; returns z.
    """
    n = diag.shape[0]
    t[0] = r[0] / diag[0]
    for i in range(1, n):
        t[i] = (r[i] - upper[i - 1] * t[i - 1]) / diag[i]
    z[n - 1] = t[n - 1]
    for i in range(n - 2, -1, -1):
        z[i] = t[i] - upper[i] * z[i + 1] / diag[i]
    return z


@njit(cache=True)
def pcg_tridiag(diag, upper, b, tol, maxit, x, hist):
    """SGS-preconditioned CG for a symmetric tridiagonal system.

    Returns the iteration count; -1 if the cap was hit before the relative
    residual dropped below tol. x is overwritten with the solution and hist
    with the residual-norm history (hist[k] = ||r_k||, hist[0] = ||b||).
    """
    n = diag.shape[0]
    bnorm = 0.0
    for i in range(n):
        x[i] = 0.0
        bnorm += b[i] * b[i]
    bnorm = np.sqrt(bnorm)
    hist[0] = bnorm
    if bnorm == 0.0:
        return 0
    r = b.copy()
    t = np.empty(n)
    z = np.empty(n)
    sgs_tridiag(diag, upper, r, t, z)
    p = z.copy()
    rz = 0.0
    for i in range(n):
        rz += r[i] * z[i]
    q = np.empty(n)
    for it in range(1, maxit + 1):
        # q = A p for tridiagonal A
        for i in range(n):
            v = diag[i] * p[i]
            if i > 0:
                v += upper[i - 1] * p[i - 1]
            if i < n - 1:
                v += upper[i] * p[i + 1]
            q[i] = v
        pq = 0.0
        for i in range(n):
            pq += p[i] * q[i]
        alpha = rz / pq
        rnorm = 0.0
        for i in range(n):
            x[i] += alpha * p[i]
            r[i] -= alpha * q[i]
            rnorm += r[i] * r[i]
        rnorm = np.sqrt(rnorm)
        if it < hist.shape[0]:
            hist[it] = rnorm
        if rnorm <= tol * bnorm:
            return it
        sgs_tridiag(diag, upper, r, t, z)
        rz_new = 0.0
        for i in range(n):
            rz_new += r[i] * z[i]
        beta = rz_new / rz
        for i in range(n):
            p[i] = z[i] + beta * p[i]
        rz = rz_new
    return -1


@njit(cache=True)
def sgs_csr(indptr, indices, data, diag_pos, r, t, z):
    """Symmetric Gauss-Seidel application for a CSR matrix with stored diagonal."""
    n = indptr.shape[0] - 1
    for i in range(n):
        s = r[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j < i:
                s -= data[k] * t[j]
        t[i] = s / data[diag_pos[i]]
    for i in range(n - 1, -1, -1):
        d = data[diag_pos[i]]
        s = d * t[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j > i:
                s -= data[k] * z[j]
        z[i] = s / d
    return z


@njit(cache=True)
def pcg_csr(indptr, indices, data, diag_pos, b, tol, maxit, x, hist):
    """SGS-preconditioned CG for a symmetric CSR system. Same contract as pcg_tridiag."""
    n = indptr.shape[0] - 1
    bnorm = 0.0
    for i in range(n):
        x[i] = 0.0
        bnorm += b[i] * b[i]
    bnorm = np.sqrt(bnorm)
    hist[0] = bnorm
    if bnorm == 0.0:
        return 0
    r = b.copy()
    t = np.empty(n)
    z = np.empty(n)
    sgs_csr(indptr, indices, data, diag_pos, r, t, z)
    p = z.copy()
    rz = 0.0
    for i in range(n):
        rz += r[i] * z[i]
    q = np.empty(n)
    for it in range(1, maxit + 1):
        for i in range(n):
            s = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                s += data[k] * p[indices[k]]
            q[i] = s
        pq = 0.0
        for i in range(n):
            pq += p[i] * q[i]
        alpha = rz / pq
        rnorm = 0.0
        for i in range(n):
            x[i] += alpha * p[i]
            r[i] -= alpha * q[i]
            rnorm += r[i] * r[i]
        rnorm = np.sqrt(rnorm)
        if it < hist.shape[0]:
            hist[it] = rnorm
        if rnorm <= tol * bnorm:
            return it
        sgs_csr(indptr, indices, data, diag_pos, r, t, z)
        rz_new = 0.0
        for i in range(n):
            rz_new += r[i] * z[i]
        beta = rz_new / rz
        for i in range(n):
            p[i] = z[i] + beta * p[i]
        rz = rz_new
    return -1


@njit(cache=True)
def assemble_tridiag(kq, h, diag, upper):
    """Assemble the interior P1 stiffness bands from per-element coefficients.

    kq[e] is the coefficient value on element e (n_dof+1 elements of width h).
    """
    n = diag.shape[0]
    for i in range(n):
        diag[i] = (kq[i] + kq[i + 1]) / h
    for i in range(n - 1):
        upper[i] = -kq[i + 1] / h
    return diag


@njit(cache=True)
def assemble_csr_data(kq, gl, pos, data):
    """Accumulate per-element contributions kq[e]*gl[e,a,b] into CSR data.

    pos[e, 3a+b] is the CSR data index of the (a,b) local pair, or -1 when the
    pair touches a boundary node.
    """
    data[:] = 0.0
    n_e = kq.shape[0]
    for e in range(n_e):
        c = kq[e]
        for ab in range(9):
            p = pos[e, ab]
            if p >= 0:
                data[p] += c * gl[e, ab]
    return data


@njit(cache=True, parallel=True)
def batch_forward_1d(kbar_q, psi_q, coords, h, rep, b, tol, maxit, out, iters):
    """Solve the 1D forward problem for a batch of parameter vectors.

    psi_q has one row per active mode, evaluated at element anchors. rep is the
    (k+1, n_dof) functional matrix (observations then QoI). out receives one
    (k+1) row per batch entry. iters[m] = CG iterations, -2 on lost positivity,
    -1 on iteration-cap failure.
    """
    n_batch = coords.shape[0]
    n_act = coords.shape[1]
    n_q = kbar_q.shape[0]
    n_dof = rep.shape[1]
    n_fun = rep.shape[0]
    for m in prange(n_batch):
        kq = np.empty(n_q)
        for q in range(n_q):
            v = kbar_q[q]
            for j in range(n_act):
                v += coords[m, j] * psi_q[j, q]
            kq[q] = v
        ok = True
        for q in range(n_q):
            if kq[q] <= 0.0:
                ok = False
        if not ok:
            iters[m] = -2
            for i in range(n_fun):
                out[m, i] = np.nan
            continue
        diag = np.empty(n_dof)
        upper = np.empty(max(n_dof - 1, 0))
        assemble_tridiag(kq, h, diag, upper)
        x = np.empty(n_dof)
        hist = np.empty(maxit + 1)
        it = pcg_tridiag(diag, upper, b, tol, maxit, x, hist)
        iters[m] = it
        for i in range(n_fun):
            s = 0.0
            for jj in range(n_dof):
                s += rep[i, jj] * x[jj]
            out[m, i] = s
    return out


@njit(cache=True, parallel=True)
def batch_forward_2d(kbar_q, psi_q, coords, gl, pos, indptr, indices, diag_pos,
                     rep, b, tol, maxit, out, iters):
    """2D analogue of batch_forward_1d on a fixed CSR sparsity pattern."""
    n_batch = coords.shape[0]
    n_act = coords.shape[1]
    n_q = kbar_q.shape[0]
    n_dof = rep.shape[1]
    n_fun = rep.shape[0]
    nnz = indices.shape[0]
    for m in prange(n_batch):
        kq = np.empty(n_q)
        for q in range(n_q):
            v = kbar_q[q]
            for j in range(n_act):
                v += coords[m, j] * psi_q[j, q]
            kq[q] = v
        ok = True
        for q in range(n_q):
            if kq[q] <= 0.0:
                ok = False
        if not ok:
            iters[m] = -2
            for i in range(n_fun):
                out[m, i] = np.nan
            continue
        data = np.zeros(nnz)
        assemble_csr_data(kq, gl, pos, data)
        x = np.empty(n_dof)
        hist = np.empty(maxit + 1)
        it = pcg_csr(indptr, indices, data, diag_pos, b, tol, maxit, x, hist)
        iters[m] = it
        for i in range(n_fun):
            s = 0.0
            for jj in range(n_dof):
                s += rep[i, jj] * x[jj]
            out[m, i] = s
    return out


@njit(cache=True)
def acceptance_scan(phi_init, phi_prop, accept_u, clamp, idx):
    """Run the independence-sampler accept/reject scan over precomputed potentials.

    idx[k] is filled with the proposal index occupied after step k (-1 keeps the
    initial state). Returns the number of accepted steps.
    """
    n = phi_prop.shape[0]
    cur = -1
    phic = phi_init
    n_acc = 0
    for k in range(n):
        d = phic - phi_prop[k]
        if d > clamp:
            d = clamp
        elif d < -clamp:
            d = -clamp
        alpha = np.exp(d)
        if alpha > 1.0:
            alpha = 1.0
        if accept_u[k] <= alpha:
            cur = k
            phic = phi_prop[k]
            n_acc += 1
        idx[k] = cur
    return n_acc
