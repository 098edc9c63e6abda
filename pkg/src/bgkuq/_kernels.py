"""Fused numba kernels for the solver hot path.

The numpy implementations in :mod:`bgkuq.solver` are the reference; these
kernels compute the same quantities with all intermediate passes fused,
which matters because sample farms at desk scale are memory-bound.  They
are compiled without fastmath and parallelize only over the sample axis
with disjoint writes, so results are bit-reproducible for any thread
count (they may differ from the numpy path in the last bits only through
summation order; an equivalence test pins the two paths together).

Everything here is private; :func:`bgkuq.solver.solve_to_time` selects the
fast path automatically when numba is importable.
"""
from __future__ import annotations

import warnings

import numpy as np

try:  # pragma: no cover - exercised implicitly by the import
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from numba import njit, prange

    # cosmetic: the sandboxed TBB build is too old, numba falls back anyway
    warnings.filterwarnings("ignore", message=".*TBB.*")
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore
        def wrap(f):
            return f
        if args and callable(args[0]):
            return args[0]
        return wrap

    prange = range  # type: ignore


@njit(inline="always")
def _fetch(q, gl, gr, b, f, j, k, nx):
    """Value of cell j in ghost-extended coordinates, j in [-2, nx+2)."""
    if j < 0:
        return gl[b, f, 2 + j, k]
    if j >= nx:
        return gr[b, f, j - nx, k]
    return q[b, f, j, k]


@njit(inline="always")
def _minmod3(a, b, c):
    if a > 0.0 and b > 0.0 and c > 0.0:
        m = a
        if b < m:
            m = b
        if c < m:
            m = c
        return m
    if a < 0.0 and b < 0.0 and c < 0.0:
        m = a
        if b > m:
            m = b
        if c > m:
            m = c
        return m
    return 0.0


@njit(parallel=True, cache=True)
def transport(q, gl, gr, dx, theta, v, w, xw, x2w, res, mrate):
    """MUSCL transport residual of both fields plus its moment rates.

    q: (B, 2, Nx, Nv) cell averages (phi, psi); gl/gr: (B, 2, 2, Nv) ghost
    layers; res: residual output; mrate: (B, Nx, 3) quadrature moment
    rates of the residual pair.
    """
    bsz, _, nx, nv = q.shape
    half = 0.5 * dx
    inv2dx = 0.5 / dx
    invdx = 1.0 / dx
    for b in prange(bsz):
        for f in range(2):
            for k in range(nv):
                vk = v[k]
                vp = vk if vk > 0.0 else 0.0
                vm = vk if vk < 0.0 else 0.0
                qm2 = _fetch(q, gl, gr, b, f, -2, k, nx)
                qm1 = _fetch(q, gl, gr, b, f, -1, k, nx)
                q0 = q[b, f, 0, k]
                q1 = _fetch(q, gl, gr, b, f, 1, k, nx)
                s_m1 = _minmod3((q0 - qm2) * inv2dx,
                                theta * (qm1 - qm2) * invdx,
                                theta * (q0 - qm1) * invdx)
                s_0 = _minmod3((q1 - qm1) * inv2dx,
                               theta * (q0 - qm1) * invdx,
                               theta * (q1 - q0) * invdx)
                flux_m = vp * (qm1 + half * s_m1) + vm * (q0 - half * s_0)
                qj = q0
                qjp = q1
                s_j = s_0
                for j in range(nx):
                    qjp2 = _fetch(q, gl, gr, b, f, j + 2, k, nx)
                    s_jp = _minmod3((qjp2 - qj) * inv2dx,
                                    theta * (qjp - qj) * invdx,
                                    theta * (qjp2 - qjp) * invdx)
                    flux_p = vp * (qj + half * s_j) + vm * (qjp - half * s_jp)
                    res[b, f, j, k] = -(flux_p - flux_m) * invdx
                    flux_m = flux_p
                    qj = qjp
                    qjp = qjp2
                    s_j = s_jp
        for j in range(nx):
            r0 = 0.0
            r1 = 0.0
            r2 = 0.0
            for k in range(nv):
                tphi = res[b, 0, j, k]
                r0 += tphi * w[k]
                r1 += tphi * xw[k]
                r2 += 0.5 * tphi * x2w[k] + res[b, 1, j, k] * w[k]
            mrate[b, j, 0] = r0
            mrate[b, j, 1] = r1
            mrate[b, j, 2] = r2


@njit(parallel=True, cache=True)
def assemble_relax(fn, tterms, dterms, nterms, excoef, imcoef,
                   mphi, psifac, c, fout, dout, write_d, mins):
    """Explicit stage assembly fused with the closed-form relaxation.

    fout = (fn + sum_s excoef[s] tterms[s] + sum_s imcoef[s] dterms[s]
            + c * M) / (1 + c),          dout = M - fout (optional),

    where M is (mphi, psifac * mphi).  mins[b, f] records the per-sample
    minimum of fout for positivity diagnostics.
    """
    bsz, _, nx, nv = fn.shape
    inv = 1.0 / (1.0 + c)
    for b in prange(bsz):
        for f in range(2):
            mn = np.inf
            for j in range(nx):
                fac = 1.0 if f == 0 else psifac[b, j]
                for k in range(nv):
                    ex = fn[b, f, j, k]
                    for s in range(nterms):
                        if excoef[s] != 0.0:
                            ex += excoef[s] * tterms[s, b, f, j, k]
                        if imcoef[s] != 0.0:
                            ex += imcoef[s] * dterms[s, b, f, j, k]
                    m = fac * mphi[b, j, k]
                    val = (ex + c * m) * inv
                    fout[b, f, j, k] = val
                    if write_d:
                        dout[b, f, j, k] = m - val
                    if val < mn:
                        mn = val
            mins[b, f] = mn


@njit(parallel=True, cache=True)
def relax(fio, mphi, psifac, c, mins):
    """In-place final correction fio <- (fio + c M) / (1 + c)."""
    bsz, _, nx, nv = fio.shape
    inv = 1.0 / (1.0 + c)
    for b in prange(bsz):
        for f in range(2):
            mn = np.inf
            for j in range(nx):
                fac = 1.0 if f == 0 else psifac[b, j]
                for k in range(nv):
                    val = (fio[b, f, j, k] + c * fac * mphi[b, j, k]) * inv
                    fio[b, f, j, k] = val
                    if val < mn:
                        mn = val
            mins[b, f] = mn


@njit(inline="always")
def _eval_residual(a1, a2, a3, rho, m, e, v, xjw, mphi_row):
    """Evaluate M_phi into mphi_row; return the residual triple and beta."""
    mu0 = 0.0
    mu1 = 0.0
    mu2 = 0.0
    mu3 = 0.0
    mu4 = 0.0
    for k in range(v.size):
        vk = v[k]
        mval = np.exp(a1 + a2 * vk + a3 * vk * vk)
        mphi_row[k] = mval
        mu0 += mval * xjw[0, k]
        mu1 += mval * xjw[1, k]
        mu2 += mval * xjw[2, k]
        mu3 += mval * xjw[3, k]
        mu4 += mval * xjw[4, k]
    beta = -0.5 / a3
    r0 = mu0 - rho
    r1 = mu1 - m
    r2 = 0.5 * mu2 + beta * mu0 - e
    return r0, r1, r2, mu0, mu1, mu2, mu3, mu4


@njit(parallel=True, cache=True)
def newton(tgt, alphas, v, xjw, tol, target_tol, max_iter, max_halvings,
           ceiling, mphi, iters, ok):
    """Per-cell damped Newton for the discrete Maxwellian parameters.

    Mirrors the numpy implementation in :mod:`bgkuq.maxwellian`: iterate
    to ``target_tol`` (below the success threshold ``tol``), halve the
    step while a3 would leave the admissible region or the residual would
    grow, and eject cells that stop improving.  ``alphas`` is updated in
    place; ``mphi`` receives the node values of the converged Maxwellian.
    """
    n = tgt.shape[0]
    for i in prange(n):
        a1 = alphas[i, 0]
        a2 = alphas[i, 1]
        a3 = alphas[i, 2]
        rho = tgt[i, 0]
        m = tgt[i, 1]
        e = tgt[i, 2]
        scale = 1.0
        if rho > scale:
            scale = rho
        if abs(m) > scale:
            scale = abs(m)
        if e > scale:
            scale = e
        row = mphi[i]
        r0, r1, r2, mu0, mu1, mu2, mu3, mu4 = _eval_residual(
            a1, a2, a3, rho, m, e, v, xjw, row)
        rn = max(abs(r0), abs(r1), abs(r2))
        first = 0 if rn <= tol * scale else -1
        it = 0
        row_valid = True  # row holds the evaluation of the current alphas
        while rn > target_tol * scale and it < max_iter:
            it += 1
            beta = -0.5 / a3
            j00 = mu0
            j01 = mu1
            j02 = mu2
            j10 = mu1
            j11 = mu2
            j12 = mu3
            j20 = 0.5 * mu2 + beta * mu0
            j21 = 0.5 * mu3 + beta * mu1
            j22 = 0.5 * mu4 + beta * mu2 + mu0 / (2.0 * a3 * a3)
            co_a = j11 * j22 - j12 * j21
            co_b = j12 * j20 - j10 * j22
            co_c = j10 * j21 - j11 * j20
            det = j00 * co_a + j01 * co_b + j02 * co_c
            if det == 0.0 or not np.isfinite(det):
                break
            d0 = (r0 * co_a + r1 * (j02 * j21 - j01 * j22)
                  + r2 * (j01 * j12 - j02 * j11)) / det
            d1 = (r0 * co_b + r1 * (j00 * j22 - j02 * j20)
                  + r2 * (j02 * j10 - j00 * j12)) / det
            d2 = (r0 * co_c + r1 * (j01 * j20 - j00 * j21)
                  + r2 * (j00 * j11 - j01 * j10)) / det
            step = 1.0
            accepted = False
            for _ in range(max_halvings + 1):
                t0 = a1 - step * d0
                t1 = a2 - step * d1
                t2 = a3 - step * d2
                if t2 < ceiling:
                    s0, s1, s2, w0, w1, w2, w3, w4 = _eval_residual(
                        t0, t1, t2, rho, m, e, v, xjw, row)
                    row_valid = False
                    tn = max(abs(s0), abs(s1), abs(s2))
                    if np.isfinite(tn) and tn < rn:
                        a1 = t0
                        a2 = t1
                        a3 = t2
                        r0 = s0
                        r1 = s1
                        r2 = s2
                        mu0 = w0
                        mu1 = w1
                        mu2 = w2
                        mu3 = w3
                        mu4 = w4
                        rn = tn
                        accepted = True
                        row_valid = True
                        break
                step *= 0.5
            if not accepted:
                break
            if first < 0 and rn <= tol * scale:
                first = it
        if not row_valid:
            # the row buffer holds a rejected trial evaluation
            r0, r1, r2, mu0, mu1, mu2, mu3, mu4 = _eval_residual(
                a1, a2, a3, rho, m, e, v, xjw, row)
        alphas[i, 0] = a1
        alphas[i, 1] = a2
        alphas[i, 2] = a3
        iters[i] = first if first >= 0 else it
        ok[i] = rn <= tol * scale


@njit(parallel=True, cache=True)
def moments(q, w, xw, x2w, out):
    """Conservative moments (rho, m, E) of the stacked pair: out (B, Nx, 3)."""
    bsz, _, nx, nv = q.shape
    for b in prange(bsz):
        for j in range(nx):
            r0 = 0.0
            r1 = 0.0
            r2 = 0.0
            for k in range(nv):
                phi = q[b, 0, j, k]
                r0 += phi * w[k]
                r1 += phi * xw[k]
                r2 += 0.5 * phi * x2w[k] + q[b, 1, j, k] * w[k]
            out[b, j, 0] = r0
            out[b, j, 1] = r1
            out[b, j, 2] = r2
