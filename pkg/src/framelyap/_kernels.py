"""Fixed-step integration kernels.

Everything here operates on packed polynomial vector fields: a field is the
triple ``(targets, coefs, mons)`` where term ``m`` contributes
``coefs[m] * prod_k x[k]**mons[m, k]`` to velocity component ``targets[m]``.
All built-in fields and JSON-defined fields are polynomial, so the hot loops
(base flow, variational flow, frame flow, reduced-system solves) stay inside
compiled code. Non-polynomial callables take the slower pure-Python paths in
the public modules.

Status codes returned by the integrators: 0 ok, 1 norm blow-up,
2 orthonormality drift.
"""

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_BLOWUP = 1
STATUS_DRIFT = 2


@njit(cache=True)
def poly_velocity(x, tg, cf, mn, out):
    for i in range(out.shape[0]):
        out[i] = 0.0
    for m in range(tg.shape[0]):
        p = cf[m]
        for k in range(x.shape[0]):
            e = mn[m, k]
            for _ in range(e):
                p *= x[k]
        out[tg[m]] += p


@njit(cache=True)
def poly_jacobian(x, tg, cf, mn, out):
    n = x.shape[0]
    for i in range(n):
        for j in range(n):
            out[i, j] = 0.0
    for m in range(tg.shape[0]):
        for v in range(n):
            e = mn[m, v]
            if e == 0:
                continue
            p = cf[m] * e
            for _ in range(e - 1):
                p *= x[v]
            for k in range(n):
                if k == v:
                    continue
                for _ in range(mn[m, k]):
                    p *= x[k]
            out[tg[m], v] += p


@njit(cache=True)
def _norm2(x):
    s = 0.0
    for i in range(x.shape[0]):
        s += x[i] * x[i]
    return np.sqrt(s)


@njit(cache=True)
def mgs_inplace(Q):
    """Modified Gram-Schmidt with a second sweep, in place. Returns the
    smallest norm ratio seen (diagnostic for near-dependence)."""
    n, l = Q.shape
    worst = 1.0
    for k in range(l):
        before = 0.0
        for i in range(n):
            before += Q[i, k] * Q[i, k]
        before = np.sqrt(before)
        for _sweep in range(2):
            for j in range(k):
                r = 0.0
                for i in range(n):
                    r += Q[i, j] * Q[i, k]
                for i in range(n):
                    Q[i, k] -= r * Q[i, j]
        nrm = 0.0
        for i in range(n):
            nrm += Q[i, k] * Q[i, k]
        nrm = np.sqrt(nrm)
        if before > 0.0 and nrm / before < worst:
            worst = nrm / before
        for i in range(n):
            Q[i, k] /= nrm
    return worst


@njit(cache=True)
def ortho_drift(Q):
    n, l = Q.shape
    d = 0.0
    for a in range(l):
        for b in range(a, l):
            s = 0.0
            for i in range(n):
                s += Q[i, a] * Q[i, b]
            if a == b:
                s -= 1.0
            if abs(s) > d:
                d = abs(s)
    return d


# ---------------------------------------------------------------------------
# base flow


@njit(cache=True)
def rk4_flow(x0, tg, cf, mn, h, steps_per, n_samp, blowup, out_t, out_x):
    """Classic RK4 with ``steps_per`` steps between each of ``n_samp``
    samples. Sample ``s`` lands at ``t = s * steps_per * h``."""
    n = x0.shape[0]
    x = x0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    xt = np.empty(n)
    out_t[0] = 0.0
    for i in range(n):
        out_x[0, i] = x[i]
    step = 0
    for s in range(1, n_samp + 1):
        for _ in range(steps_per):
            poly_velocity(x, tg, cf, mn, k1)
            for i in range(n):
                xt[i] = x[i] + 0.5 * h * k1[i]
            poly_velocity(xt, tg, cf, mn, k2)
            for i in range(n):
                xt[i] = x[i] + 0.5 * h * k2[i]
            poly_velocity(xt, tg, cf, mn, k3)
            for i in range(n):
                xt[i] = x[i] + h * k3[i]
            poly_velocity(xt, tg, cf, mn, k4)
            for i in range(n):
                x[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            step += 1
        t = step * h
        out_t[s] = t
        for i in range(n):
            out_x[s, i] = x[i]
        if _norm2(x) > blowup or not np.isfinite(_norm2(x)):
            return STATUS_BLOWUP, t, _norm2(x)
    return STATUS_OK, out_t[n_samp], 0.0


# ---------------------------------------------------------------------------
# variational flow (x, V) with V' = DS(x) V


@njit(cache=True)
def rk4_variational(x0, V0, tg, cf, mn, h, steps_per, n_samp, blowup,
                    out_t, out_x, out_V):
    n = x0.shape[0]
    l = V0.shape[1]
    x = x0.copy()
    V = V0.copy()
    J = np.empty((n, n))
    kx = np.empty((4, n))
    kV = np.empty((4, n, l))
    xt = np.empty(n)
    Vt = np.empty((n, l))
    out_t[0] = 0.0
    for i in range(n):
        out_x[0, i] = x[i]
        for j in range(l):
            out_V[0, i, j] = V[i, j]
    step = 0
    for s in range(1, n_samp + 1):
        for _ in range(steps_per):
            for stage in range(4):
                if stage == 0:
                    for i in range(n):
                        xt[i] = x[i]
                        for j in range(l):
                            Vt[i, j] = V[i, j]
                else:
                    w = 0.5 * h if stage < 3 else h
                    p = stage - 1
                    for i in range(n):
                        xt[i] = x[i] + w * kx[p, i]
                        for j in range(l):
                            Vt[i, j] = V[i, j] + w * kV[p, i, j]
                poly_velocity(xt, tg, cf, mn, kx[stage])
                poly_jacobian(xt, tg, cf, mn, J)
                for i in range(n):
                    for j in range(l):
                        acc = 0.0
                        for k in range(n):
                            acc += J[i, k] * Vt[k, j]
                        kV[stage, i, j] = acc
            for i in range(n):
                x[i] += (h / 6.0) * (kx[0, i] + 2.0 * kx[1, i]
                                     + 2.0 * kx[2, i] + kx[3, i])
                for j in range(l):
                    V[i, j] += (h / 6.0) * (kV[0, i, j] + 2.0 * kV[1, i, j]
                                            + 2.0 * kV[2, i, j] + kV[3, i, j])
            step += 1
        t = step * h
        out_t[s] = t
        for i in range(n):
            out_x[s, i] = x[i]
            for j in range(l):
                out_V[s, i, j] = V[i, j]
        if _norm2(x) > blowup or not np.isfinite(_norm2(x)):
            return STATUS_BLOWUP, t, _norm2(x)
    return STATUS_OK, out_t[n_samp], 0.0


# ---------------------------------------------------------------------------
# orthonormal frame flow


@njit(cache=True)
def _frame_rhs(x, Q, tg, cf, mn, J, C, U, dx, dQ, dlz):
    """Derivative of (x, Q, log zeta): dx = S(x), dQ = JQ - Q U(C),
    dlz_k = C_kk, where C = Q^T J Q and U(C) keeps the diagonal of C and
    symmetrizes the strictly-upper part (C_ab + C_ba)."""
    n = x.shape[0]
    l = Q.shape[1]
    poly_velocity(x, tg, cf, mn, dx)
    poly_jacobian(x, tg, cf, mn, J)
    for i in range(n):
        for j in range(l):
            acc = 0.0
            for k in range(n):
                acc += J[i, k] * Q[k, j]
            dQ[i, j] = acc                      # JQ for now
    for a in range(l):
        for b in range(l):
            acc = 0.0
            for k in range(n):
                acc += Q[k, a] * dQ[k, b]
            C[a, b] = acc
    for a in range(l):
        for b in range(l):
            if a == b:
                U[a, b] = C[a, a]
            elif a < b:
                U[a, b] = C[a, b] + C[b, a]
            else:
                U[a, b] = 0.0
    for i in range(n):
        for b in range(l):
            acc = 0.0
            for a in range(l):
                acc += Q[i, a] * U[a, b]
            dQ[i, b] -= acc
    for k in range(l):
        dlz[k] = C[k, k]


@njit(cache=True)
def omega_coupling(x, Q, tg, cf, mn, J, JQ, C, om, cp):
    """Instantaneous growth rates om_k = C_kk and pair couplings
    cp[(i,j)] = C_ij + C_ji for i > j, packed row-major."""
    n = x.shape[0]
    l = Q.shape[1]
    poly_jacobian(x, tg, cf, mn, J)
    for i in range(n):
        for j in range(l):
            acc = 0.0
            for k in range(n):
                acc += J[i, k] * Q[k, j]
            JQ[i, j] = acc
    for a in range(l):
        for b in range(l):
            acc = 0.0
            for k in range(n):
                acc += Q[k, a] * JQ[k, b]
            C[a, b] = acc
    for k in range(l):
        om[k] = C[k, k]
    p = 0
    for i in range(1, l):
        for j in range(i):
            cp[p] = C[i, j] + C[j, i]
            p += 1


@njit(cache=True)
def rk4_frame(x0, Q0, lz0, tg, cf, mn, h, steps_per, n_samp, reorth_every,
              drift_tol, blowup, out_t, out_x, out_Q, out_lz, out_om, out_cp):
    n = x0.shape[0]
    l = Q0.shape[1]
    x = x0.copy()
    Q = Q0.copy()
    lz = lz0.copy()
    J = np.empty((n, n))
    C = np.empty((l, l))
    U = np.empty((l, l))
    JQ = np.empty((n, l))
    kx = np.empty((4, n))
    kQ = np.empty((4, n, l))
    kl = np.empty((4, l))
    xt = np.empty(n)
    Qt = np.empty((n, l))
    om = np.empty(l)
    cp = np.empty(l * (l - 1) // 2)

    out_t[0] = 0.0
    for i in range(n):
        out_x[0, i] = x[i]
        for j in range(l):
            out_Q[0, i, j] = Q[i, j]
    for k in range(l):
        out_lz[0, k] = lz[k]
    omega_coupling(x, Q, tg, cf, mn, J, JQ, C, om, cp)
    for k in range(l):
        out_om[0, k] = om[k]
    for p in range(cp.shape[0]):
        out_cp[0, p] = cp[p]

    step = 0
    for s in range(1, n_samp + 1):
        for _ in range(steps_per):
            for stage in range(4):
                if stage == 0:
                    _frame_rhs(x, Q, tg, cf, mn, J, C, U,
                               kx[0], kQ[0], kl[0])
                else:
                    w = 0.5 * h if stage < 3 else h
                    p = stage - 1
                    for i in range(n):
                        xt[i] = x[i] + w * kx[p, i]
                        for j in range(l):
                            Qt[i, j] = Q[i, j] + w * kQ[p, i, j]
                    _frame_rhs(xt, Qt, tg, cf, mn, J, C, U,
                               kx[stage], kQ[stage], kl[stage])
            for i in range(n):
                x[i] += (h / 6.0) * (kx[0, i] + 2.0 * kx[1, i]
                                     + 2.0 * kx[2, i] + kx[3, i])
                for j in range(l):
                    Q[i, j] += (h / 6.0) * (kQ[0, i, j] + 2.0 * kQ[1, i, j]
                                            + 2.0 * kQ[2, i, j] + kQ[3, i, j])
            for k in range(l):
                lz[k] += (h / 6.0) * (kl[0, k] + 2.0 * kl[1, k]
                                      + 2.0 * kl[2, k] + kl[3, k])
            step += 1
            if step % reorth_every == 0:
                drift = ortho_drift(Q)
                if drift > drift_tol:
                    return STATUS_DRIFT, step * h, drift
                mgs_inplace(Q)
        t = step * h
        out_t[s] = t
        for i in range(n):
            out_x[s, i] = x[i]
            for j in range(l):
                out_Q[s, i, j] = Q[i, j]
        for k in range(l):
            out_lz[s, k] = lz[k]
        omega_coupling(x, Q, tg, cf, mn, J, JQ, C, om, cp)
        for k in range(l):
            out_om[s, k] = om[k]
        for p in range(cp.shape[0]):
            out_cp[s, p] = cp[p]
        nx = _norm2(x)
        if nx > blowup or not np.isfinite(nx):
            return STATUS_BLOWUP, t, nx
    return STATUS_OK, out_t[n_samp], 0.0


# ---------------------------------------------------------------------------
# reduced lower-triangular row system dy/dt = y A(t) (+ f)


@njit(cache=True)
def triangular_solve(times, apack, v, big, out_y, out_s):
    """Back-substitution solve of the row system on the tape grid.

    ``apack[m]`` packs the lower triangle of A(t_m) row-major including the
    diagonal, index (i, j) -> i(i+1)/2 + j. Each step applies the exact
    integrating factor of the (piecewise-trapezoid) diagonal and a trapezoid
    rule for the feed from higher rows. ``out_s`` carries the shared log
    rescale ledger: true solution = out_y * exp(out_s)."""
    N = times.shape[0]
    l = v.shape[0]
    y = v.copy().astype(np.float64)
    ynew = np.empty(l)
    s = 0.0
    for j in range(l):
        out_y[0, j] = y[j]
    out_s[0] = 0.0
    for m in range(N - 1):
        h = times[m + 1] - times[m]
        for j in range(l - 1, -1, -1):
            dj = j * (j + 1) // 2 + j
            mj = 0.5 * h * (apack[m, dj] + apack[m + 1, dj])
            g0 = 0.0
            g1 = 0.0
            for i in range(j + 1, l):
                ij = i * (i + 1) // 2 + j
                g0 += y[i] * apack[m, ij]
                g1 += ynew[i] * apack[m + 1, ij]
            em = np.exp(mj)
            ynew[j] = em * y[j] + 0.5 * h * (em * g0 + g1)
        mx = 0.0
        for j in range(l):
            y[j] = ynew[j]
            if abs(y[j]) > mx:
                mx = abs(y[j])
        if mx > big or (mx > 0.0 and mx < 1.0 / big):
            nrm = _norm2(y)
            for j in range(l):
                y[j] /= nrm
            s += np.log(nrm)
        for j in range(l):
            out_y[m + 1, j] = y[j]
        out_s[m + 1] = s
    return STATUS_OK


@njit(cache=True)
def _reduced_rhs(y, s, t, th, a0, a1, pcode, pp, dy):
    """Row-system derivative with A linearly interpolated between the packed
    rows a0, a1 (th in [0,1]) plus the rescaled perturbation.

    The solution is carried as y_true = y * exp(s); beyond s = 300 the
    perturbation is below double-precision resolution relative to y and is
    skipped."""
    l = y.shape[0]
    for j in range(l):
        acc = 0.0
        for i in range(j, l):
            ij = i * (i + 1) // 2 + j
            a = a0[ij] + th * (a1[ij] - a0[ij])
            acc += y[i] * a
        dy[j] = acc
    if pcode == 0 or s > 300.0:
        return
    es = np.exp(-s)
    if pcode == 1:          # constant vector: pp[0:l]
        for j in range(l):
            dy[j] += es * pp[j]
    elif pcode == 2:        # sinusoid: amp pp[0:l], freq pp[l:2l], phase pp[2l:3l]
        for j in range(l):
            dy[j] += es * pp[j] * np.sin(pp[l + j] * t + pp[2 * l + j])
    elif pcode == 3:        # saturating clamp: scale pp[0], gain pp[1]
        w = np.exp(s)
        for j in range(l):
            dy[j] += es * pp[0] * np.tanh(pp[1] * y[j] * w)


@njit(cache=True)
def rk4_reduced(times, apack, v, h_target, big, pcode, pp, out_y, out_s):
    """RK4 on dy/dt = y A(t) + f(t, y), sampling at the tape knots. Steps
    subdivide each tape interval so no stage straddles an interpolation
    kink."""
    N = times.shape[0]
    l = v.shape[0]
    y = v.copy().astype(np.float64)
    s = 0.0
    k1 = np.empty(l)
    k2 = np.empty(l)
    k3 = np.empty(l)
    k4 = np.empty(l)
    yt = np.empty(l)
    for j in range(l):
        out_y[0, j] = y[j]
    out_s[0] = 0.0
    for m in range(N - 1):
        seg = times[m + 1] - times[m]
        msub = int(np.ceil(seg / h_target - 1e-12))
        if msub < 1:
            msub = 1
        h = seg / msub
        a0 = apack[m]
        a1 = apack[m + 1]
        for q in range(msub):
            t0 = times[m] + q * h
            th0 = (q * h) / seg
            thh = (q * h + 0.5 * h) / seg
            th1 = ((q + 1) * h) / seg
            _reduced_rhs(y, s, t0, th0, a0, a1, pcode, pp, k1)
            for j in range(l):
                yt[j] = y[j] + 0.5 * h * k1[j]
            _reduced_rhs(yt, s, t0 + 0.5 * h, thh, a0, a1, pcode, pp, k2)
            for j in range(l):
                yt[j] = y[j] + 0.5 * h * k2[j]
            _reduced_rhs(yt, s, t0 + 0.5 * h, thh, a0, a1, pcode, pp, k3)
            for j in range(l):
                yt[j] = y[j] + h * k3[j]
            _reduced_rhs(yt, s, t0 + h, th1, a0, a1, pcode, pp, k4)
            for j in range(l):
                y[j] += (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        mx = 0.0
        for j in range(l):
            if abs(y[j]) > mx:
                mx = abs(y[j])
        if mx > big or (mx > 0.0 and mx < 1.0 / big):
            nrm = _norm2(y)
            for j in range(l):
                y[j] /= nrm
            s += np.log(nrm)
        for j in range(l):
            out_y[m + 1, j] = y[j]
        out_s[m + 1] = s
    return STATUS_OK
