"""Pure-numpy kernel implementations (reference semantics).

The numba twins in :mod:`dcsim.kernels.numba_impl` perform the same
arithmetic per cell in the same order; keep the two files in sync.

Kinetics subcycling: per cell, the substep dt is split into m = 2^k
subcycles so that dt/m times the largest total outflow rate of any
reservoir (defect state or carrier field) stays below ``rate_cap``.
Within a subcycle all transfer amounts are computed from a snapshot,
clamped per source reservoir, and applied at once (flux form).
"""

import numpy as np


def _subcycle_counts(dt, rate, rate_cap):
    need = np.ceil((dt * rate) / rate_cap)
    need = np.maximum(need, 1.0)
    return np.exp2(np.ceil(np.log2(need))).astype(np.int64)


def kinetics_grid(dens, ne, nh, drive_any,
                  ph_from, ph_to, ph_carrier, ph_rate,
                  cp_from, cp_to, cp_carrier, cp_coef,
                  tn_src_from, tn_src_to, tn_empty, tn_filled,
                  tn_src_tot, tn_trap_tot, tn_gate,
                  rl_from, rl_to, rl_carrier, rl_rate,
                  dt, rate_cap, max_sub, carrier_cut, ledger):
    # dens is cell-major (ny, nx, S); rate grids are (ny, nx, T) / (ny, nx, K)
    ny, nx, S = dens.shape
    N = ny * nx
    T, C, K, L = len(ph_from), len(cp_from), len(tn_src_from), len(rl_from)

    dflat = dens.reshape(N, S)
    eflat = ne.reshape(N)
    hflat = nh.reshape(N)

    active = drive_any.reshape(N) != 0
    active = active | (eflat > carrier_cut) | (hflat > carrier_cut)
    for l in range(L):
        active = active | (dflat[:, rl_from[l]] > 0.0)
    idx = np.flatnonzero(active)
    if idx.size == 0:
        return 0

    d = np.ascontiguousarray(dflat[idx].T)
    e = eflat[idx].copy()
    h = hflat[idx].copy()
    pr = np.ascontiguousarray(ph_rate.reshape(N, T)[idx].T) if T else np.zeros((0, idx.size))
    tg = np.ascontiguousarray(tn_gate.reshape(N, K)[idx].T) if K else np.zeros((0, idx.size))

    # projected carrier bounds: current value plus everything the defects
    # could emit over the full substep
    egrow = np.zeros(idx.size)
    hgrow = np.zeros(idx.size)
    for t in range(T):
        g = pr[t] * d[ph_from[t]]
        if ph_carrier[t] == 0:
            egrow += g
        else:
            hgrow += g
    for l in range(L):
        g = rl_rate[l] * d[rl_from[l]]
        if rl_carrier[l] == 0:
            egrow += g
        else:
            hgrow += g
    eb = e + dt * egrow
    hb = h + dt * hgrow

    rate = np.zeros((S, idx.size))
    for t in range(T):
        rate[ph_from[t]] += pr[t]
    for c in range(C):
        carr = eb if cp_carrier[c] == 0 else hb
        rate[cp_from[c]] += cp_coef[c] * carr
    for k in range(K):
        rate[tn_src_from[k]] += tg[k] * tn_trap_tot[k]
        rate[tn_empty[k]] += tg[k] * tn_src_tot[k]
    for l in range(L):
        rate[rl_from[l]] += rl_rate[l]
    rmax = rate.max(axis=0) if S else np.zeros(idx.size)
    re = np.zeros(idx.size)
    rh = np.zeros(idx.size)
    for c in range(C):
        if cp_carrier[c] == 0:
            re += cp_coef[c] * d[cp_from[c]]
        else:
            rh += cp_coef[c] * d[cp_from[c]]
    rmax = np.maximum(rmax, re)
    rmax = np.maximum(rmax, rh)

    m = _subcycle_counts(dt, rmax, rate_cap)
    mtop = int(m.max())
    if mtop > max_sub:
        return 1
    if mtop > ledger[7]:
        ledger[7] = mtop

    for v in np.unique(m):
        b = m == v
        db = d[:, b]
        ev = e[b]
        hv = h[b]
        prb = pr[:, b] if T else pr
        tgb = tg[:, b] if K else tg
        _advance_cells(db, ev, hv, prb, tgb,
                       ph_from, ph_to, ph_carrier,
                       cp_from, cp_to, cp_carrier, cp_coef,
                       tn_src_from, tn_src_to, tn_empty, tn_filled,
                       rl_from, rl_to, rl_carrier, rl_rate,
                       int(v), dt / v, ledger)
        d[:, b] = db
        e[b] = ev
        h[b] = hv

    dflat[idx] = d.T
    eflat[idx] = e
    hflat[idx] = h
    return 0


def _advance_cells(d, e, h, pr, tg,
                   ph_from, ph_to, ph_carrier,
                   cp_from, cp_to, cp_carrier, cp_coef,
                   tn_src_from, tn_src_to, tn_empty, tn_filled,
                   rl_from, rl_to, rl_carrier, rl_rate,
                   m, dtk, ledger):
    S, nb = d.shape
    T, C, K, L = len(ph_from), len(cp_from), len(tn_src_from), len(rl_from)
    fph = np.empty((T, nb))
    fcp = np.empty((C, nb))
    ftn = np.empty((K, nb))
    frl = np.empty((L, nb))
    ones = np.ones(nb)

    for _ in range(m):
        out = np.zeros((S, nb))
        oute = np.zeros(nb)
        outh = np.zeros(nb)
        for t in range(T):
            f = (pr[t] * d[ph_from[t]]) * dtk
            fph[t] = f
            out[ph_from[t]] += f
        for c in range(C):
            carr = e if cp_carrier[c] == 0 else h
            f = ((cp_coef[c] * carr) * d[cp_from[c]]) * dtk
            fcp[c] = f
            out[cp_from[c]] += f
            if cp_carrier[c] == 0:
                oute += f
            else:
                outh += f
        for k in range(K):
            f = ((tg[k] * d[tn_empty[k]]) * d[tn_src_from[k]]) * dtk
            ftn[k] = f
            out[tn_src_from[k]] += f
            out[tn_empty[k]] += f
        for l in range(L):
            f = (rl_rate[l] * d[rl_from[l]]) * dtk
            frl[l] = f
            out[rl_from[l]] += f

        gam = np.ones((S, nb))
        np.divide(d, out, out=gam, where=out > d)
        game = ones.copy()
        np.divide(e, oute, out=game, where=oute > e)
        gamh = ones.copy()
        np.divide(h, outh, out=gamh, where=outh > h)
        clamped = (gam < 1.0).any(axis=0) | (game < 1.0) | (gamh < 1.0)
        ledger[6] += np.count_nonzero(clamped)

        delta = np.zeros((S, nb))
        de = np.zeros(nb)
        dh = np.zeros(nb)
        for t in range(T):
            f = fph[t] * gam[ph_from[t]]
            delta[ph_from[t]] -= f
            delta[ph_to[t]] += f
            if ph_carrier[t] == 0:
                de += f
                ledger[0] += f.sum()
            else:
                dh += f
                ledger[1] += f.sum()
        for c in range(C):
            gcar = game if cp_carrier[c] == 0 else gamh
            f = fcp[c] * np.minimum(gam[cp_from[c]], gcar)
            delta[cp_from[c]] -= f
            delta[cp_to[c]] += f
            if cp_carrier[c] == 0:
                de -= f
                ledger[2] += f.sum()
            else:
                dh -= f
                ledger[3] += f.sum()
        for k in range(K):
            f = ftn[k] * np.minimum(gam[tn_src_from[k]], gam[tn_empty[k]])
            delta[tn_src_from[k]] -= f
            delta[tn_src_to[k]] += f
            delta[tn_empty[k]] -= f
            delta[tn_filled[k]] += f
        for l in range(L):
            f = frl[l] * gam[rl_from[l]]
            delta[rl_from[l]] -= f
            delta[rl_to[l]] += f
            if rl_carrier[l] == 0:
                de += f
                ledger[0] += f.sum()
            else:
                dh += f
                ledger[1] += f.sum()

        d += delta
        e += de
        h += dh
        np.maximum(d, 0.0, out=d)
        np.maximum(e, 0.0, out=e)
        np.maximum(h, 0.0, out=h)


def diffuse_step(src, dst, r, absorbing):
    """One explicit 5-point diffusion step; returns boundary outflow mass."""
    ny, nx = src.shape
    pad = np.zeros((ny + 2, nx + 2))
    pad[1:-1, 1:-1] = src
    if not absorbing:
        pad[0, 1:-1] = src[0, :]
        pad[-1, 1:-1] = src[-1, :]
        pad[1:-1, 0] = src[:, 0]
        pad[1:-1, -1] = src[:, -1]
    s = pad[:-2, 1:-1] + pad[2:, 1:-1]
    s += pad[1:-1, :-2]
    s += pad[1:-1, 2:]
    dst[:, :] = src + r * (s - 4.0 * src)
    if absorbing:
        edge = src[0, :].sum() + src[-1, :].sum() + src[:, 0].sum() + src[:, -1].sum()
        return r * edge
    return 0.0


def sor_sweep_solve(phi, rhs_dx2, omega, tol_abs, max_iter):
    """Red-black SOR for lap(phi) = -rhs with Dirichlet phi=0 outside.

    phi is updated in place; rhs_dx2 is rhs*dx^2.  Returns
    (status, iterations, max_residual) with status 0 on convergence.
    """
    ny, nx = phi.shape
    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    red = ((jj + ii) % 2) == 0
    black = ~red
    pad = np.zeros((ny + 2, nx + 2))
    resid = np.inf
    for it in range(1, max_iter + 1):
        for mask in (red, black):
            pad[1:-1, 1:-1] = phi
            s = pad[:-2, 1:-1] + pad[2:, 1:-1]
            s += pad[1:-1, :-2]
            s += pad[1:-1, 2:]
            gs = 0.25 * (s + rhs_dx2)
            upd = phi + omega * (gs - phi)
            phi[mask] = upd[mask]
        pad[1:-1, 1:-1] = phi
        s = pad[:-2, 1:-1] + pad[2:, 1:-1]
        s += pad[1:-1, :-2]
        s += pad[1:-1, 2:]
        resid = np.abs(s - 4.0 * phi + rhs_dx2).max()
        if resid <= tol_abs:
            return 0, it, resid
    return 1, max_iter, resid


def drift_step(n, phi, mu_pol, dx, dt, absorbing, dst):
    """One upwind advection step along v = mu_pol * (-grad phi).

    mu_pol is the mobility signed by carrier polarity (positive for holes).
    Returns boundary outflow mass (zero under reflecting boundaries).
    """
    ny, nx = n.shape
    phip = np.zeros((ny + 2, nx + 2))
    phip[1:-1, 1:-1] = phi
    npad = np.zeros((ny + 2, nx + 2))
    npad[1:-1, 1:-1] = n
    if not absorbing:
        phip[0, 1:-1] = phi[0, :]
        phip[-1, 1:-1] = phi[-1, :]
        phip[1:-1, 0] = phi[:, 0]
        phip[1:-1, -1] = phi[:, -1]

    # x faces: between column i-1 and i of the padded interior, (ny, nx+1)
    vx = (mu_pol / dx) * (phip[1:-1, :-1] - phip[1:-1, 1:])
    fx = np.where(vx > 0.0, vx * npad[1:-1, :-1], vx * npad[1:-1, 1:])
    vy = (mu_pol / dx) * (phip[:-1, 1:-1] - phip[1:, 1:-1])
    fy = np.where(vy > 0.0, vy * npad[:-1, 1:-1], vy * npad[1:, 1:-1])
    if not absorbing:
        fx[:, 0] = 0.0
        fx[:, -1] = 0.0
        fy[0, :] = 0.0
        fy[-1, :] = 0.0
    dst[:, :] = n - (dt / dx) * ((fx[:, 1:] - fx[:, :-1]) + (fy[1:, :] - fy[:-1, :]))
    if absorbing:
        out = (fx[:, -1].sum() - fx[:, 0].sum()) + (fy[-1, :].sum() - fy[0, :].sum())
        return (dt / dx) * out
    return 0.0
