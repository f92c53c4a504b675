"""Numba @njit kernel implementations.

Loop twins of :mod:`dcsim.kernels.numpy_impl`; the per-cell arithmetic and
its ordering match the vectorized reference exactly, so both backends
produce the same trajectories.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _next_pow2(need):
    return 2.0 ** math.ceil(math.log2(need))


@njit(cache=True)
def kinetics_grid(dens, ne, nh, drive_any,
                  ph_from, ph_to, ph_carrier, ph_rate,
                  cp_from, cp_to, cp_carrier, cp_coef,
                  tn_src_from, tn_src_to, tn_empty, tn_filled,
                  tn_src_tot, tn_trap_tot, tn_gate,
                  rl_from, rl_to, rl_carrier, rl_rate,
                  dt, rate_cap, max_sub, carrier_cut, ledger):
    # dens is cell-major (ny, nx, S); rate grids are (ny, nx, T) / (ny, nx, K)
    ny, nx, S = dens.shape
    T = ph_from.shape[0]
    C = cp_from.shape[0]
    K = tn_src_from.shape[0]
    L = rl_from.shape[0]

    out = np.empty(S)
    gam = np.empty(S)
    delta = np.empty(S)
    fph = np.empty(max(T, 1))
    fcp = np.empty(max(C, 1))
    ftn = np.empty(max(K, 1))
    frl = np.empty(max(L, 1))

    for jy in range(ny):
        for jx in range(nx):
            e = ne[jy, jx]
            h = nh[jy, jx]
            driven = drive_any[jy, jx] != 0
            d = dens[jy, jx]
            active = driven or e > carrier_cut or h > carrier_cut
            if not active:
                for l in range(L):
                    if d[rl_from[l]] > 0.0:
                        active = True
                        break
            if not active:
                continue

            # projected carrier bounds over the full substep
            egrow = 0.0
            hgrow = 0.0
            if driven:
                for t in range(T):
                    g = ph_rate[jy, jx, t] * d[ph_from[t]]
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

            for s in range(S):
                out[s] = 0.0
            if driven:
                for t in range(T):
                    out[ph_from[t]] += ph_rate[jy, jx, t]
                for k in range(K):
                    out[tn_src_from[k]] += tn_gate[jy, jx, k] * tn_trap_tot[k]
                    out[tn_empty[k]] += tn_gate[jy, jx, k] * tn_src_tot[k]
            for c in range(C):
                carr = eb if cp_carrier[c] == 0 else hb
                out[cp_from[c]] += cp_coef[c] * carr
            for l in range(L):
                out[rl_from[l]] += rl_rate[l]
            rmax = 0.0
            for s in range(S):
                if out[s] > rmax:
                    rmax = out[s]
            re = 0.0
            rh = 0.0
            for c in range(C):
                if cp_carrier[c] == 0:
                    re += cp_coef[c] * d[cp_from[c]]
                else:
                    rh += cp_coef[c] * d[cp_from[c]]
            if re > rmax:
                rmax = re
            if rh > rmax:
                rmax = rh

            need = math.ceil((dt * rmax) / rate_cap)
            if need < 1.0:
                need = 1.0
            mf = _next_pow2(need)
            if mf > max_sub:
                # fatal for the whole step; caller discards the state
                return 1
            m = int(mf)
            if m > ledger[7]:
                ledger[7] = m
            dtk = dt / m

            for _ in range(m):
                for s in range(S):
                    out[s] = 0.0
                oute = 0.0
                outh = 0.0
                if driven:
                    for t in range(T):
                        f = (ph_rate[jy, jx, t] * d[ph_from[t]]) * dtk
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
                if driven:
                    for k in range(K):
                        f = ((tn_gate[jy, jx, k] * d[tn_empty[k]]) * d[tn_src_from[k]]) * dtk
                        ftn[k] = f
                        out[tn_src_from[k]] += f
                        out[tn_empty[k]] += f
                for l in range(L):
                    f = (rl_rate[l] * d[rl_from[l]]) * dtk
                    frl[l] = f
                    out[rl_from[l]] += f

                anyclamp = False
                for s in range(S):
                    if out[s] > d[s]:
                        gam[s] = d[s] / out[s]
                        anyclamp = True
                    else:
                        gam[s] = 1.0
                game = 1.0
                if oute > e:
                    game = e / oute
                    anyclamp = True
                gamh = 1.0
                if outh > h:
                    gamh = h / outh
                    anyclamp = True
                if anyclamp:
                    ledger[6] += 1.0

                for s in range(S):
                    delta[s] = 0.0
                de = 0.0
                dh = 0.0
                if driven:
                    for t in range(T):
                        f = fph[t] * gam[ph_from[t]]
                        delta[ph_from[t]] -= f
                        delta[ph_to[t]] += f
                        if ph_carrier[t] == 0:
                            de += f
                            ledger[0] += f
                        else:
                            dh += f
                            ledger[1] += f
                for c in range(C):
                    gcar = game if cp_carrier[c] == 0 else gamh
                    g = gam[cp_from[c]]
                    if gcar < g:
                        g = gcar
                    f = fcp[c] * g
                    delta[cp_from[c]] -= f
                    delta[cp_to[c]] += f
                    if cp_carrier[c] == 0:
                        de -= f
                        ledger[2] += f
                    else:
                        dh -= f
                        ledger[3] += f
                if driven:
                    for k in range(K):
                        g = gam[tn_src_from[k]]
                        if gam[tn_empty[k]] < g:
                            g = gam[tn_empty[k]]
                        f = ftn[k] * g
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
                        ledger[0] += f
                    else:
                        dh += f
                        ledger[1] += f

                for s in range(S):
                    d[s] += delta[s]
                    if d[s] < 0.0:
                        d[s] = 0.0
                e += de
                h += dh
                if e < 0.0:
                    e = 0.0
                if h < 0.0:
                    h = 0.0

            ne[jy, jx] = e
            nh[jy, jx] = h
    return 0


@njit(cache=True)
def diffuse_step(src, dst, r, absorbing):
    ny, nx = src.shape
    for jy in range(ny):
        for jx in range(nx):
            c = src[jy, jx]
            if absorbing:
                up = src[jy - 1, jx] if jy > 0 else 0.0
                dn = src[jy + 1, jx] if jy < ny - 1 else 0.0
                lf = src[jy, jx - 1] if jx > 0 else 0.0
                rt = src[jy, jx + 1] if jx < nx - 1 else 0.0
            else:
                up = src[jy - 1, jx] if jy > 0 else c
                dn = src[jy + 1, jx] if jy < ny - 1 else c
                lf = src[jy, jx - 1] if jx > 0 else c
                rt = src[jy, jx + 1] if jx < nx - 1 else c
            s = up + dn
            s += lf
            s += rt
            dst[jy, jx] = c + r * (s - 4.0 * c)
    if absorbing:
        edge = 0.0
        for jx in range(nx):
            edge += src[0, jx]
        for jx in range(nx):
            edge += src[ny - 1, jx]
        for jy in range(ny):
            edge += src[jy, 0]
        for jy in range(ny):
            edge += src[jy, nx - 1]
        return r * edge
    return 0.0


@njit(cache=True)
def sor_sweep_solve(phi, rhs_dx2, omega, tol_abs, max_iter):
    ny, nx = phi.shape
    resid = np.inf
    for it in range(1, max_iter + 1):
        for color in range(2):
            for jy in range(ny):
                for jx in range(nx):
                    if (jy + jx) % 2 != color:
                        continue
                    up = phi[jy - 1, jx] if jy > 0 else 0.0
                    dn = phi[jy + 1, jx] if jy < ny - 1 else 0.0
                    lf = phi[jy, jx - 1] if jx > 0 else 0.0
                    rt = phi[jy, jx + 1] if jx < nx - 1 else 0.0
                    s = up + dn
                    s += lf
                    s += rt
                    gs = 0.25 * (s + rhs_dx2[jy, jx])
                    phi[jy, jx] = phi[jy, jx] + omega * (gs - phi[jy, jx])
        resid = 0.0
        for jy in range(ny):
            for jx in range(nx):
                up = phi[jy - 1, jx] if jy > 0 else 0.0
                dn = phi[jy + 1, jx] if jy < ny - 1 else 0.0
                lf = phi[jy, jx - 1] if jx > 0 else 0.0
                rt = phi[jy, jx + 1] if jx < nx - 1 else 0.0
                s = up + dn
                s += lf
                s += rt
                rloc = abs(s - 4.0 * phi[jy, jx] + rhs_dx2[jy, jx])
                if rloc > resid:
                    resid = rloc
        if resid <= tol_abs:
            return 0, it, resid
    return 1, max_iter, resid


@njit(cache=True)
def drift_step(n, phi, mu_pol, dx, dt, absorbing, dst):
    ny, nx = n.shape
    fx = np.empty((ny, nx + 1))
    fy = np.empty((ny + 1, nx))
    for jy in range(ny):
        for jf in range(nx + 1):
            if absorbing:
                pl = phi[jy, jf - 1] if jf > 0 else 0.0
                pr = phi[jy, jf] if jf < nx else 0.0
            else:
                pl = phi[jy, jf - 1] if jf > 0 else phi[jy, 0]
                pr = phi[jy, jf] if jf < nx else phi[jy, nx - 1]
            v = (mu_pol / dx) * (pl - pr)
            nl = n[jy, jf - 1] if jf > 0 else 0.0
            nr = n[jy, jf] if jf < nx else 0.0
            if v > 0.0:
                f = v * nl
            else:
                f = v * nr
            if not absorbing and (jf == 0 or jf == nx):
                f = 0.0
            fx[jy, jf] = f
    for jf in range(ny + 1):
        for jx in range(nx):
            if absorbing:
                pu = phi[jf - 1, jx] if jf > 0 else 0.0
                pd = phi[jf, jx] if jf < ny else 0.0
            else:
                pu = phi[jf - 1, jx] if jf > 0 else phi[0, jx]
                pd = phi[jf, jx] if jf < ny else phi[ny - 1, jx]
            v = (mu_pol / dx) * (pu - pd)
            nu = n[jf - 1, jx] if jf > 0 else 0.0
            nd = n[jf, jx] if jf < ny else 0.0
            if v > 0.0:
                f = v * nu
            else:
                f = v * nd
            if not absorbing and (jf == 0 or jf == ny):
                f = 0.0
            fy[jf, jx] = f
    for jy in range(ny):
        for jx in range(nx):
            dst[jy, jx] = n[jy, jx] - (dt / dx) * (
                (fx[jy, jx + 1] - fx[jy, jx]) + (fy[jy + 1, jx] - fy[jy, jx])
            )
    if absorbing:
        out = 0.0
        for jy in range(ny):
            out += fx[jy, nx] - fx[jy, 0]
        for jx in range(nx):
            out += fy[ny, jx] - fy[0, jx]
        return (dt / dx) * out
    return 0.0
