"""Fixed-step integration kernel (numba).

One flat state vector per grid:

    [unit0: v_osc, i_L, i_fa, i_fb, i_fc | unit1: ... | bus: va, vb, vc |
     fault branch: ia, ib, ic | pv inverter: ia, ib, ic]

Controllers (VRL, hysteresis relays, PV reference) are sampled once per
step and held through the RK4 stages; the electrical states integrate
continuously.  All mutable loop state lives in caller-owned arrays so a
run can be resumed step by step with bit-identical results.

Event kinds, integer-coded: 0 load_set(P), 1 load_delta(dP),
2 fault_on(G), 3 fault_off, 4 pv_disconnect, 5 pv_connect.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

SQ23 = math.sqrt(2.0 / 3.0)
SQ32 = math.sqrt(1.5)
SH3 = math.sqrt(3.0) / 2.0

# istate slots
I_RCOUNT, I_RIDX, I_FAULT_ON, I_FAULT_CLR, I_PV_CONN, I_IEV, I_IREC = 0, 1, 2, 3, 4, 5, 6
I_FPH0, I_FPH1, I_FPH2, I_NDONE = 7, 8, 9, 10
N_ISTATE = 11

# fstate slots
F_RSUM, F_LOADP, F_RFAULT, F_PREV_VA, F_LAST_CROSS, F_FREQ = 0, 1, 2, 3, 4, 5
F_PIFL0, F_PIFL1, F_PIFL2 = 6, 7, 8
F_LEG0, F_LEG1, F_LEG2 = 9, 10, 11
F_INJ0, F_INJ1, F_INJ2 = 12, 13, 14
N_FSTATE = 15

PV_NONE, PV_AVERAGED, PV_SWITCHED = 0, 1, 2

STATUS_OK = 0
STATUS_DIVERGED = 1

DIVERGENCE_LIMIT = 1e6


@njit(cache=True)
def _deriv(y, dy, n_u, c_osc, l_osc, rho, sigma, phi, i_gain, emf_gain, w0l,
           r_f, l_f, scales, c_bus, g_load,
           fault_on, fph0, fph1, fph2, r_fault, l_fault,
           pv_mode, inj_a, inj_b, inj_c, leg_a, leg_b, leg_c, r_pv, l_pv):
    ib = 5 * n_u
    ifl = ib + 3
    ipv = ib + 6
    vba = y[ib]
    vbb = y[ib + 1]
    vbc = y[ib + 2]
    sa = 0.0
    sb = 0.0
    sc = 0.0
    for k in range(n_u):
        b = 5 * k
        v = y[b]
        il = y[b + 1]
        ia = y[b + 2]
        ib_ = y[b + 3]
        ic = y[b + 4]
        if v > phi:
            f = 2.0 * sigma * (v - phi)
        elif v < -phi:
            f = 2.0 * sigma * (v + phi)
        else:
            f = 0.0
        i_alpha = SQ23 * (ia - 0.5 * ib_ - 0.5 * ic)
        dy[b] = (rho * v - f - il - i_gain[k] * i_alpha) / c_osc
        dy[b + 1] = v / l_osc
        g = scales[k] * emf_gain
        al = g * v
        be = g * w0l * il
        ea = SQ23 * al
        eb = SQ23 * (-0.5 * al + SH3 * be)
        ec = SQ23 * (-0.5 * al - SH3 * be)
        dy[b + 2] = (ea - r_f[k] * ia - vba) / l_f[k]
        dy[b + 3] = (eb - r_f[k] * ib_ - vbb) / l_f[k]
        dy[b + 4] = (ec - r_f[k] * ic - vbc) / l_f[k]
        sa += ia
        sb += ib_
        sc += ic

    ipa = 0.0
    ipb = 0.0
    ipc = 0.0
    if pv_mode == PV_AVERAGED:
        ipa = inj_a
        ipb = inj_b
        ipc = inj_c
        dy[ipv] = 0.0
        dy[ipv + 1] = 0.0
        dy[ipv + 2] = 0.0
    elif pv_mode == PV_SWITCHED:
        ipa = y[ipv]
        ipb = y[ipv + 1]
        ipc = y[ipv + 2]
        vn = (leg_a + leg_b + leg_c) / 3.0  # floating neutral
        dy[ipv] = (leg_a - vn - r_pv * ipa - vba) / l_pv
        dy[ipv + 1] = (leg_b - vn - r_pv * ipb - vbb) / l_pv
        dy[ipv + 2] = (leg_c - vn - r_pv * ipc - vbc) / l_pv
    else:
        dy[ipv] = 0.0
        dy[ipv + 1] = 0.0
        dy[ipv + 2] = 0.0

    if fault_on == 1:
        if fph0 == 1:
            dy[ifl] = (vba - r_fault * y[ifl]) / l_fault
        else:
            dy[ifl] = 0.0
        if fph1 == 1:
            dy[ifl + 1] = (vbb - r_fault * y[ifl + 1]) / l_fault
        else:
            dy[ifl + 1] = 0.0
        if fph2 == 1:
            dy[ifl + 2] = (vbc - r_fault * y[ifl + 2]) / l_fault
        else:
            dy[ifl + 2] = 0.0
    else:
        dy[ifl] = 0.0
        dy[ifl + 1] = 0.0
        dy[ifl + 2] = 0.0

    dy[ib] = (sa + ipa - g_load * vba - y[ifl]) / c_bus
    dy[ib + 1] = (sb + ipb - g_load * vbb - y[ifl + 1]) / c_bus
    dy[ib + 2] = (sc + ipc - g_load * vbc - y[ifl + 2]) / c_bus


@njit(cache=True)
def run_steps(n_steps, dt, use_rk4, n_u,
              c_osc, l_osc, rho, sigma, phi, i_gain, emf_gain, w0l,
              r_f, l_f, c_bus, v_nom_rms,
              kp, ki, smin, smax, guard_en,
              pv_mode, pv_p, pv_vdc, pv_band, r_pv, l_pv,
              l_fault,
              ev_step, ev_kind, ev_val,
              dec, out,
              y, scales, integ, frozen, low_steps, ring,
              istate, fstate):
    """Advance the grid ``n_steps`` steps; all loop state is mutated in place.

    Returns (status, t_fail).  ``out`` receives one row per ``dec`` steps:
    [t, (v_osc, i_L, scale, i_fa, p)*n_u, va, vb, vc, rms, i_pv_a, p_pv,
    p_load, freq].
    """
    n_states = 5 * n_u + 9
    dy = np.empty(n_states)
    k2 = np.empty(n_states)
    k3 = np.empty(n_states)
    k4 = np.empty(n_states)
    yt = np.empty(n_states)
    ib = 5 * n_u
    ifl = ib + 3
    ipv = ib + 6

    nwin = len(ring)
    low_needed = int(round(0.02 / dt))
    nev = len(ev_step)
    lockout = 0.1 * v_nom_rms * math.sqrt(2.0)

    n0 = istate[I_NDONE]
    for n in range(n0, n0 + n_steps):
        t = n * dt

        # scheduled events, aligned to this step boundary
        while istate[I_IEV] < nev and ev_step[istate[I_IEV]] == n:
            j = istate[I_IEV]
            kd = ev_kind[j]
            if kd == 0:
                fstate[F_LOADP] = ev_val[j]
            elif kd == 1:
                fstate[F_LOADP] = fstate[F_LOADP] + ev_val[j]
            elif kd == 2:
                istate[I_FAULT_ON] = 1
                istate[I_FAULT_CLR] = 0
                istate[I_FPH0] = 1
                istate[I_FPH1] = 1
                istate[I_FPH2] = 1
                fstate[F_RFAULT] = 1.0 / ev_val[j]
            elif kd == 3:
                istate[I_FAULT_CLR] = 1
            elif kd == 4:
                istate[I_PV_CONN] = 0
            elif kd == 5:
                istate[I_PV_CONN] = 1
            istate[I_IEV] = j + 1
        g_load = fstate[F_LOADP] / (3.0 * v_nom_rms * v_nom_rms)

        # breaker: each cleared phase opens at its next current zero
        if istate[I_FAULT_CLR] == 1:
            nopen = 0
            for ph in range(3):
                if istate[I_FPH0 + ph] == 1:
                    cur = y[ifl + ph]
                    prev = fstate[F_PIFL0 + ph]
                    if cur == 0.0 or (prev < 0.0) != (cur < 0.0):
                        istate[I_FPH0 + ph] = 0
                        y[ifl + ph] = 0.0
                if istate[I_FPH0 + ph] == 0:
                    nopen += 1
            if nopen == 3:
                istate[I_FAULT_ON] = 0
                istate[I_FAULT_CLR] = 0
        fstate[F_PIFL0] = y[ifl]
        fstate[F_PIFL1] = y[ifl + 1]
        fstate[F_PIFL2] = y[ifl + 2]

        va = y[ib]
        vb = y[ib + 1]
        vc = y[ib + 2]

        # bus phase-a RMS over one fundamental period
        x2 = va * va
        if istate[I_RCOUNT] < nwin:
            ring[istate[I_RIDX]] = x2
            fstate[F_RSUM] += x2
            istate[I_RCOUNT] += 1
        else:
            fstate[F_RSUM] += x2 - ring[istate[I_RIDX]]
            ring[istate[I_RIDX]] = x2
        istate[I_RIDX] += 1
        if istate[I_RIDX] == nwin:
            istate[I_RIDX] = 0
        rms = math.sqrt(max(fstate[F_RSUM], 0.0) / istate[I_RCOUNT])

        # voltage recovery loop per unit (terminal == bus in the lumped model)
        for k in range(n_u):
            if guard_en == 1:
                if rms < 0.5 * v_nom_rms:
                    low_steps[k] += 1
                    if low_steps[k] > low_needed:
                        frozen[k] = 1
                else:
                    low_steps[k] = 0
                    if frozen[k] == 1 and rms > 0.9 * v_nom_rms:
                        integ[k] = 0.0
                        frozen[k] = 0
            err = v_nom_rms - rms
            unsat = 1.0 + kp * err + integ[k]
            if frozen[k] == 0:
                if not ((unsat >= smax and err > 0.0) or (unsat <= smin and err < 0.0)):
                    integ[k] += ki * err * dt
                    if integ[k] > smax - 1.0:
                        integ[k] = smax - 1.0
                    if integ[k] < smin - 1.0:
                        integ[k] = smin - 1.0
            s = 1.0 + kp * err + integ[k]
            if s > smax:
                s = smax
            if s < smin:
                s = smin
            scales[k] = s

        # PV reference locked to the bus-voltage angle; relays for switched mode
        ir_a = 0.0
        ir_b = 0.0
        ir_c = 0.0
        if pv_mode != PV_NONE:
            v_al = SQ23 * (va - 0.5 * vb - 0.5 * vc)
            v_be = SQ23 * SH3 * (vb - vc)
            mag = math.sqrt(v_al * v_al + v_be * v_be)
            vpk = SQ23 * mag
            if istate[I_PV_CONN] == 1 and pv_p > 0.0 and vpk > lockout:
                ipk = 2.0 * pv_p / (3.0 * vpk)
                ga = SQ32 * ipk / mag
                ra = ga * v_al
                rb = ga * v_be
                ir_a = SQ23 * ra
                ir_b = SQ23 * (-0.5 * ra + SH3 * rb)
                ir_c = SQ23 * (-0.5 * ra - SH3 * rb)
            if pv_mode == PV_AVERAGED:
                fstate[F_INJ0] = ir_a
                fstate[F_INJ1] = ir_b
                fstate[F_INJ2] = ir_c
            else:
                for ph in range(3):
                    im = y[ipv + ph]
                    ir = ir_a if ph == 0 else (ir_b if ph == 1 else ir_c)
                    if im < ir - pv_band:
                        fstate[F_LEG0 + ph] = 1.0
                    elif im > ir + pv_band:
                        fstate[F_LEG0 + ph] = -1.0
                if istate[I_PV_CONN] == 0:
                    y[ipv] = 0.0
                    y[ipv + 1] = 0.0
                    y[ipv + 2] = 0.0

        leg_a = 0.0
        leg_b = 0.0
        leg_c = 0.0
        if pv_mode == PV_SWITCHED and istate[I_PV_CONN] == 1:
            leg_a = fstate[F_LEG0] * 0.5 * pv_vdc
            leg_b = fstate[F_LEG1] * 0.5 * pv_vdc
            leg_c = fstate[F_LEG2] * 0.5 * pv_vdc

        # rising-zero-crossing frequency estimate on bus phase a
        # (F_PREV_VA is seeded from the initial state, so the strict < 0
        # test cannot fire on a phantom first sample)
        prev_va = fstate[F_PREV_VA]
        if prev_va < 0.0 and va >= 0.0:
            frac = -prev_va / (va - prev_va)
            tc = (t - dt) + frac * dt
            if fstate[F_LAST_CROSS] >= 0.0:
                per = tc - fstate[F_LAST_CROSS]
                if per > 1e-6:
                    fstate[F_FREQ] = 1.0 / per
            fstate[F_LAST_CROSS] = tc
        fstate[F_PREV_VA] = va

        # decimated trace row
        if n % dec == 0:
            row = out[istate[I_IREC]]
            row[0] = t
            for k in range(n_u):
                b = 5 * k
                row[1 + 5 * k] = y[b]
                row[2 + 5 * k] = y[b + 1]
                row[3 + 5 * k] = scales[k]
                row[4 + 5 * k] = y[b + 2]
                row[5 + 5 * k] = va * y[b + 2] + vb * y[b + 3] + vc * y[b + 4]
            c0 = 1 + 5 * n_u
            row[c0] = va
            row[c0 + 1] = vb
            row[c0 + 2] = vc
            row[c0 + 3] = rms
            if pv_mode == PV_SWITCHED:
                pa = y[ipv]
                pb = y[ipv + 1]
                pc = y[ipv + 2]
            else:
                pa = fstate[F_INJ0]
                pb = fstate[F_INJ1]
                pc = fstate[F_INJ2]
            row[c0 + 4] = pa
            row[c0 + 5] = va * pa + vb * pb + vc * pc
            row[c0 + 6] = g_load * (va * va + vb * vb + vc * vc)
            row[c0 + 7] = fstate[F_FREQ]
            istate[I_IREC] += 1

        fault_on = istate[I_FAULT_ON]
        fph0 = istate[I_FPH0]
        fph1 = istate[I_FPH1]
        fph2 = istate[I_FPH2]
        inj_a = fstate[F_INJ0]
        inj_b = fstate[F_INJ1]
        inj_c = fstate[F_INJ2]
        r_fault = fstate[F_RFAULT]

        _deriv(y, dy, n_u, c_osc, l_osc, rho, sigma, phi, i_gain, emf_gain, w0l,
               r_f, l_f, scales, c_bus, g_load,
               fault_on, fph0, fph1, fph2, r_fault, l_fault,
               pv_mode, inj_a, inj_b, inj_c, leg_a, leg_b, leg_c, r_pv, l_pv)
        if use_rk4 == 1:
            for i in range(n_states):
                yt[i] = y[i] + 0.5 * dt * dy[i]
            _deriv(yt, k2, n_u, c_osc, l_osc, rho, sigma, phi, i_gain, emf_gain, w0l,
                   r_f, l_f, scales, c_bus, g_load,
                   fault_on, fph0, fph1, fph2, r_fault, l_fault,
                   pv_mode, inj_a, inj_b, inj_c, leg_a, leg_b, leg_c, r_pv, l_pv)
            for i in range(n_states):
                yt[i] = y[i] + 0.5 * dt * k2[i]
            _deriv(yt, k3, n_u, c_osc, l_osc, rho, sigma, phi, i_gain, emf_gain, w0l,
                   r_f, l_f, scales, c_bus, g_load,
                   fault_on, fph0, fph1, fph2, r_fault, l_fault,
                   pv_mode, inj_a, inj_b, inj_c, leg_a, leg_b, leg_c, r_pv, l_pv)
            for i in range(n_states):
                yt[i] = y[i] + dt * k3[i]
            _deriv(yt, k4, n_u, c_osc, l_osc, rho, sigma, phi, i_gain, emf_gain, w0l,
                   r_f, l_f, scales, c_bus, g_load,
                   fault_on, fph0, fph1, fph2, r_fault, l_fault,
                   pv_mode, inj_a, inj_b, inj_c, leg_a, leg_b, leg_c, r_pv, l_pv)
            for i in range(n_states):
                y[i] = y[i] + dt / 6.0 * (dy[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        else:
            for i in range(n_states):
                y[i] = y[i] + dt * dy[i]

        for i in range(n_states):
            if abs(y[i]) > DIVERGENCE_LIMIT or np.isnan(y[i]):
                istate[I_NDONE] = n + 1
                return STATUS_DIVERGED, t
        istate[I_NDONE] = n + 1

    return STATUS_OK, 0.0
