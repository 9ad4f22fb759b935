"""Compiled right-hand side and fixed-step RK4 loop for the full system.

Everything here works on flat float arrays so that numba can compile it;
the physics lives in the per-module scalar kernels imported below.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from ..controllers import dov_law, pi_continuous, pi_discrete, saturate
from ..frames import pll_rate
from ..machine import motor_currents, motor_rates, rotor_rates
from ..network import branch_rates, node_rates
from ..statcom import _current_derivs, _dc_link_deriv

# parameter vector
P_RG, P_LG, P_CBUS, P_WG = 0, 1, 2, 3
P_RS, P_LS, P_WS, P_CDC, P_RLOSS, P_VDC_FLOOR, P_ST_ON = 4, 5, 6, 7, 8, 9, 10
P_KIND = 11
P_KP_AC, P_KI_AC, P_KP_DC, P_KI_DC = 12, 13, 14, 15
P_KP_ID, P_KI_ID, P_KP_IQ, P_KI_IQ = 16, 17, 18, 19
P_IDMAX, P_IQMAX, P_VINMAX, P_MMAX = 20, 21, 22, 23
P_TAUF, P_VREF, P_VDCREF, P_TAUV = 24, 25, 26, 27
P_PLL_KP, P_PLL_KI, P_PLL_WNOM, P_DISCRETE = 28, 29, 30, 31
N_PAR = 32

# motor table columns
M_COUNT, M_RS, M_RR, M_LSS, M_LRR, M_LM, M_J, M_PP, M_TC, M_TQ = range(10)
N_MPAR = 10

# state vector
X_ID, X_IQ, X_VDC = 0, 1, 2
X_DELTA, X_PLLI = 3, 4
X_AC, X_DC, X_INT_ID, X_INT_IQ = 5, 6, 7, 8
X_FD, X_FQ = 9, 10
X_VMD, X_VMQ = 11, 12
X_IGD, X_IGQ, X_VPD, X_VPQ = 13, 14, 15, 16
X_MOT = 17
N_MSTATE = 5

# per-evaluation outputs
O_VMAG, O_VD, O_VQ, O_ID, O_IQ, O_VDC, O_PS, O_QS = 0, 1, 2, 3, 4, 5, 6, 7
O_SPEED, O_TORQUE, O_VCD, O_VCQ = 8, 9, 10, 11
O_IREF_D, O_IREF_Q, O_SAT, O_PLL_CLAMP = 12, 13, 14, 15
O_IGD, O_IGQ, O_VSD, O_VSQ, O_VCSD, O_VCSQ = 16, 17, 18, 19, 20, 21
N_OUT = 22

# held discrete command
H_VCD, H_VCQ, H_IREF_D, H_IREF_Q, H_SAT, H_DD, H_DQ = range(7)
N_HOLD = 7

KIND_DOUBLE_LOOP, KIND_DOV, KIND_PROPOSED = 0, 1, 2

STATUS_OK, STATUS_DC_COLLAPSE, STATUS_BLOWUP = 0, 1, 2


def n_states(n_motors: int) -> int:
    return X_MOT + N_MSTATE * n_motors


@njit(cache=True)
def _frame_quantities(x, par):
    """Measured PCC voltage and STATCOM current expressed in the PLL frame."""
    c = math.cos(x[X_DELTA])
    s = math.sin(x[X_DELTA])
    vdl = x[X_VMD] * c + x[X_VMQ] * s
    vql = -x[X_VMD] * s + x[X_VMQ] * c
    idm = x[X_ID] * c + x[X_IQ] * s
    iqm = -x[X_ID] * s + x[X_IQ] * c
    return c, s, vdl, vql, idm, iqm


@njit(cache=True)
def _continuous_command(x, par, vdl, vql, idm, iqm, dx):
    """Controller law with continuous integrators; writes integrator rates into dx."""
    vmag = math.hypot(vdl, vql)
    vdc = x[X_VDC]
    iq_ref, r_ac = pi_continuous(par[P_KP_AC], par[P_KI_AC], x[X_AC], vmag - par[P_VREF],
                                 -par[P_IQMAX], par[P_IQMAX])
    id_ref, r_dc = pi_continuous(par[P_KP_DC], par[P_KI_DC], x[X_DC], vdc - par[P_VDCREF],
                                 -par[P_IDMAX], par[P_IDMAX])
    dx[X_AC] = r_ac
    dx[X_DC] = r_dc
    xs = par[P_WS] * par[P_LS]
    kind = int(par[P_KIND])
    r_id = 0.0
    r_iq = 0.0
    if kind == KIND_DOUBLE_LOOP:
        u_d, r_id = pi_continuous(par[P_KP_ID], par[P_KI_ID], x[X_INT_ID], id_ref - idm,
                                  -par[P_VINMAX], par[P_VINMAX])
        u_q, r_iq = pi_continuous(par[P_KP_IQ], par[P_KI_IQ], x[X_INT_IQ], iq_ref - iqm,
                                  -par[P_VINMAX], par[P_VINMAX])
        vcd = u_d - xs * iqm + vdl
        vcq = u_q + xs * idm
    else:
        vcd, vcq = dov_law(id_ref, iq_ref, vdl, par[P_RS], xs)
        if kind == KIND_PROPOSED:
            dd = (id_ref - x[X_FD]) / par[P_TAUF]
            dq = (iq_ref - x[X_FQ]) / par[P_TAUF]
            vcd = vcd + par[P_LS] * dd
            vcq = vcq + par[P_LS] * dq
            dx[X_FD] = dd
            dx[X_FQ] = dq
    vcd, vcq, sat = saturate(vcd, vcq, vdc, par[P_MMAX])
    if sat:
        # hold inner integrators that would push the command further out
        if r_id * vcd > 0.0:
            r_id = 0.0
        if r_iq * vcq > 0.0:
            r_iq = 0.0
    dx[X_INT_ID] = r_id
    dx[X_INT_IQ] = r_iq
    return vcd, vcq, id_ref, iq_ref, sat


@njit(cache=True)
def discrete_update(x, par, hold, dt):
    """Sample-and-hold controller update at the start of a step."""
    c, s, vdl, vql, idm, iqm = _frame_quantities(x, par)
    vmag = math.hypot(vdl, vql)
    vdc = x[X_VDC]
    iq_ref, x[X_AC] = pi_discrete(par[P_KP_AC], par[P_KI_AC], x[X_AC], vmag - par[P_VREF], dt,
                                  -par[P_IQMAX], par[P_IQMAX])
    id_ref, x[X_DC] = pi_discrete(par[P_KP_DC], par[P_KI_DC], x[X_DC], vdc - par[P_VDCREF], dt,
                                  -par[P_IDMAX], par[P_IDMAX])
    xs = par[P_WS] * par[P_LS]
    kind = int(par[P_KIND])
    if kind == KIND_DOUBLE_LOOP:
        u_d, x[X_INT_ID] = pi_discrete(par[P_KP_ID], par[P_KI_ID], x[X_INT_ID], id_ref - idm, dt,
                                       -par[P_VINMAX], par[P_VINMAX])
        u_q, x[X_INT_IQ] = pi_discrete(par[P_KP_IQ], par[P_KI_IQ], x[X_INT_IQ], iq_ref - iqm, dt,
                                       -par[P_VINMAX], par[P_VINMAX])
        vcd = u_d - xs * iqm + vdl
        vcq = u_q + xs * idm
    else:
        vcd, vcq = dov_law(id_ref, iq_ref, vdl, par[P_RS], xs)
        if kind == KIND_PROPOSED:
            alpha = dt / (par[P_TAUF] + dt)
            hold[H_DD] += alpha * ((id_ref - x[X_FD]) / dt - hold[H_DD])
            hold[H_DQ] += alpha * ((iq_ref - x[X_FQ]) / dt - hold[H_DQ])
            x[X_FD] = id_ref
            x[X_FQ] = iq_ref
            vcd = vcd + par[P_LS] * hold[H_DD]
            vcq = vcq + par[P_LS] * hold[H_DQ]
    vcd, vcq, sat = saturate(vcd, vcq, vdc, par[P_MMAX])
    hold[H_VCD] = vcd
    hold[H_VCQ] = vcq
    hold[H_IREF_D] = id_ref
    hold[H_IREF_Q] = iq_ref
    hold[H_SAT] = 1.0 if sat else 0.0


@njit(cache=True)
def rhs(x, emf, par, mot, hold, dx, out):
    """Time derivative of the full state; fills ``out`` with algebraic outputs."""
    dx[:] = 0.0
    c, s, vdl, vql, idm, iqm = _frame_quantities(x, par)
    st_on = par[P_ST_ON] > 0.5

    if par[P_DISCRETE] > 0.5:
        vcd = hold[H_VCD]
        vcq = hold[H_VCQ]
        id_ref = hold[H_IREF_D]
        iq_ref = hold[H_IREF_Q]
        sat = hold[H_SAT] > 0.5
    else:
        vcd, vcq, id_ref, iq_ref, sat = _continuous_command(x, par, vdl, vql, idm, iqm, dx)
    # converter voltage back to the network frame
    vcsd = vcd * c - vcq * s
    vcsq = vcd * s + vcq * c

    w = par[P_WG]
    lg = par[P_LG]
    rg = par[P_RG]
    ls = par[P_LS]
    rs = par[P_RS]
    ws = par[P_WS]
    isd = x[X_ID] if st_on else 0.0
    isq = x[X_IQ] if st_on else 0.0

    # motor branch terms: total current and, for the quasi-static node, the
    # part of sum(n * di/dt) that does not depend on the node voltage
    n_mot = mot.shape[0]
    imd_tot = 0.0
    imq_tot = 0.0
    y_mot = 0.0
    b_d = 0.0
    b_q = 0.0
    for k in range(n_mot):
        base = X_MOT + N_MSTATE * k
        lsd = x[base]
        lsq = x[base + 1]
        lrd = x[base + 2]
        lrq = x[base + 3]
        wr = x[base + 4]
        cnt = mot[k, M_COUNT]
        l_ss = mot[k, M_LSS]
        l_rr = mot[k, M_LRR]
        l_m = mot[k, M_LM]
        i_sd, i_sq, i_rd, i_rq = motor_currents(lsd, lsq, lrd, lrq, l_ss, l_rr, l_m)
        imd_tot += cnt * i_sd
        imq_tot += cnt * i_sq
        det = l_ss * l_rr - l_m * l_m
        drd, drq = rotor_rates(lrd, lrq, i_rd, i_rq, wr, mot[k, M_RR], w)
        g = l_rr / det
        y_mot += cnt * g
        b_d += cnt * (g * (-mot[k, M_RS] * i_sd + w * lsq) - l_m / det * drd)
        b_q += cnt * (g * (-mot[k, M_RS] * i_sq - w * lsd) - l_m / det * drq)

    if par[P_CBUS] > 0.0:
        igd = x[X_IGD]
        igq = x[X_IGQ]
        vd = x[X_VPD]
        vq = x[X_VPQ]
        dx[X_IGD], dx[X_IGQ] = branch_rates(igd, igq, emf, 0.0, vd, vq, rg, lg, w)
        dx[X_VPD], dx[X_VPQ] = node_rates(vd, vq, igd + isd - imd_tot, igq + isq - imq_tot,
                                          par[P_CBUS], w)
    else:
        igd = imd_tot - isd
        igq = imq_tot - isq
        num_d = (emf - rg * igd + w * lg * igq) / lg - b_d
        num_q = (-rg * igq - w * lg * igd) / lg - b_q
        den = 1.0 / lg + y_mot
        if st_on:
            num_d += (vcsd - rs * isd + ws * ls * isq) / ls
            num_q += (vcsq - rs * isq - ws * ls * isd) / ls
            den += 1.0 / ls
        vd = num_d / den
        vq = num_q / den

    for k in range(n_mot):
        base = X_MOT + N_MSTATE * k
        r = motor_rates(x[base], x[base + 1], x[base + 2], x[base + 3], x[base + 4], vd, vq,
                        mot[k, M_RS], mot[k, M_RR], mot[k, M_LSS], mot[k, M_LRR], mot[k, M_LM],
                        mot[k, M_J], mot[k, M_PP], mot[k, M_TC], mot[k, M_TQ], w)
        dx[base] = r[0]
        dx[base + 1] = r[1]
        dx[base + 2] = r[2]
        dx[base + 3] = r[3]
        dx[base + 4] = r[4]

    p_conv = 1.5 * (vcsd * isd + vcsq * isq)
    if st_on:
        dx[X_ID], dx[X_IQ] = _current_derivs(isd, isq, vcsd, vcsq, vd, vq, rs, ls, ws)
        dx[X_VDC] = _dc_link_deriv(x[X_VDC], p_conv, par[P_CDC], par[P_RLOSS])
    else:
        # nothing to regulate without the converter
        dx[X_AC] = 0.0
        dx[X_DC] = 0.0
        dx[X_INT_ID] = 0.0
        dx[X_INT_IQ] = 0.0
        dx[X_FD] = 0.0
        dx[X_FQ] = 0.0

    vq_pll = -vd * s + vq * c
    dw, r_pll, clamped = pll_rate(vq_pll, x[X_PLLI], par[P_PLL_KP], par[P_PLL_KI],
                                  par[P_PLL_WNOM])
    dx[X_DELTA] = dw
    dx[X_PLLI] = r_pll
    dx[X_VMD] = (vd - x[X_VMD]) / par[P_TAUV]
    dx[X_VMQ] = (vq - x[X_VMQ]) / par[P_TAUV]

    out[O_VMAG] = math.hypot(vd, vq)
    out[O_VD] = vd * c + vq * s
    out[O_VQ] = vq_pll
    out[O_ID] = isd * c + isq * s
    out[O_IQ] = -isd * s + isq * c
    out[O_VDC] = x[X_VDC]
    out[O_PS] = 1.5 * (vcsd * isd + vcsq * isq)
    out[O_QS] = 1.5 * (vcsd * isq - vcsq * isd)
    if n_mot > 0:
        wr0 = x[X_MOT + 4]
        i_sd, i_sq, _, _ = motor_currents(x[X_MOT], x[X_MOT + 1], x[X_MOT + 2], x[X_MOT + 3],
                                          mot[0, M_LSS], mot[0, M_LRR], mot[0, M_LM])
        out[O_SPEED] = wr0 / w
        out[O_TORQUE] = 1.5 * mot[0, M_PP] * (x[X_MOT] * i_sq - x[X_MOT + 1] * i_sd)
    out[O_VCD] = vcd
    out[O_VCQ] = vcq
    out[O_IREF_D] = id_ref
    out[O_IREF_Q] = iq_ref
    out[O_SAT] = 1.0 if sat else 0.0
    out[O_PLL_CLAMP] = 1.0 if clamped else 0.0
    out[O_IGD] = igd
    out[O_IGQ] = igq
    out[O_VSD] = vd
    out[O_VSQ] = vq
    out[O_VCSD] = vcsd
    out[O_VCSQ] = vcsq


@njit(cache=True)
def rk4_advance(x, emf, par, mot, hold, dt, k1, k2, k3, k4, tmp, out):
    """One classical RK4 step in place; returns False on a non-finite rate."""
    n = x.shape[0]
    rhs(x, emf, par, mot, hold, k1, out)
    for i in range(n):
        tmp[i] = x[i] + 0.5 * dt * k1[i]
    rhs(tmp, emf, par, mot, hold, k2, out)
    for i in range(n):
        tmp[i] = x[i] + 0.5 * dt * k2[i]
    rhs(tmp, emf, par, mot, hold, k3, out)
    for i in range(n):
        tmp[i] = x[i] + dt * k3[i]
    rhs(tmp, emf, par, mot, hold, k4, out)
    ok = True
    for i in range(n):
        inc = k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]
        if not math.isfinite(inc):
            ok = False
        x[i] = x[i] + dt / 6.0 * inc
    return ok


@njit(cache=True, nogil=True)
def simulate(x, emf, par, mot, hold, dt, decimation, log_vals, log_extra):
    """Integrate ``len(emf)`` steps in place.

    Row r of the logs holds step r*decimation.  Returns (status, step index
    of failure or -1, number of rows written).
    """
    n = x.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    out = np.zeros(N_OUT)
    scratch = np.empty(n)
    n_steps = emf.shape[0]
    discrete = par[P_DISCRETE] > 0.5
    st_on = par[P_ST_ON] > 0.5
    e0 = emf[0] if n_steps > 0 else 0.0
    if discrete:
        discrete_update(x, par, hold, dt)
    rhs(x, e0, par, mot, hold, scratch, out)
    for j in range(N_OUT):
        log_extra[0, j] = out[j]
    for j in range(n):
        log_vals[0, j] = x[j]
    rows = 1
    for step in range(n_steps):
        if discrete and step > 0:
            discrete_update(x, par, hold, dt)
        ok = rk4_advance(x, emf[step], par, mot, hold, dt, k1, k2, k3, k4, tmp, out)
        if not ok:
            return STATUS_BLOWUP, step, rows
        if st_on and not x[X_VDC] > par[P_VDC_FLOOR]:
            return STATUS_DC_COLLAPSE, step, rows
        if (step + 1) % decimation == 0:
            e_next = emf[step + 1] if step + 1 < n_steps else emf[step]
            rhs(x, e_next, par, mot, hold, scratch, out)
            for j in range(N_OUT):
                log_extra[rows, j] = out[j]
            for j in range(n):
                log_vals[rows, j] = x[j]
            rows += 1
    return STATUS_OK, -1, rows
