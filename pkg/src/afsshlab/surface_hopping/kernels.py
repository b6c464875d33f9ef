"""Compiled inner loops for single trajectories.

Every function here sticks to the numpy subset numba understands, so the same
source runs compiled or interpreted (see ``afsshlab._accel``).  Conventions:

* adiabat 0 is the lower surface; ``sgn = +1`` on it and ``-1`` on the upper one;
* ``c`` holds the adiabatic amplitudes ``(c_lower, c_upper)``;
* the bath enters the electronic problem only through ``X = g.x``, so the
  diabatic gap is ``delta = dG + lam + X`` and the derivative coupling is
  ``vc g / (delta^2 + 4 vc^2)``, always parallel to ``g``.
"""

from __future__ import annotations

import math

import numpy as np

from .._accel import njit

# counters layout
N_HOPS, N_FRUSTRATED, N_UP_PROPOSED, N_UP_ACCEPTED, N_DOWN_PROPOSED, N_COLLAPSES, ABORT_STEP, N_HOP_LOGGED, N_COLLAPSE_LOGGED = range(9)
N_COUNTERS = 9
# hop log columns
HOP_TIME, HOP_COORD, HOP_FROM, HOP_TO, HOP_OUTCOME, HOP_DE, HOP_KPAR = range(7)
HOP_COLUMNS = 7
OUTCOME_HOPPED, OUTCOME_FRUSTRATED, OUTCOME_REVERSED = 0, 1, 2

SCHEME_SPLIT, SCHEME_VERLET = 0, 1
DECO_NONE, DECO_TAU, DECO_AFSSH = 0, 1, 2
WEIGHT_POPULATION, WEIGHT_HALF_PLUS = 0, 1


@njit(nogil=True)
def gap_terms(offset, vc, coord):
    """Diabatic gap ``delta`` and adiabatic splitting ``root`` at ``X = coord``."""
    delta = offset + coord
    root = math.sqrt(delta * delta + 4.0 * vc * vc)
    return delta, root


@njit(nogil=True)
def nac_velocity(vc, delta, g_dot_p, mass):
    """v . d_12 with the exact two-state coupling."""
    return vc * g_dot_p / (mass * (delta * delta + 4.0 * vc * vc))


@njit(nogil=True)
def electronic_step(c, gap0, gap1, vd0, vd1, dt, n_sub, hbar, active):
    """RK4 substeps of the adiabatic TDSE; returns the accumulated hop probability.

    Energies enter as +-gap/2 (the mean is a global phase).  ``gap`` and
    ``v.d`` are interpolated linearly across the step.  The complex
    arithmetic is spelled out in real and imaginary parts for speed.
    """
    h = dt / n_sub
    xr = c[0].real
    xi = c[0].imag
    yr = c[1].real
    yi = c[1].imag
    dw = 0.5 * (gap1 - gap0) / (hbar * n_sub)
    w_start = 0.5 * gap0 / hbar
    dv = (vd1 - vd0) / n_sub
    prob = 0.0
    for k in range(n_sub):
        w0 = w_start + k * dw
        wm = w0 + 0.5 * dw
        w1 = w0 + dw
        v0 = vd0 + k * dv
        vm = v0 + 0.5 * dv
        v1 = v0 + dv
        # dc0/dt = +i w c0 - v c1 ; dc1/dt = -i w c1 + v c0
        k1xr = -w0 * xi - v0 * yr
        k1xi = w0 * xr - v0 * yi
        k1yr = w0 * yi + v0 * xr
        k1yi = -w0 * yr + v0 * xi
        axr = xr + 0.5 * h * k1xr
        axi = xi + 0.5 * h * k1xi
        ayr = yr + 0.5 * h * k1yr
        ayi = yi + 0.5 * h * k1yi
        k2xr = -wm * axi - vm * ayr
        k2xi = wm * axr - vm * ayi
        k2yr = wm * ayi + vm * axr
        k2yi = -wm * ayr + vm * axi
        axr = xr + 0.5 * h * k2xr
        axi = xi + 0.5 * h * k2xi
        ayr = yr + 0.5 * h * k2yr
        ayi = yi + 0.5 * h * k2yi
        k3xr = -wm * axi - vm * ayr
        k3xi = wm * axr - vm * ayi
        k3yr = wm * ayi + vm * axr
        k3yi = -wm * ayr + vm * axi
        axr = xr + h * k3xr
        axi = xi + h * k3xi
        ayr = yr + h * k3yr
        ayi = yi + h * k3yi
        k4xr = -w1 * axi - v1 * ayr
        k4xi = w1 * axr - v1 * ayi
        k4yr = w1 * ayi + v1 * axr
        k4yi = -w1 * ayr + v1 * axi
        h6 = h / 6.0
        xr += h6 * (k1xr + 2.0 * k2xr + 2.0 * k3xr + k4xr)
        xi += h6 * (k1xi + 2.0 * k2xi + 2.0 * k3xi + k4xi)
        yr += h6 * (k1yr + 2.0 * k2yr + 2.0 * k3yr + k4yr)
        yi += h6 * (k1yi + 2.0 * k2yi + 2.0 * k3yi + k4yi)
        # population flux into the inactive state (Tully's b_kl); Re(c1* c0) = yr xr + yi xi
        re = xr * yr + xi * yi
        if active == 0:
            flux = 2.0 * v1 * re
            pop = xr * xr + xi * xi
        else:
            flux = -2.0 * v1 * re
            pop = yr * yr + yi * yi
        if pop > 1e-12 and flux > 0.0:
            prob += flux * h / pop
    c[0] = complex(xr, xi)
    c[1] = complex(yr, yi)
    return min(prob, 1.0)


@njit(nogil=True)
def nuclear_step(x, p, g, mw2, xc, cosw, sinw, momega, mass, offset, vc, sgn, dt, scheme, coord):
    """Advance ``(x, p)`` one step on the active adiabat; returns ``(g.x, g.p)`` afterwards.

    ``scheme == SCHEME_SPLIT``: the mean of the two diabats is harmonic and is
    rotated exactly about its centre ``xc``; only the splitting force
    ``sgn (delta / root) g / 2`` is applied as half kicks.
    ``scheme == SCHEME_VERLET``: plain velocity Verlet on the full force.
    """
    n = x.shape[0]
    delta, root = gap_terms(offset, vc, coord)
    if scheme == SCHEME_SPLIT:
        # half kick fused with the exact rotation; here sinw = sin(w dt)/(m w), momega = m w sin(w dt)
        a = 0.25 * dt * sgn * delta / root
        new_coord = 0.0
        for j in range(n):
            dx = x[j] - xc[j]
            pj = p[j] + a * g[j]
            x[j] = xc[j] + dx * cosw[j] + pj * sinw[j]
            p[j] = pj * cosw[j] - dx * momega[j]
            new_coord += g[j] * x[j]
        delta, root = gap_terms(offset, vc, new_coord)
        a = 0.25 * dt * sgn * delta / root
        gp = 0.0
        for j in range(n):
            p[j] += a * g[j]
            gp += g[j] * p[j]
        return new_coord, gp
    b = 0.5 * sgn * delta / root
    new_coord = 0.0
    for j in range(n):
        f = -(mw2[j] * x[j] + 0.5 * g[j]) + b * g[j]
        p[j] += 0.5 * dt * f
        x[j] += dt * p[j] / mass
        new_coord += g[j] * x[j]
    delta, root = gap_terms(offset, vc, new_coord)
    b = 0.5 * sgn * delta / root
    gp = 0.0
    for j in range(n):
        f = -(mw2[j] * x[j] + 0.5 * g[j]) + b * g[j]
        p[j] += 0.5 * dt * f
        gp += g[j] * p[j]
    return new_coord, gp


@njit(nogil=True)
def rescale_or_reflect(x, p, g, gnorm, mw2, mass, offset, vc, coord, active, target):
    """Energy-conserving hop along g, or the force-direction reversal test on a frustrated one.

    Returns ``(outcome, dE, kinetic energy along g before the attempt)``.
    """
    n = p.shape[0]
    delta, root = gap_terms(offset, vc, coord)
    d_e = root if target == 1 else -root
    ppar = 0.0
    for j in range(n):
        ppar += p[j] * g[j]
    ppar /= gnorm
    kpar = 0.5 * ppar * ppar / mass
    if kpar >= d_e:
        new_par = math.sqrt(ppar * ppar - 2.0 * mass * d_e)
        if ppar < 0.0:
            new_par = -new_par
        shift = (new_par - ppar) / gnorm
        for j in range(n):
            p[j] += shift * g[j]
        return OUTCOME_HOPPED, d_e, kpar
    # frustrated: reverse p_par iff the target force along g opposes it
    sgn_t = 1.0 if target == 0 else -1.0
    harm = 0.0
    for j in range(n):
        harm += mw2[j] * x[j] * g[j]
    f_par = (-(harm + 0.5 * gnorm * gnorm) + sgn_t * 0.5 * delta / root * gnorm * gnorm) / gnorm
    if f_par * ppar < 0.0:
        shift = -2.0 * ppar / gnorm
        for j in range(n):
            p[j] += shift * g[j]
        return OUTCOME_REVERSED, d_e, kpar
    return OUTCOME_FRUSTRATED, d_e, kpar


@njit(nogil=True)
def collapse(c, active):
    """Move all weight onto the active amplitude, keeping its phase."""
    a = c[active]
    mag = abs(a)
    if mag > 0.0:
        c[active] = a / mag
    else:
        c[active] = 1.0
    c[1 - active] = 0.0


@njit(nogil=True)
def moment_step(mom, delta, root, gnorm, c, active, mass, dt, weight_mode):
    """Advance the inactive-state moments (R, P) projected on g; returns the force difference.

    The difference F_inactive - F_active is ``-+ (delta/root) g`` and never
    leaves the g direction, so the moments are scalars along g-hat.
    """
    inactive = 1 - active
    # lower minus upper force is +(delta/root) g
    dforce = (delta / root) * gnorm
    if active == 0:
        dforce = -dforce
    pop = c[inactive].real ** 2 + c[inactive].imag ** 2
    if weight_mode == WEIGHT_POPULATION:
        w = pop
    else:
        w = 0.5 * (pop + 1.0)
    drive = dforce * w
    mom[0] += dt * mom[1] / mass + 0.5 * dt * dt * drive / mass
    mom[1] += dt * drive
    return dforce


@njit(nogil=True)
def record_energy(x, p, mw2, mass, offset, vc, coord, active):
    n = x.shape[0]
    kin = 0.0
    pot = 0.0
    for j in range(n):
        kin += p[j] * p[j]
        pot += mw2[j] * x[j] * x[j]
    delta, root = gap_terms(offset, vc, coord)
    sgn = 1.0 if active == 0 else -1.0
    return 0.5 * kin / mass + 0.5 * pot + 0.5 * delta - 0.5 * sgn * root


@njit(nogil=True)
def run_trajectory(
    x, p, c, active, mom, g, gnorm, mw2, xc, cosw, sinw, momega, mass, hbar, offset, vc,
    dt, n_steps, stride, n_sub, scheme, deco_mode, tau, weight_mode, reset_rule, uniforms,
    rec_active, rec_c, rec_gap, rec_energy, hop_log, collapse_log, counters,
):
    """Propagate one trajectory in place; ``counters[ABORT_STEP] >= 0`` flags a norm failure."""
    n = x.shape[0]
    coord = 0.0
    gp = 0.0
    for j in range(n):
        coord += g[j] * x[j]
        gp += g[j] * p[j]
    counters[ABORT_STEP] = -1
    rec = 0
    rec_active[0] = active
    rec_c[0, 0] = c[0]
    rec_c[0, 1] = c[1]
    rec_gap[0] = offset + coord
    rec_energy[0] = record_energy(x, p, mw2, mass, offset, vc, coord, active)
    hop_cap = hop_log.shape[0]
    col_cap = collapse_log.shape[0]
    for step in range(n_steps):
        t_new = (step + 1) * dt
        delta0, root0 = gap_terms(offset, vc, coord)
        vd0 = nac_velocity(vc, delta0, gp, mass)
        sgn = 1.0 if active == 0 else -1.0
        coord, gp = nuclear_step(x, p, g, mw2, xc, cosw, sinw, momega, mass, offset, vc, sgn, dt, scheme, coord)
        delta1, root1 = gap_terms(offset, vc, coord)
        vd1 = nac_velocity(vc, delta1, gp, mass)
        prob = electronic_step(c, root0, root1, vd0, vd1, dt, n_sub, hbar, active)
        norm = c[0].real ** 2 + c[0].imag ** 2 + c[1].real ** 2 + c[1].imag ** 2
        if abs(norm - 1.0) > 1e-6:
            counters[ABORT_STEP] = step
            return rec
        if uniforms[step, 0] < prob:
            target = 1 - active
            if target == 1:
                counters[N_UP_PROPOSED] += 1
            else:
                counters[N_DOWN_PROPOSED] += 1
            outcome, d_e, kpar = rescale_or_reflect(x, p, g, gnorm, mw2, mass, offset, vc, coord, active, target)
            k = counters[N_HOP_LOGGED]
            if k < hop_cap:
                hop_log[k, HOP_TIME] = t_new
                hop_log[k, HOP_COORD] = coord
                hop_log[k, HOP_FROM] = active
                hop_log[k, HOP_TO] = target
                hop_log[k, HOP_OUTCOME] = outcome
                hop_log[k, HOP_DE] = d_e
                hop_log[k, HOP_KPAR] = kpar
                counters[N_HOP_LOGGED] = k + 1
            if outcome == OUTCOME_HOPPED:
                counters[N_HOPS] += 1
                if target == 1:
                    counters[N_UP_ACCEPTED] += 1
                active = target
                mom[0] = 0.0
                mom[1] = 0.0
            else:
                counters[N_FRUSTRATED] += 1
            gp = 0.0
            for j in range(n):
                gp += g[j] * p[j]
        if deco_mode == DECO_TAU:
            if uniforms[step, 1] < dt / tau:
                collapse(c, active)
                kc = counters[N_COLLAPSE_LOGGED]
                if kc < col_cap:
                    collapse_log[kc] = t_new
                    counters[N_COLLAPSE_LOGGED] = kc + 1
                counters[N_COLLAPSES] += 1
        elif deco_mode == DECO_AFSSH:
            dforce = moment_step(mom, delta1, root1, gnorm, c, active, mass, dt, weight_mode)
            rate = dforce * mom[0] / (2.0 * hbar)
            if rate > 0.0 and uniforms[step, 1] < rate * dt:
                collapse(c, active)
                mom[0] = 0.0
                mom[1] = 0.0
                kc = counters[N_COLLAPSE_LOGGED]
                if kc < col_cap:
                    collapse_log[kc] = t_new
                    counters[N_COLLAPSE_LOGGED] = kc + 1
                counters[N_COLLAPSES] += 1
            elif reset_rule and rate < 0.0 and uniforms[step, 1] < -rate * dt:
                # moments drifting apart without collapse pressure are discarded
                mom[0] = 0.0
                mom[1] = 0.0
        if (step + 1) % stride == 0:
            rec += 1
            rec_active[rec] = active
            rec_c[rec, 0] = c[0]
            rec_c[rec, 1] = c[1]
            rec_gap[rec] = offset + coord
            rec_energy[rec] = record_energy(x, p, mw2, mass, offset, vc, coord, active)
    return rec
