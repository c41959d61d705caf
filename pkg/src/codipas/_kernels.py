"""Hot loops: learning episodes, RK4 integration, logit iteration.

Everything here is written in the subset of Python/numpy that numba's
nopython mode accepts. :mod:`codipas.accel` loads a second copy of this module
and wraps every function with ``numba.njit``; the plain copy is the fallback.
Keep the functions free of Python objects, keyword arguments and exceptions
so both copies stay interchangeable. Errors are reported through an ``err``
buffer and a negative return value.
"""

import math

import numpy as np

# learning schemes
CRL0 = 0
CRL1 = 1
CRL2 = 2
RL2 = 3
RL3 = 4

# rate schedule families; a schedule row is (family, p1, p2, scale)
R1 = 0
R2 = 1
R3 = 2
R4 = 3
CONST = 4

# per-player float parameters: (epsilon, rl3_n, rl3_C, lambda_cap)
P_EPS = 0
P_N = 1
P_C = 2
P_CAP = 3

# error codes written to err[0]
ERR_STEP_BOUND = 1.0
ERR_RL3_RANGE = 2.0
ERR_NONFINITE = 3.0
ERR_ADJUSTED = 4.0

PROB_FLOOR = 1e-8

# dynamics systems
SYS_REPLICATOR = 0
SYS_ADJUSTED = 1
SYS_SMOOTH_BR = 2
SYS_COUPLED = 3
SYS_T1 = 4
SYS_T2 = 5

# dynamics float parameters: (epsilon, k1, k2, p2_adjusted, freeze_f, freeze_g, c)
D_EPS = 0
D_K1 = 1
D_K2 = 2
D_ADJ = 3
D_FREEZE_F = 4
D_FREEZE_G = 5
D_C = 6

RENORM_TOL = 1e-12


def rate(row, t):
    fam = int(row[0])
    if fam == R1:
        r = 1.0 / (t + 1.0)
    elif fam == R2:
        x = t + 2.0
        r = 1.0 / (x * math.log(x))
    elif fam == R3:
        x = t + 2.0
        lx = math.log(x)
        r = 1.0 / (math.sqrt(x) * lx * lx)
    elif fam == R4:
        r = (t + row[2]) ** (-row[1])
    else:
        r = row[1]
    return row[3] * r


def softmax_into(u, eps, out):
    mx = u[0]
    for i in range(1, u.shape[0]):
        if u[i] > mx:
            mx = u[i]
    s = 0.0
    for i in range(u.shape[0]):
        out[i] = math.exp((u[i] - mx) / eps)
        s += out[i]
    for i in range(u.shape[0]):
        out[i] /= s


def imitative_softmax_into(x, u, eps, out):
    # shift by the max over the support; zero-weight actions stay zero
    mx = -math.inf
    for i in range(u.shape[0]):
        if x[i] > 0.0 and u[i] > mx:
            mx = u[i]
    s = 0.0
    for i in range(u.shape[0]):
        if x[i] > 0.0:
            out[i] = x[i] * math.exp((u[i] - mx) / eps)
        else:
            out[i] = 0.0
        s += out[i]
    for i in range(u.shape[0]):
        out[i] /= s


def draw_action(x, w):
    acc = 0.0
    last = -1
    for i in range(x.shape[0]):
        if x[i] > 0.0:
            last = i
            acc += x[i]
            if w < acc:
                return i
    # w landed in the rounding gap above the cumulative sum
    return last


def player_step(scheme, sched, par, x, uh, a, u, t, tmp, err):
    """Apply one scheme update in place. Returns 0, or an error code."""
    lam = rate(sched[0], t)
    mu = rate(sched[1], t)
    k = x.shape[0]
    if scheme == CRL0 or scheme == RL2:
        lam = min(lam, par[P_CAP])
        step = lam * u
        if not (step >= 0.0 and step < 1.0):
            err[3] = step
            return ERR_STEP_BOUND
        for i in range(k):
            x[i] -= step * x[i]
        x[a] += step
        if scheme == CRL0:
            uh[a] += mu * (u - uh[a])
    elif scheme == CRL1 or scheme == CRL2:
        lam = min(lam, par[P_CAP])
        pa = x[a]
        if scheme == CRL1:
            softmax_into(uh, par[P_EPS], tmp)
        else:
            imitative_softmax_into(x, uh, par[P_EPS], tmp)
        for i in range(k):
            x[i] = (1.0 - lam) * x[i] + lam * tmp[i]
        uh[a] += mu / max(pa, PROB_FLOOR) * (u - uh[a])
    else:
        big_c = par[P_C]
        n = par[P_N]
        if not (u >= 0.0 and u <= big_c):
            err[3] = u
            return ERR_RL3_RANGE
        scale = big_c * (n + 1.0) / (n * big_c + u)
        for i in range(k):
            x[i] *= scale
        x[a] += u * scale
        s = 0.0
        for i in range(k):
            s += x[i]
        for i in range(k):
            x[i] /= s
    return 0


def run_block(base, c, noise_lo, noise_hi, has_noise, schemes, sched, par,
              f, g, u1, u2, t_start, nsteps, horizon, stride, w1, w2, wn,
              rec_t, rec_f, rec_g, rec_u1, rec_u2, rec_p1, rec_p2, pos, err):
    """Advance an episode by ``nsteps`` steps starting at step ``t_start``.

    ``w1``, ``w2``, ``wn`` hold one uniform variate per step for player 1's
    action, player 2's action and the payoff noise. Recorded rows are written
    from index ``pos``; returns the next free index, or -1 on a learner
    violation with ``err = (code, player, step, value)``.
    """
    tmp1 = np.empty(f.shape[0])
    tmp2 = np.empty(g.shape[0])
    for j in range(nsteps):
        t = t_start + j
        a1 = draw_action(f, w1[j])
        a2 = draw_action(g, w2[j])
        pay = base[a1, a2]
        if has_noise:
            pay += noise_lo + (noise_hi - noise_lo) * wn[j]
        pay2 = c - pay
        code = player_step(schemes[0], sched[0], par[0], f, u1, a1, pay, t, tmp1, err)
        if code != 0:
            err[0] = code
            err[1] = 1.0
            err[2] = t
            return -1
        code = player_step(schemes[1], sched[1], par[1], g, u2, a2, pay2, t, tmp2, err)
        if code != 0:
            err[0] = code
            err[1] = 2.0
            err[2] = t
            return -1
        done = t + 1
        if done % stride == 0 or done == horizon:
            rec_t[pos] = done
            rec_f[pos, :] = f
            rec_g[pos, :] = g
            rec_u1[pos, :] = u1
            rec_u2[pos, :] = u2
            rec_p1[pos] = pay
            rec_p2[pos] = pay2
            pos += 1
    return pos


def logit_residual(a, f, g, eps, bf, bg):
    """Logit responses at ``(f, g)`` into ``bf``/``bg``; returns the sup-norm gap."""
    m = f.shape[0]
    n = g.shape[0]
    pf = np.empty(m)
    pg = np.empty(n)
    for i in range(m):
        s = 0.0
        for j in range(n):
            s += a[i, j] * g[j]
        pf[i] = s
    for j in range(n):
        s = 0.0
        for i in range(m):
            s -= f[i] * a[i, j]
        pg[j] = s
    softmax_into(pf, eps, bf)
    softmax_into(pg, eps, bg)
    r = 0.0
    for i in range(m):
        r = max(r, abs(f[i] - bf[i]))
    for j in range(n):
        r = max(r, abs(g[j] - bg[j]))
    return r


def logit_direction(a, f, g, eps, bf, bg, step):
    """Newton direction for ``(f - beta_1(g), g - beta_2(f)) = 0``.

    Responses ``bf``, ``bg`` must be current for ``(f, g)``. In a zero-sum
    game the response Jacobian has purely imaginary spectrum, so the system
    matrix ``I - J`` is never singular.
    """
    m = f.shape[0]
    n = g.shape[0]
    d = m + n
    jac = np.zeros((d, d))
    rhs = np.empty(d)
    for i in range(d):
        jac[i, i] = 1.0
    # d beta_1 / d g = (diag(bf) - bf bf^T) a / eps
    for j in range(n):
        col = 0.0
        for k in range(m):
            col += bf[k] * a[k, j]
        for i in range(m):
            jac[i, m + j] = -bf[i] * (a[i, j] - col) / eps
    # d beta_2 / d f = -(diag(bg) - bg bg^T) a^T / eps
    for i in range(m):
        row = 0.0
        for k in range(n):
            row += bg[k] * a[i, k]
        for j in range(n):
            jac[m + j, i] = bg[j] * (a[i, j] - row) / eps
    for i in range(m):
        rhs[i] = bf[i] - f[i]
    for j in range(n):
        rhs[m + j] = bg[j] - g[j]
    step[:] = np.linalg.solve(jac, rhs)


def logit_iterate(a, f, g, eps, damping, tol, max_iters, history):
    """Damped Newton iteration for the logit fixed point, in place on ``f``, ``g``.

    Each iteration moves ``(f, g)`` a fraction ``s`` along the Newton
    direction of the fixed-point residual. ``s`` starts at ``damping`` and is
    halved until the new point is interior and the sup-norm residual drops,
    so the residual is strictly decreasing.

    Returns ``(residual, iterations)``. If ``history`` is non-empty, the
    residual after iteration ``i`` is stored at ``history[i]``.
    """
    m = f.shape[0]
    n = g.shape[0]
    bf = np.empty(m)
    bg = np.empty(n)
    bf2 = np.empty(m)
    bg2 = np.empty(n)
    fn = np.empty(m)
    gn = np.empty(n)
    step = np.empty(m + n)
    res = logit_residual(a, f, g, eps, bf, bg)
    it = 0
    while res > tol and it < max_iters:
        logit_direction(a, f, g, eps, bf, bg, step)
        s = damping
        accepted = False
        while s > 1e-12:
            inside = True
            for i in range(m):
                fn[i] = f[i] + s * step[i]
                if not fn[i] > 0.0:
                    inside = False
            for j in range(n):
                gn[j] = g[j] + s * step[m + j]
                if not gn[j] > 0.0:
                    inside = False
            if inside:
                rn = logit_residual(a, fn, gn, eps, bf2, bg2)
                if rn < res:
                    accepted = True
                    break
            s *= 0.5
        if not accepted:
            # no decrease left at machine precision
            break
        f[:] = fn
        g[:] = gn
        bf[:] = bf2
        bg[:] = bg2
        res = rn
        if it < history.shape[0]:
            history[it] = res
        it += 1
    return res, it


def _replicator_into(x, p, k, out, off):
    avg = 0.0
    for i in range(x.shape[0]):
        avg += x[i] * p[i]
    for i in range(x.shape[0]):
        out[off + i] = k * x[i] * (p[i] - avg)


def _adjusted_into(x, p, k, out, off):
    avg = 0.0
    for i in range(x.shape[0]):
        avg += x[i] * p[i]
    if not avg > 0.0:
        return False
    for i in range(x.shape[0]):
        out[off + i] = k * x[i] * (p[i] - avg) / avg
    return True


def system_field(kind, a, par, f0, t, y, m, n, out):
    """Right-hand side of a dynamics system on the flat state ``y``.

    State layouts: replicator/adjusted/smooth_br ``[f, g]``; coupled
    ``[f, g, uhat1]``; T1 ``[f]``; T2 ``[g]``. Returns False when the adjusted
    replicator meets a non-positive average payoff.
    """
    eps = par[D_EPS]
    c = par[D_C]
    if kind == SYS_T1:
        f = y[:m]
        g = np.empty(n)
        p2 = np.empty(n)
        for j in range(n):
            s = 0.0
            for i in range(m):
                s -= f[i] * a[i, j]
            p2[j] = s
        softmax_into(p2, eps, g)
        p1 = a @ g
        _replicator_into(f, p1, 1.0, out, 0)
        return True
    if kind == SYS_T2:
        g = y[:n]
        p1 = a @ g
        xi = np.empty(m)
        # f0-weighted logit of the payoff vector at inverse temperature t
        for i in range(m):
            p1[i] = t * p1[i] + math.log(f0[i])
        softmax_into(p1, 1.0, xi)
        p2 = np.empty(n)
        for j in range(n):
            s = 0.0
            for i in range(m):
                s -= xi[i] * a[i, j]
            p2[j] = s
        bg = np.empty(n)
        softmax_into(p2, eps, bg)
        for j in range(n):
            out[j] = bg[j] - g[j]
        return True

    f = y[:m]
    g = y[m:m + n]
    p1 = a @ g
    p2 = np.empty(n)
    for j in range(n):
        s = c
        for i in range(m):
            s -= f[i] * a[i, j]
        p2[j] = s
    ok = True
    if kind == SYS_REPLICATOR:
        _replicator_into(f, p1, par[D_K1], out, 0)
        _replicator_into(g, p2, par[D_K2], out, m)
    elif kind == SYS_ADJUSTED:
        ok = _adjusted_into(f, p1, par[D_K1], out, 0) and _adjusted_into(g, p2, par[D_K2], out, m)
    elif kind == SYS_SMOOTH_BR:
        bf = np.empty(m)
        bg = np.empty(n)
        softmax_into(p1, eps, bf)
        softmax_into(p2, eps, bg)
        for i in range(m):
            out[i] = par[D_K1] * (bf[i] - f[i])
        for j in range(n):
            out[m + j] = par[D_K2] * (bg[j] - g[j])
    else:
        bf = np.empty(m)
        softmax_into(p1, eps, bf)
        for i in range(m):
            out[i] = par[D_K1] * (bf[i] - f[i])
        if par[D_ADJ] != 0.0:
            ok = _adjusted_into(g, p2, par[D_K2], out, m)
        else:
            _replicator_into(g, p2, par[D_K2], out, m)
        for i in range(m):
            out[m + n + i] = p1[i] - y[m + n + i]
    if par[D_FREEZE_F] != 0.0:
        for i in range(m):
            out[i] = 0.0
    if par[D_FREEZE_G] != 0.0:
        for j in range(n):
            out[m + j] = 0.0
    return ok


def _renormalize(y, lo, hi):
    s = 0.0
    for i in range(lo, hi):
        if y[i] < 0.0:
            y[i] = 0.0
        s += y[i]
    drift = abs(s - 1.0)
    if drift > RENORM_TOL:
        for i in range(lo, hi):
            y[i] /= s
    return drift


def rk4_integrate(kind, a, par, f0, y, t0, dt, nsteps, t_end, stride, simplex_blocks,
                  rec_t, rec_y, err):
    """Fixed-step classical RK4 from ``(t0, y)``; the last step lands on ``t_end``.

    ``simplex_blocks`` lists ``(lo, hi)`` index ranges that are clipped and
    renormalized after each step. Returns the number of recorded rows, or -1
    with ``err = (code, time, 0, 0)``. ``err[1]`` always ends up holding the
    largest simplex drift seen when the run succeeds.
    """
    d = y.shape[0]
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    z = np.empty(d)
    m = f0.shape[0]
    n = a.shape[1]
    t = t0
    pos = 0
    rec_t[pos] = t
    rec_y[pos, :] = y
    pos += 1
    max_drift = 0.0
    for step in range(nsteps):
        h = dt
        if step == nsteps - 1:
            h = t_end - t
        ok = system_field(kind, a, par, f0, t, y, m, n, k1)
        for i in range(d):
            z[i] = y[i] + 0.5 * h * k1[i]
        ok = ok and system_field(kind, a, par, f0, t + 0.5 * h, z, m, n, k2)
        for i in range(d):
            z[i] = y[i] + 0.5 * h * k2[i]
        ok = ok and system_field(kind, a, par, f0, t + 0.5 * h, z, m, n, k3)
        for i in range(d):
            z[i] = y[i] + h * k3[i]
        ok = ok and system_field(kind, a, par, f0, t + h, z, m, n, k4)
        if not ok:
            err[0] = ERR_ADJUSTED
            err[1] = t
            return -1
        for i in range(d):
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not math.isfinite(y[i]):
                err[0] = ERR_NONFINITE
                err[1] = t
                return -1
        t = t0 + (step + 1) * dt
        if step == nsteps - 1:
            t = t_end
        for b in range(simplex_blocks.shape[0]):
            drift = _renormalize(y, simplex_blocks[b, 0], simplex_blocks[b, 1])
            if drift > max_drift:
                max_drift = drift
        if (step + 1) % stride == 0 or step == nsteps - 1:
            rec_t[pos] = t
            rec_y[pos, :] = y
            pos += 1
    err[1] = max_drift
    return pos
