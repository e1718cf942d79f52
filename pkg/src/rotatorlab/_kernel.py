"""Compiled Dormand-Prince 5(4) stepper with dense output and section events.

Kept free of Python objects so a whole run (stepping, event location, sink
capture) happens inside one nogil call; callers can fan out over threads.

Event kinds (one row of ``ev_par`` each):

* ``KIND_LATTICE``: ``n1*x1 + n2*x2 - offset`` crossing a multiple of 2*pi.
  ``ev_par = (n1, n2, offset, -)``.
* ``KIND_APPROACH``: local minimum of the torus distance to an anchor,
  accepted when the distance is below ``radius``.
  ``ev_par = (a1, a2, radius, -)``.
* ``KIND_SEGMENT``: crossing of a short straight segment through a centre
  with unit normal ``(n1, n2)``; ``ev_par = (c1, c2, n1, n2)`` and
  ``ev_aux`` the half width.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

KIND_LATTICE = 0
KIND_APPROACH = 1
KIND_SEGMENT = 2

STATUS_TIME = 0
STATUS_SINK = 1
STATUS_EVENT = 2
STATUS_FAIL = 3

TWO_PI = 2.0 * math.pi

# Dormand-Prince tableau
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                           49.0 / 176.0, -5103.0 / 18656.0)
A71, A73, A74, A75, A76 = (35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0,
                           -2187.0 / 6784.0, 11.0 / 84.0)
E1, E3, E4, E5, E6, E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                          -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)
# continuous extension (Hairer, Norsett & Wanner, DOPRI5 contd5)
D1 = -12715105075.0 / 11282082432.0
D3 = 87487479700.0 / 32700410799.0
D4 = -10690763975.0 / 1880347072.0
D5 = 701980252875.0 / 199316789632.0
D6 = -1453857185.0 / 822651844.0
D7 = 69997945.0 / 29380423.0


@njit(cache=True, nogil=True)
def _series(const, harm, cc, sc, row, x):
    out = const[row]
    for j in range(harm.shape[1]):
        k = harm[row, j]
        if k != 0.0:
            out += cc[row, j] * math.cos(k * x) + sc[row, j] * math.sin(k * x)
    return out


@njit(cache=True, nogil=True)
def rhs(const, harm, cc, sc, sign, x1, x2):
    d = x1 - x2
    f1 = _series(const, harm, cc, sc, 0, x1) + _series(const, harm, cc, sc, 2, d)
    f2 = _series(const, harm, cc, sc, 1, x2) + _series(const, harm, cc, sc, 3, -d)
    return sign * f1, sign * f2


@njit(cache=True, nogil=True)
def _centered(x):
    return (x + math.pi) % TWO_PI - math.pi


@njit(cache=True, nogil=True)
def _dense(r, theta, out):
    s = 1.0 - theta
    for i in range(2):
        out[i] = r[0, i] + theta * (r[1, i] + s * (r[2, i] + theta * (r[3, i] + s * r[4, i])))


@njit(cache=True, nogil=True)
def _event_value(kind, par, aux, level, y, const, harm, cc, sc, sign):
    """Return (value, valid)."""
    if kind == KIND_LATTICE:
        return par[0] * y[0] + par[1] * y[1] - par[2] - level, True
    if kind == KIND_APPROACH:
        w1 = _centered(y[0] - par[0])
        w2 = _centered(y[1] - par[1])
        if abs(w1) > 0.5 * math.pi or abs(w2) > 0.5 * math.pi:
            return 0.0, False
        f1, f2 = rhs(const, harm, cc, sc, sign, y[0], y[1])
        return w1 * f1 + w2 * f2, True
    # segment
    w1 = _centered(y[0] - par[0])
    w2 = _centered(y[1] - par[1])
    normal = par[2] * w1 + par[3] * w2
    tang = -par[3] * w1 + par[2] * w2
    if abs(normal) > 0.5 * math.pi or abs(tang) > aux:
        return normal, False
    return normal, True


@njit(cache=True, nogil=True)
def _locate(kind, par, aux, level, r, g0, g1, const, harm, cc, sc, sign, tmp):
    """Root of the event function on the step interpolant (Illinois method)."""
    a, b = 0.0, 1.0
    fa, fb = g0, g1
    side = 0
    theta = 0.5
    for _ in range(200):
        if fb != fa:
            theta = (a * fb - b * fa) / (fb - fa)
        else:
            theta = 0.5 * (a + b)
        if not (a < theta < b):
            theta = 0.5 * (a + b)
        _dense(r, theta, tmp)
        g, _ok = _event_value(kind, par, aux, level, tmp, const, harm, cc, sc, sign)
        if abs(g) < 1e-13 or (b - a) < 1e-15:
            break
        if (g > 0.0) == (fb > 0.0):
            b, fb = theta, g
            if side == -1:
                fa *= 0.5
            side = -1
        else:
            a, fa = theta, g
            if side == 1:
                fb *= 0.5
            side = 1
    return theta


@njit(cache=True, nogil=True)
def integrate_kernel(const, harm, cc, sc, sign, y0, t0, t_end, rtol, atol, h_max,
                     ev_kind, ev_par, ev_aux, ev_dir, ev_stop,
                     cap_pts, cap_radius, cap_speed, record, max_steps):
    """Integrate from ``y0`` over ``[t0, t_end]`` (``sign=-1`` runs backwards).

    Returns ``(ts, ys, n, ev_t, ev_y, ev_i, n_ev, status, capture_index)``.
    """
    n_sec = ev_kind.shape[0]
    cap = 1024
    ts = np.empty(cap)
    ys = np.empty((cap, 2))
    ev_cap = 64
    ev_t = np.empty(ev_cap)
    ev_y = np.empty((ev_cap, 2))
    ev_i = np.empty(ev_cap, dtype=np.int64)
    counts = np.zeros(n_sec, dtype=np.int64)
    n_ev = 0

    y = np.empty(2)
    y[0] = y0[0]
    y[1] = y0[1]
    t = t0
    ts[0] = t
    ys[0, 0] = y[0]
    ys[0, 1] = y[1]
    n = 1

    k1 = np.empty(2)
    k2 = np.empty(2)
    k3 = np.empty(2)
    k4 = np.empty(2)
    k5 = np.empty(2)
    k6 = np.empty(2)
    k7 = np.empty(2)
    yn = np.empty(2)
    tmp = np.empty(2)
    r = np.empty((5, 2))
    gprev = np.zeros(n_sec)
    vprev = np.zeros(n_sec, dtype=np.bool_)
    lprev = np.zeros(n_sec)

    a, b = rhs(const, harm, cc, sc, sign, y[0], y[1])
    k1[0] = a
    k1[1] = b

    for s in range(n_sec):
        if ev_kind[s] == KIND_LATTICE:
            raw = (ev_par[s, 0] * y[0] + ev_par[s, 1] * y[1] - ev_par[s, 2]) / TWO_PI
            lprev[s] = math.floor(raw)
        else:
            g, ok = _event_value(ev_kind[s], ev_par[s], ev_aux[s], 0.0, y,
                                 const, harm, cc, sc, sign)
            gprev[s] = g
            vprev[s] = ok

    span = t_end - t0
    speed = math.sqrt(k1[0] * k1[0] + k1[1] * k1[1])
    h = min(h_max, 0.01 / max(speed, 1e-3), span)
    if h <= 0.0:
        h = span
    status = STATUS_TIME
    capture_index = -1
    steps = 0
    done = span <= 0.0

    while not done:
        steps += 1
        if steps > max_steps:
            status = STATUS_FAIL
            break
        last = False
        if t + h >= t_end:
            h = t_end - t
            last = True
        for i in range(2):
            tmp[i] = y[i] + h * A21 * k1[i]
        k2[0], k2[1] = rhs(const, harm, cc, sc, sign, tmp[0], tmp[1])
        for i in range(2):
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
        k3[0], k3[1] = rhs(const, harm, cc, sc, sign, tmp[0], tmp[1])
        for i in range(2):
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        k4[0], k4[1] = rhs(const, harm, cc, sc, sign, tmp[0], tmp[1])
        for i in range(2):
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        k5[0], k5[1] = rhs(const, harm, cc, sc, sign, tmp[0], tmp[1])
        for i in range(2):
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i]
                                 + A65 * k5[i])
        k6[0], k6[1] = rhs(const, harm, cc, sc, sign, tmp[0], tmp[1])
        for i in range(2):
            yn[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i]
                                + A76 * k6[i])
        k7[0], k7[1] = rhs(const, harm, cc, sc, sign, yn[0], yn[1])

        err = 0.0
        jump = 0.0
        for i in range(2):
            e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                     + E7 * k7[i])
            # relative scale taken on the wrapped angle: long lifts must not loosen control
            mag = min(max(abs(y[i]), abs(yn[i])), TWO_PI)
            scale = atol + rtol * mag
            err += (e / scale) ** 2
            jump = max(jump, abs(yn[i] - y[i]))
        err = math.sqrt(0.5 * err)

        if err > 1.0 or jump > 1.0:
            fac = 0.2 if jump > 1.0 else max(0.2, 0.9 * err ** -0.2)
            h *= fac
            if h < 1e-14:
                status = STATUS_FAIL
                break
            continue

        # accepted: build interpolant
        for i in range(2):
            ydiff = yn[i] - y[i]
            bspl = h * k1[i] - ydiff
            r[0, i] = y[i]
            r[1, i] = ydiff
            r[2, i] = bspl
            r[3, i] = ydiff - h * k7[i] - bspl
            r[4, i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i]
                           + D6 * k6[i] + D7 * k7[i])
        t_new = t_end if last else t + h

        # events in this step, earliest stopping one wins
        stop_theta = 2.0
        for s in range(n_sec):
            kind = ev_kind[s]
            crossed = False
            level = 0.0
            g0 = 0.0
            g1 = 0.0
            direction = 0
            if kind == KIND_LATTICE:
                raw = (ev_par[s, 0] * yn[0] + ev_par[s, 1] * yn[1] - ev_par[s, 2]) / TWO_PI
                lnew = math.floor(raw)
                if lnew != lprev[s]:
                    crossed = True
                    if lnew > lprev[s]:
                        level = TWO_PI * lnew
                        direction = 1
                    else:
                        level = TWO_PI * lprev[s]
                        direction = -1
                    g0 = ev_par[s, 0] * y[0] + ev_par[s, 1] * y[1] - ev_par[s, 2] - level
                    g1 = ev_par[s, 0] * yn[0] + ev_par[s, 1] * yn[1] - ev_par[s, 2] - level
                lprev[s] = lnew
            else:
                g1, ok1 = _event_value(kind, ev_par[s], ev_aux[s], 0.0, yn,
                                       const, harm, cc, sc, sign)
                if ok1 and vprev[s] and ((gprev[s] < 0.0 <= g1) or (gprev[s] > 0.0 >= g1)):
                    if g1 != gprev[s]:
                        crossed = True
                        g0 = gprev[s]
                        direction = 1 if g1 > g0 else -1
                        if kind == KIND_APPROACH and direction < 0:
                            crossed = False
                gprev[s] = g1
                vprev[s] = ok1
            if not crossed:
                continue
            if ev_dir[s] != 0 and ev_dir[s] != direction:
                continue
            if g0 == 0.0:
                theta = 0.0
            elif g1 == 0.0:
                theta = 1.0
            else:
                theta = _locate(kind, ev_par[s], ev_aux[s], level, r, g0, g1,
                                const, harm, cc, sc, sign, tmp)
            te = t + theta * h
            if te - t0 < 1e-9 * max(1.0, abs(span)):
                continue
            _dense(r, theta, tmp)
            if kind == KIND_APPROACH:
                w1 = _centered(tmp[0] - ev_par[s, 0])
                w2 = _centered(tmp[1] - ev_par[s, 1])
                if math.sqrt(w1 * w1 + w2 * w2) >= ev_par[s, 2]:
                    continue
            if kind == KIND_SEGMENT:
                _g, okm = _event_value(kind, ev_par[s], ev_aux[s], 0.0, tmp,
                                       const, harm, cc, sc, sign)
                if not okm:
                    continue
            if theta > stop_theta:
                continue
            if n_ev == ev_cap:
                ev_cap *= 2
                nt = np.empty(ev_cap)
                ny = np.empty((ev_cap, 2))
                ni = np.empty(ev_cap, dtype=np.int64)
                nt[:n_ev] = ev_t[:n_ev]
                ny[:n_ev] = ev_y[:n_ev]
                ni[:n_ev] = ev_i[:n_ev]
                ev_t, ev_y, ev_i = nt, ny, ni
            ev_t[n_ev] = te
            ev_y[n_ev, 0] = tmp[0]
            ev_y[n_ev, 1] = tmp[1]
            ev_i[n_ev] = s
            n_ev += 1
            counts[s] += 1
            if ev_stop[s] > 0 and counts[s] >= ev_stop[s]:
                stop_theta = theta

        if stop_theta <= 1.0:
            # drop events recorded past the stopping one, finish on the event state
            keep = 0
            te_stop = t + stop_theta * h
            for q in range(n_ev):
                if ev_t[q] <= te_stop:
                    ev_t[keep] = ev_t[q]
                    ev_y[keep, 0] = ev_y[q, 0]
                    ev_y[keep, 1] = ev_y[q, 1]
                    ev_i[keep] = ev_i[q]
                    keep += 1
            n_ev = keep
            _dense(r, stop_theta, tmp)
            t = te_stop
            y[0] = tmp[0]
            y[1] = tmp[1]
            status = STATUS_EVENT
            done = True
        else:
            t = t_new
            y[0] = yn[0]
            y[1] = yn[1]
            k1[0] = k7[0]
            k1[1] = k7[1]
            if t >= t_end:
                done = True

        if record or done:
            if n == cap:
                cap *= 2
                nts = np.empty(cap)
                nys = np.empty((cap, 2))
                nts[:n] = ts[:n]
                nys[:n] = ys[:n]
                ts, ys = nts, nys
            if record:
                ts[n] = t
                ys[n, 0] = y[0]
                ys[n, 1] = y[1]
                n += 1
            else:
                ts[1] = t
                ys[1, 0] = y[0]
                ys[1, 1] = y[1]
                n = 2

        if done:
            break

        # sink capture
        if cap_pts.shape[0] > 0:
            sp = math.sqrt(k1[0] * k1[0] + k1[1] * k1[1])
            if sp < cap_speed:
                for c in range(cap_pts.shape[0]):
                    w1 = _centered(y[0] - cap_pts[c, 0])
                    w2 = _centered(y[1] - cap_pts[c, 1])
                    if math.sqrt(w1 * w1 + w2 * w2) < cap_radius:
                        capture_index = c
                        status = STATUS_SINK
                        done = True
                        break
            if done:
                if not record:
                    ts[1] = t
                    ys[1, 0] = y[0]
                    ys[1, 1] = y[1]
                    n = 2
                break

        fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        h = min(h * fac, h_max)

    return ts[:n], ys[:n], n, ev_t[:n_ev], ev_y[:n_ev], ev_i[:n_ev], n_ev, status, capture_index
