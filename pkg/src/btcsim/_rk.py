"""Compiled Dormand-Prince 5(4) stepper for the mean-field equations.

The ODE state is augmented to 4 components: the Bloch vector plus the
running integral of kappa(t) (the complete-positivity functional), so
the quadrature carries the same order as the state itself.  Output is
produced on a fixed grid through the standard quartic dense-output
interpolant, leaving the step-size controller free of output-point
constraints; identical inputs therefore give bit-identical results.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Butcher tableau (Dormand-Prince 5(4))
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = (
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
)
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = (
    35.0 / 384.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
)
# difference between the 5th- and 4th-order weights
_E1, _E3, _E4, _E5, _E6, _E7 = (
    35.0 / 384.0 - 5179.0 / 57600.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
)
# quartic dense-output interpolant coefficients
_P_DENSE = np.array(
    [
        [
            1.0,
            -8048581381.0 / 2820520608.0,
            8663915743.0 / 2820520608.0,
            -12715105075.0 / 11282082432.0,
        ],
        [0.0, 0.0, 0.0, 0.0],
        [
            0.0,
            131558114200.0 / 32700410799.0,
            -68118460800.0 / 10900136933.0,
            87487479700.0 / 32700410799.0,
        ],
        [
            0.0,
            -1754552775.0 / 470086768.0,
            14199869525.0 / 1410260304.0,
            -10690763975.0 / 1880347072.0,
        ],
        [
            0.0,
            127303824393.0 / 49829197408.0,
            -318862633887.0 / 49829197408.0,
            701980252875.0 / 199316789632.0,
        ],
        [
            0.0,
            -282668133.0 / 205662961.0,
            2019193451.0 / 616988883.0,
            -1453857185.0 / 822651844.0,
        ],
        [
            0.0,
            40617522.0 / 29380423.0,
            -110615467.0 / 29380423.0,
            69997945.0 / 29380423.0,
        ],
    ]
)

STATUS_OK = 0
STATUS_UNDERFLOW = 1

H_MIN = 1e-13


@njit(cache=True)
def kappa_scalar(kappa0, m, kappa_max, literal_positive, constant_rate, t):
    """Capped decay rate at a single instant (mirrors model.kappa)."""
    if constant_rate:
        return kappa0
    if m > 2.0 * kappa0:
        d = np.sqrt(m * m - 2.0 * m * kappa0)
        th = np.tanh(0.5 * t * d)
        raw = 2.0 * m * kappa0 * th / (d + m * th)
    elif m < 2.0 * kappa0:
        dh = np.sqrt(2.0 * m * kappa0 - m * m)
        x = 0.5 * t * dh
        s = np.sin(x)
        den = dh * np.cos(x) + m * s
        if den == 0.0:
            raw = np.inf if s > 0.0 else -np.inf
        else:
            raw = 2.0 * m * kappa0 * s / den
    else:
        raw = m * kappa0 * t / (1.0 + 0.5 * m * t)
    if np.abs(raw) < kappa_max:
        return raw
    if literal_positive or raw > 0.0:
        return kappa_max
    return -kappa_max


@njit(cache=True)
def _rhs(omega0, omega_x, omega_z, kap, y, out):
    mx, my, mz = y[0], y[1], y[2]
    out[0] = -2.0 * omega_z * my * mz + kap * mx * mz
    out[1] = 2.0 * (omega_z - omega_x) * mx * mz - omega0 * mz + kap * my * mz
    out[2] = omega0 * my - kap * (mx * mx + my * my) + 2.0 * omega_x * mx * my
    out[3] = kap


@njit(cache=True)
def integrate_grid(
    omega0,
    omega_x,
    omega_z,
    kappa0,
    m,
    kappa_max,
    literal_positive,
    constant_rate,
    y0,
    t_out,
    rtol,
    atol,
    h_max,
    renormalize,
):
    """Integrate the augmented system onto the grid t_out (t_out[0] == 0).

    Returns (samples, status, t_fail): samples has shape (len(t_out), 4)
    with columns (m_x, m_y, m_z, cp_integral); status is STATUS_OK or
    STATUS_UNDERFLOW with t_fail the time at which the controller gave up.
    """
    n_out = t_out.shape[0]
    ys = np.empty((n_out, 4))
    ys[0] = y0
    y = y0.copy()
    t = 0.0
    t_end = t_out[n_out - 1]
    h = h_max
    K = np.empty((7, 4))
    ytmp = np.empty(4)
    ynew = np.empty(4)
    kap = kappa_scalar(kappa0, m, kappa_max, literal_positive, constant_rate, t)
    _rhs(omega0, omega_x, omega_z, kap, y, K[0])
    i_out = 1
    while t < t_end and i_out < n_out:
        h_step = min(h, t_end - t)

        for j in range(4):
            ytmp[j] = y[j] + h_step * _A21 * K[0, j]
        kap = kappa_scalar(
            kappa0, m, kappa_max, literal_positive, constant_rate, t + _C2 * h_step
        )
        _rhs(omega0, omega_x, omega_z, kap, ytmp, K[1])

        for j in range(4):
            ytmp[j] = y[j] + h_step * (_A31 * K[0, j] + _A32 * K[1, j])
        kap = kappa_scalar(
            kappa0, m, kappa_max, literal_positive, constant_rate, t + _C3 * h_step
        )
        _rhs(omega0, omega_x, omega_z, kap, ytmp, K[2])

        for j in range(4):
            ytmp[j] = y[j] + h_step * (
                _A41 * K[0, j] + _A42 * K[1, j] + _A43 * K[2, j]
            )
        kap = kappa_scalar(
            kappa0, m, kappa_max, literal_positive, constant_rate, t + _C4 * h_step
        )
        _rhs(omega0, omega_x, omega_z, kap, ytmp, K[3])

        for j in range(4):
            ytmp[j] = y[j] + h_step * (
                _A51 * K[0, j] + _A52 * K[1, j] + _A53 * K[2, j] + _A54 * K[3, j]
            )
        kap = kappa_scalar(
            kappa0, m, kappa_max, literal_positive, constant_rate, t + _C5 * h_step
        )
        _rhs(omega0, omega_x, omega_z, kap, ytmp, K[4])

        for j in range(4):
            ytmp[j] = y[j] + h_step * (
                _A61 * K[0, j]
                + _A62 * K[1, j]
                + _A63 * K[2, j]
                + _A64 * K[3, j]
                + _A65 * K[4, j]
            )
        kap = kappa_scalar(
            kappa0, m, kappa_max, literal_positive, constant_rate, t + h_step
        )
        _rhs(omega0, omega_x, omega_z, kap, ytmp, K[5])

        for j in range(4):
            ynew[j] = y[j] + h_step * (
                _B1 * K[0, j]
                + _B3 * K[2, j]
                + _B4 * K[3, j]
                + _B5 * K[4, j]
                + _B6 * K[5, j]
            )
        _rhs(omega0, omega_x, omega_z, kap, ynew, K[6])

        err = 0.0
        for j in range(4):
            e = h_step * (
                _E1 * K[0, j]
                + _E3 * K[2, j]
                + _E4 * K[3, j]
                + _E5 * K[4, j]
                + _E6 * K[5, j]
                + _E7 * K[6, j]
            )
            sc = atol + rtol * max(abs(y[j]), abs(ynew[j]))
            r = e / sc
            err += r * r
        err = np.sqrt(err / 4.0)

        if err <= 1.0:
            t_new = t + h_step
            while i_out < n_out and t_out[i_out] <= t_new + 1e-14:
                theta = (t_out[i_out] - t) / h_step
                if theta < 0.0:
                    theta = 0.0
                elif theta > 1.0:
                    theta = 1.0
                for j in range(4):
                    acc = 0.0
                    tp = theta
                    for col in range(4):
                        qj = 0.0
                        for row in range(7):
                            qj += K[row, j] * _P_DENSE[row, col]
                        acc += qj * tp
                        tp *= theta
                    ys[i_out, j] = y[j] + h_step * acc
                i_out += 1
            t = t_new
            for j in range(4):
                y[j] = ynew[j]
            if renormalize:
                nrm = np.sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2])
                if nrm > 0.0:
                    y[0] /= nrm
                    y[1] /= nrm
                    y[2] /= nrm
            kap = kappa_scalar(
                kappa0, m, kappa_max, literal_positive, constant_rate, t
            )
            _rhs(omega0, omega_x, omega_z, kap, y, K[0])
            if err == 0.0:
                fac = 5.0
            else:
                fac = min(5.0, max(0.2, 0.9 * err**-0.2))
            h = min(h_max, h_step * fac)
        else:
            if h_step <= H_MIN:
                return ys, STATUS_UNDERFLOW, t
            h = max(H_MIN, h_step * max(0.2, 0.9 * err**-0.2))
    return ys, STATUS_OK, t_end
