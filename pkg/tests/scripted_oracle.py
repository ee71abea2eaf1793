"""Hand-scripted reference evaluation of the screen-stack circuit.

Scalar cmath only; nothing is imported from the package so this stays an
independent check of the vectorized implementation.
"""
import cmath
import math

C_LIGHT = 299792458.0
MU_0 = 4.0e-7 * math.pi
EPS_0 = 1.0 / (MU_0 * C_LIGHT * C_LIGHT)
ETA_0 = math.sqrt(MU_0 / EPS_0)


def modal_admittances(period, k, f, eps_r=1.0):
    w = 2.0 * math.pi * f
    k0 = w * math.sqrt(eps_r) / C_LIGHT
    kt = 2.0 * math.pi * k / period
    kz = -1j * cmath.sqrt(kt * kt - k0 * k0)
    return kz / (w * MU_0), w * EPS_0 * eps_r / kz


def screen_admittance(l0, c0, alpha_l, alpha_c, period, f, eps_r=1.0):
    w = 2.0 * math.pi * f
    y = 1.0 / (1j * w * l0) + 1j * w * c0
    for k, a in enumerate(alpha_l, 1):
        y += a * modal_admittances(period, k, f, eps_r)[0]
    for k, a in enumerate(alpha_c, 1):
        y += a * modal_admittances(period, k, f, eps_r)[1]
    return y


def matmul(m, n):
    return [
        [m[0][0] * n[0][0] + m[0][1] * n[1][0], m[0][0] * n[0][1] + m[0][1] * n[1][1]],
        [m[1][0] * n[0][0] + m[1][1] * n[1][0], m[1][0] * n[0][1] + m[1][1] * n[1][1]],
    ]


def line_matrix(d, f, eps_r=1.0):
    beta = 2.0 * math.pi * f * math.sqrt(eps_r) / C_LIGHT
    z = ETA_0 / math.sqrt(eps_r)
    return [[math.cos(beta * d), 1j * z * math.sin(beta * d)], [1j * math.sin(beta * d) / z, math.cos(beta * d)]]


def stack_s21(screens, distances, period, f, eps_r=1.0):
    """``screens``: list of (l0, c0, [alpha_l], [alpha_c])."""
    m = [[1, 0], [0, 1]]
    for i, (l0, c0, al, ac) in enumerate(screens):
        y = screen_admittance(l0, c0, al, ac, period, f, eps_r)
        m = matmul(m, [[1, 0], [y, 1]])
        if i < len(distances):
            m = matmul(m, line_matrix(distances[i], f, eps_r))
    z0 = ETA_0 / math.sqrt(eps_r)
    return 2.0 / (m[0][0] + m[0][1] / z0 + m[1][0] * z0 + m[1][1])
