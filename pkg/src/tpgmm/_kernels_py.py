"""Pure-numpy accumulation kernels.

Reference implementation of the hot loops; the Cython module
``_kernels_cy`` provides the same surface with fused per-row loops and is
preferred at import time when available.
"""
import numpy as np

BACKEND = "python"


def expit_vec(eta):
    """Numerically stable logistic function, elementwise."""
    eta = np.asarray(eta, dtype=float)
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def score_info(x, y, w, eta):
    """Weighted logistic score and information at linear predictor eta.

    score = X' (w * (y - mu)),  info = X' diag(w * mu * (1 - mu)) X.
    """
    mu = expit_vec(eta)
    score = x.T @ (w * (y - mu))
    info = (x * (w * mu * (1.0 - mu))[:, None]).T @ x
    return score, info


def moment_pieces(xsel, zsel, ysel, pisel, offsel, beta, theta, n_phase1, n_phase2):
    """Stacked moment values and Jacobian blocks over the phase-II rows.

    Returns (u1, u2, g_top, g_bot, v1) where
      u1    = (1/N) sum (expit(x'b) - expit(z't)) z / pi
      u2    = (1/n) sum (y - expit(x'b + off)) x
      g_top = (1/N) sum h'(x'b) z x' / pi
      g_bot = -(1/n) sum h'(x'b + off) x x'
      v1    = -(1/N) sum h'(z't) z z' / pi
    """
    eta_x = xsel @ beta
    p_x = expit_vec(eta_x)
    p_off = expit_vec(eta_x + offsel)
    p_z = expit_vec(zsel @ theta)
    inv_pi = 1.0 / pisel

    u1 = zsel.T @ ((p_x - p_z) * inv_pi) / n_phase1
    u2 = xsel.T @ (ysel - p_off) / n_phase2

    hx = p_x * (1.0 - p_x)
    hoff = p_off * (1.0 - p_off)
    hz = p_z * (1.0 - p_z)

    g_top = (zsel * (hx * inv_pi)[:, None]).T @ xsel / n_phase1
    g_bot = -(xsel * hoff[:, None]).T @ xsel / n_phase2
    v1 = -(zsel * (hz * inv_pi)[:, None]).T @ zsel / n_phase1
    return u1, u2, g_top, g_bot, v1
