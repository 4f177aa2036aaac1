"""Log-likelihood, analytic Hessian, Fisher information and the RMSE bound.

The unknowns are ``theta = [x_b, y_b, x_1, y_1, ..., x_M, y_M]``: the blind
node plus the true anchor positions as nuisance parameters.  Observations are
one RSSI value (dBm) and one reported position per anchor.

The Fisher information is built from its closed-form blocks.  The Hessian of
the log-likelihood is implemented independently and is only used to check
those blocks (its negative expectation must reproduce them).
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, SingularGeometryError
from .pathloss import PathLossParams, invert_rssi_to_distance, sigma_d

__all__ = [
    "ParameterVector",
    "ObservationVector",
    "NoiseSpec",
    "FimBlocks",
    "b_coefficient",
    "log_likelihood",
    "hessian_analytic",
    "score",
    "fim",
    "f22_blocks",
    "schur_complement",
    "crlb_rmse_bound",
]

_CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class ParameterVector:
    blind: tuple  # (x_b, y_b)
    anchors_true: np.ndarray  # (M, 2)

    def __post_init__(self):
        a = np.asarray(self.anchors_true, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "anchors_true", a)
        object.__setattr__(self, "blind", (float(self.blind[0]), float(self.blind[1])))

    @property
    def n_anchors(self):
        return self.anchors_true.shape[0]

    def as_array(self):
        """Flatten in the order ``[x_b, y_b, x_1, y_1, ...]``."""
        return np.concatenate([np.asarray(self.blind), self.anchors_true.ravel()])

    @classmethod
    def from_array(cls, theta):
        theta = np.asarray(theta, dtype=float)
        return cls(blind=(theta[0], theta[1]), anchors_true=theta[2:].reshape(-1, 2))


@dataclass(frozen=True)
class ObservationVector:
    rssi_dbm: np.ndarray  # (M,)
    reported: np.ndarray  # (M, 2)

    def __post_init__(self):
        object.__setattr__(self, "rssi_dbm", np.asarray(self.rssi_dbm, dtype=float).ravel())
        object.__setattr__(self, "reported", np.asarray(self.reported, dtype=float).reshape(-1, 2))
        if self.rssi_dbm.shape[0] != self.reported.shape[0]:
            raise ValueError("rssi_dbm and reported must describe the same anchors")


@dataclass(frozen=True)
class NoiseSpec:
    """Per-anchor noise levels and the shared path-loss model."""

    sigma_a: np.ndarray  # (M,) metres
    sigma_p: np.ndarray  # (M,) dB
    params: PathLossParams = PathLossParams()

    def __post_init__(self):
        object.__setattr__(self, "sigma_a", np.atleast_1d(np.asarray(self.sigma_a, dtype=float)))
        object.__setattr__(self, "sigma_p", np.atleast_1d(np.asarray(self.sigma_p, dtype=float)))

    def broadcast(self, m):
        sa = np.broadcast_to(self.sigma_a, (m,))
        sp = np.broadcast_to(self.sigma_p, (m,))
        if np.any(~(sa > 0)) or np.any(~(sp > 0)):
            raise DomainError("the likelihood needs sigma_a > 0 and sigma_p > 0 for every anchor")
        return sa, sp


@dataclass(frozen=True)
class FimBlocks:
    """Partition of the Fisher information into blind / nuisance blocks."""

    f11: np.ndarray  # (2, 2)
    f12: np.ndarray  # (2, 2M)
    f22: np.ndarray  # (2M, 2M), block diagonal

    def assemble(self):
        top = np.hstack([self.f11, self.f12])
        bottom = np.hstack([self.f12.T, self.f22])
        return np.vstack([top, bottom])


def b_coefficient(sigma_p, eta):
    """``(10 eta / (sigma_p ln 10))^2``, the inverse variance of ``ln(d_tilde / d)``."""
    sd = sigma_d(sigma_p, eta)
    if np.any(~(np.asarray(sd) > 0)):
        raise DomainError("sigma_p must be > 0")
    return 1.0 / np.square(sd)


def _geometry(theta):
    diff = theta.anchors_true - np.asarray(theta.blind)  # (x_i - x_b, y_i - y_b)
    d2 = np.sum(diff * diff, axis=1)
    if np.any(~(d2 > 0)):
        raise DomainError("blind node coincides with an anchor")
    return diff, d2


def _check_sizes(theta, obs):
    if obs.rssi_dbm.shape[0] != theta.n_anchors:
        raise ValueError("observation and parameter vectors have different anchor counts")


def log_likelihood(theta, obs, noise):
    """``ln p(obs | theta)`` with RSSI treated as Gaussian in dBm.

    Each RSSI term is ``-0.5 ln(2 pi sigma_p^2) - (b/8) ln(d^2 / d_tilde^2)^2``
    and each reported coordinate contributes a Gaussian log-density with
    spread ``sigma_a``.
    """
    _check_sizes(theta, obs)
    m = theta.n_anchors
    sa, sp = noise.broadcast(m)
    _, d2 = _geometry(theta)
    b = b_coefficient(sp, noise.params.eta)
    dt = invert_rssi_to_distance(obs.rssi_dbm, noise.params)
    u = np.log(d2 / (dt * dt))
    rssi_terms = -0.5 * np.log(2.0 * math.pi * sp * sp) - 0.125 * b * u * u
    r = obs.reported - theta.anchors_true
    pos_terms = -np.log(2.0 * math.pi * sa * sa) - np.sum(r * r, axis=1) / (2.0 * sa * sa)
    return float(np.sum(rssi_terms) + np.sum(pos_terms))


def score(theta, obs, noise):
    """Gradient of :func:`log_likelihood` with respect to ``theta``."""
    _check_sizes(theta, obs)
    m = theta.n_anchors
    sa, sp = noise.broadcast(m)
    diff, d2 = _geometry(theta)
    b = b_coefficient(sp, noise.params.eta)
    dt = invert_rssi_to_distance(obs.rssi_dbm, noise.params)
    u = np.log(d2 / (dt * dt))
    # d/d(x_b) of -(b/8) u^2 is (b/2) u (x_i - x_b) / d^2; anchors get the opposite sign
    g_rssi = (0.5 * b * u / d2)[:, None] * diff
    g = np.zeros(2 * m + 2)
    g[:2] = np.sum(g_rssi, axis=0)
    g_anchor = -g_rssi + (obs.reported - theta.anchors_true) / (sa * sa)[:, None]
    g[2:] = g_anchor.ravel()
    return g


def hessian_analytic(theta, obs, noise):
    """Second derivatives of the log-likelihood, ordered like ``theta``.

    Anchor-anchor entries for different anchors are exactly zero.
    """
    _check_sizes(theta, obs)
    m = theta.n_anchors
    sa, sp = noise.broadcast(m)
    diff, d2 = _geometry(theta)
    b = b_coefficient(sp, noise.params.eta)
    dt = invert_rssi_to_distance(obs.rssi_dbm, noise.params)
    u = np.log(d2 / (dt * dt))
    d4 = d2 * d2
    dx, dy = diff[:, 0], diff[:, 1]

    # second derivatives w.r.t. (x_b, x_b), (y_b, y_b), (x_b, y_b), per anchor
    hxx = -b * dx * dx / d4 + b * u * (dx * dx / d4 - 0.5 / d2)
    hyy = -b * dy * dy / d4 + b * u * (dy * dy / d4 - 0.5 / d2)
    hxy = b * dx * dy / d4 * (u - 1.0)

    h = np.zeros((2 * m + 2, 2 * m + 2))
    h[0, 0] = np.sum(hxx)
    h[1, 1] = np.sum(hyy)
    h[0, 1] = h[1, 0] = np.sum(hxy)
    inv_var = 1.0 / (sa * sa)
    for i in range(m):
        ix, iy = 2 + 2 * i, 3 + 2 * i
        # blind-anchor cross terms are the negated per-anchor blind terms
        h[0, ix] = h[ix, 0] = -hxx[i]
        h[0, iy] = h[iy, 0] = -hxy[i]
        h[1, ix] = h[ix, 1] = -hxy[i]
        h[1, iy] = h[iy, 1] = -hyy[i]
        h[ix, ix] = hxx[i] - inv_var[i]
        h[iy, iy] = hyy[i] - inv_var[i]
        h[ix, iy] = h[iy, ix] = hxy[i]
    return h


def fim(theta, noise):
    """Fisher information blocks from their closed forms.

    With ``Q_i`` the outer product of ``(x_i - x_b, y_i - y_b)`` and
    ``c_i = b_i / d_i^4``::

        F11 = sum_i c_i Q_i
        F12 = -[c_1 Q_1, ..., c_M Q_M]
        F22 = blockdiag(c_i Q_i + I / sigma_a_i^2)
    """
    m = theta.n_anchors
    sa, sp = noise.broadcast(m)
    diff, d2 = _geometry(theta)
    c = b_coefficient(sp, noise.params.eta) / (d2 * d2)
    cq = c[:, None, None] * np.einsum("ij,ik->ijk", diff, diff)  # (M, 2, 2)
    f11 = np.sum(cq, axis=0)
    f12 = -np.hstack(list(cq))
    f22 = np.zeros((2 * m, 2 * m))
    for i in range(m):
        f22[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = cq[i] + np.eye(2) / (sa[i] * sa[i])
    return FimBlocks(f11=f11, f12=f12, f22=f22)


def _inv2(a):
    """Closed-form inverse of a stack of 2x2 matrices, shape (..., 2, 2)."""
    det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    scale = np.max(np.abs(a), axis=(-2, -1))
    if np.any(~(np.abs(det) > 1e-300)) or np.any(np.abs(det) <= 1e-15 * scale * scale):
        raise SingularGeometryError("2x2 block is singular")
    inv = np.empty_like(a)
    inv[..., 0, 0] = a[..., 1, 1]
    inv[..., 1, 1] = a[..., 0, 0]
    inv[..., 0, 1] = -a[..., 0, 1]
    inv[..., 1, 0] = -a[..., 1, 0]
    return inv / det[..., None, None]


def f22_blocks(blocks):
    """The ``M`` diagonal 2x2 blocks of ``F22``, shape ``(M, 2, 2)``."""
    m = blocks.f22.shape[0] // 2
    idx = np.arange(m)
    f = blocks.f22.reshape(m, 2, m, 2)
    return f[idx, :, idx, :]


def schur_complement(blocks):
    """``F11 - F12 F22^{-1} F12^T`` with ``F22`` inverted block by block."""
    m = blocks.f22.shape[0] // 2
    inv = _inv2(f22_blocks(blocks))
    f12 = blocks.f12.reshape(2, m, 2).transpose(1, 0, 2)  # (M, 2, 2)
    correction = np.einsum("mij,mjk,mlk->il", f12, inv, f12)
    s = blocks.f11 - correction
    return 0.5 * (s + s.T)


def crlb_rmse_bound(blocks):
    """Lower bound (m) on the RMSE of any unbiased blind-node estimator.

    ``sqrt(Tr{(F11 - F12 F22^{-1} F12^T)^{-1}})``.

    Check value: ``M`` anchors evenly spaced on a circle of radius ``d``
    around the blind node, with ``sigma_a -> 0``, have ``F11 = (b M / 2 d^2) I``
    and the bound is ``2 d / sqrt(b M)``.  For ``d = 10``, ``M = 6``,
    ``sigma_p = 2 dB``, ``eta = 3.567`` that is 1.0541 m.

    Raises:
        SingularGeometryError: if the Schur complement is not positive
            definite or its condition number exceeds 1e12 (e.g. every anchor
            collinear with the blind node).
    """
    s = schur_complement(blocks)
    tr = s[0, 0] + s[1, 1]
    det = s[0, 0] * s[1, 1] - s[0, 1] * s[1, 0]
    disc = math.sqrt(max(0.25 * (s[0, 0] - s[1, 1]) ** 2 + s[0, 1] ** 2, 0.0))
    lam_max = 0.5 * tr + disc
    lam_min = det / lam_max if lam_max > 0 else 0.0
    if not lam_min > 0 or lam_max / lam_min > _CONDITION_LIMIT:
        raise SingularGeometryError("Fisher information about the blind node is singular")
    return math.sqrt(tr / det)
