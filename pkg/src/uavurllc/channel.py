"""Air-to-ground channel: path gain, Rician fading and finite-blocklength rate.

All quantities are linear (W, Hz, W/Hz).  Helpers for dB conversion live at the
bottom; configuration code converts once at load time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import ndtri

__all__ = [
    "ChannelParams",
    "Position2D",
    "Position3D",
    "FadingSample",
    "path_gain",
    "sample_fading",
    "sample_fading_power",
    "q_inv",
    "q_func",
    "dispersion",
    "achievable_rate",
    "snr",
    "db_to_linear",
    "dbm_to_watt",
]


@dataclass(frozen=True)
class ChannelParams:
    gamma0: float = 1e-3
    pathloss_exp: float = 2.0
    noise_density: float = 10 ** (-174 / 10) * 1e-3
    rb_bandwidth: float = 180e3
    rician_k: float = 10.0
    blocklength: int = 168
    decode_err: float = 1e-5
    ref_distance: float = 1.0

    def __post_init__(self):
        if self.gamma0 <= 0 or self.noise_density <= 0 or self.rb_bandwidth <= 0:
            raise ValueError("gamma0, noise_density and rb_bandwidth must be positive")
        if self.pathloss_exp <= 0:
            raise ValueError("pathloss_exp must be positive")
        if self.rician_k < 0:
            raise ValueError("rician_k must be non-negative")
        if int(self.blocklength) != self.blocklength or self.blocklength < 1:
            raise ValueError("blocklength must be a positive integer")
        if not 0 < self.decode_err <= 0.5:
            raise ValueError("decode_err must lie in (0, 0.5]")

    @property
    def noise_power(self) -> float:
        """Noise power over one RB, n0 * omega (W)."""
        return self.noise_density * self.rb_bandwidth

    @property
    def fbl_coeff(self) -> float:
        """Q^-1(decode_err) / sqrt(n); multiplies sqrt(V) in the rate penalty."""
        return q_inv(self.decode_err) / math.sqrt(self.blocklength)


class Position2D(NamedTuple):
    x: float
    y: float


class Position3D(NamedTuple):
    x: float
    y: float
    h: float

    @property
    def xy(self) -> Position2D:
        return Position2D(self.x, self.y)


class FadingSample(NamedTuple):
    rho: complex


def path_gain(params: ChannelParams, uav, user):
    """Distance-based attenuation ``gamma0 * d^-theta``.

    ``user`` may be a single (x, y) pair or an array of shape (U, 2); the
    result is then a float or a length-U array.
    """
    h = uav[2]
    if h <= 0:
        raise ValueError("UAV altitude must be positive")
    user = np.asarray(user, dtype=float)
    dx = user[..., 0] - uav[0]
    dy = user[..., 1] - uav[1]
    d2 = h * h + dx * dx + dy * dy
    d2 = d2 / (params.ref_distance * params.ref_distance)
    g = params.gamma0 * d2 ** (-0.5 * params.pathloss_exp)
    return float(g) if np.ndim(g) == 0 else g


def sample_fading(params: ChannelParams, rng: np.random.Generator, size=None):
    """Draw Rician small-scale coefficients with unit mean power.

    The line-of-sight component has zero phase.  With ``size=None`` a single
    :class:`FadingSample` is returned, otherwise a complex array.
    """
    k = params.rician_k
    shape = () if size is None else size
    # real and imaginary parts drawn as adjacent pairs, so a longer draw
    # extends a shorter one from the same generator state
    z = rng.standard_normal(tuple(np.atleast_1d(shape)) + (2,) if shape != () else (2,))
    scatter = (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0)
    if math.isinf(k):
        rho = np.ones(shape, dtype=complex)
    else:
        rho = math.sqrt(k / (k + 1.0)) + math.sqrt(1.0 / (k + 1.0)) * scatter
    if size is None:
        return FadingSample(complex(rho))
    return rho


def sample_fading_power(params: ChannelParams, rng: np.random.Generator, size) -> np.ndarray:
    """|rho|^2 for an array of independent fading draws."""
    return np.abs(sample_fading(params, rng, size)) ** 2


def q_func(x):
    """Gaussian tail probability Q(x)."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def q_inv(theta: float) -> float:
    """Inverse of the Gaussian tail function, Q(q_inv(theta)) == theta."""
    if not 0.0 < theta < 1.0:
        raise ValueError(f"q_inv needs theta in (0, 1), got {theta!r}")
    # ndtri is accurate in the lower tail, so invert Phi(-x) = theta directly.
    return float(-ndtri(theta))


def dispersion(snr_lin):
    """Channel dispersion ``1 - 1/(1 + snr)``."""
    snr_lin = np.asarray(snr_lin, dtype=float)
    v = snr_lin / (1.0 + snr_lin)
    return float(v) if v.ndim == 0 else v


def snr(params: ChannelParams, power, gain):
    return np.asarray(power, dtype=float) * np.asarray(gain, dtype=float) / params.noise_power


def achievable_rate(params: ChannelParams, assigned, power, gain, *, penalty: bool = True):
    """Finite-blocklength rate over one RB in bit/s.

    ``assigned * [w log2(1 + snr) - sqrt(V/n) Q^-1(Theta)]``, clamped at zero.
    The dispersion penalty is not scaled by the RB bandwidth.  Pass
    ``penalty=False`` to get the plain Shannon term.  Broadcasts over arrays.
    """
    s = snr(params, power, gain)
    rate = params.rb_bandwidth * np.log2(1.0 + s)
    if penalty:
        rate = rate - np.sqrt(dispersion(s)) * params.fbl_coeff
    rate = np.asarray(assigned, dtype=float) * np.maximum(rate, 0.0)
    return float(rate) if rate.ndim == 0 else rate


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3
