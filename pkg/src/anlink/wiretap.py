"""Block-fading wiretap channel with null-space artificial noise.

The transmitter knows the legitimate receiver's channel H (fed back
perfectly under the block-fading assumption) but not the eavesdropper's
channel G. Information symbols ride the matched beamformer
``p = H^H / ||H||``; artificial noise ``w = Z v`` is drawn in the null
space of H, so the receiver never sees it while the eavesdropper picks up
``G w`` on top of her thermal noise. Capacities are reported in bits per
channel use (base-2 logs).
"""

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import DimensionMismatchError, ZeroChannelError

ZERO_CHANNEL_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ChannelPair:
    """One block-fading draw: receiver channel ``h``, eavesdropper channel
    ``g`` (one row per receive antenna) and the two noise floors."""

    h: np.ndarray
    g: np.ndarray
    sigma_n_sq: float
    sigma_e_sq: float

    @property
    def n_t(self):
        return self.h.shape[1]


@dataclass(frozen=True)
class AnParams:
    """Transmit power split: ``sigma_u_sq`` on the information symbol,
    ``sigma_v_sq`` per null-space dimension of artificial noise."""

    sigma_u_sq: float = 1.0
    sigma_v_sq: float = 1.0


@dataclass(frozen=True)
class SecrecyReport:
    """Per-realization capacities and their gap, all in bits/use."""

    bob_capacity: float
    eve_capacity: float
    secrecy_lower_bound: float
    an_leakage_power: float


def _as_row(h, name="channel"):
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim == 2:
        if h.shape[0] != 1:
            raise DimensionMismatchError(
                f"{name} must be a single row (one receive antenna), got {h.shape}"
            )
        h = h[0]
    elif h.ndim != 1:
        raise DimensionMismatchError(f"{name} must be 1-D or 2-D, got {h.shape}")
    return h


def draw_channel_pair(n_t, n_r, n_e, sigma_n_sq, sigma_e_sq, rng):
    """Draw one block: independent i.i.d. CN(0,1) entries for both channels."""
    if min(n_t, n_r, n_e) < 1:
        raise ValueError("antenna counts must be >= 1")
    h = linalg.sample_complex_gaussian(n_r * n_t, 1.0, rng).reshape(n_r, n_t)
    g = linalg.sample_complex_gaussian(n_e * n_t, 1.0, rng).reshape(n_e, n_t)
    return ChannelPair(h=h, g=g, sigma_n_sq=float(sigma_n_sq), sigma_e_sq=float(sigma_e_sq))


def beamformer(h):
    """Matched unit-norm beamformer ``p = h^H / ||h||`` for a 1-row channel.

    Satisfies ``h @ p == ||h||`` (real, positive), which maximizes the
    average rate to the receiver when the eavesdropper channel is unknown.
    """
    row = _as_row(h)
    gain = np.linalg.norm(row)
    if gain < ZERO_CHANNEL_TOLERANCE:
        raise ZeroChannelError("channel norm below tolerance; beamformer undefined")
    return row.conj() / gain


def make_artificial_noise(h, params, rng):
    """Artificial-noise vector ``w = Z v`` with ``v`` i.i.d. CN(0, sigma_v_sq).

    ``Z`` is an orthonormal null-space basis of ``h``, so ``h @ w == 0`` and
    ``E||w||^2 == (n_t - rank(h)) * sigma_v_sq``.
    """
    z = linalg.null_space_basis(h)
    v = linalg.sample_complex_gaussian(z.shape[1], params.sigma_v_sq, rng)
    return z @ v


def transmit(u, h, params, rng):
    """Transmit vector ``x = p*u + w`` for one information symbol ``u``.

    The receiver's channel nulls the noise term: ``h @ x == ||h|| * u``.
    """
    p = beamformer(h)
    w = make_artificial_noise(h, params, rng)
    return p * u + w


def propagate(channel_row, x, noise_variance, rng):
    """One received sample: ``channel_row . x`` plus CN(0, noise_variance)."""
    row = _as_row(channel_row)
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 1 or row.shape[0] != x.shape[0]:
        raise DimensionMismatchError(
            f"channel of length {row.shape[0]} cannot receive signal of shape {x.shape}"
        )
    noise = linalg.sample_complex_gaussian(1, noise_variance, rng)[0]
    return complex(row @ x + noise)


def an_leakage_power(g, h, sigma_v_sq):
    """Mean artificial-noise power at the eavesdropper, E|g w|^2.

    Equals ``sigma_v_sq * ||g Z||_F^2`` for the null-space basis Z of ``h``:
    with ``w = Z v`` and i.i.d. v, E|g Z v|^2 = sigma_v_sq * ||g Z||^2.
    """
    if sigma_v_sq == 0:
        return 0.0  # zero-power noise leaks nothing, even without a null space
    z = linalg.null_space_basis(h)
    g = np.atleast_2d(np.asarray(g, dtype=np.complex128))
    return float(sigma_v_sq) * float(np.linalg.norm(g @ z) ** 2)


def secrecy_lower_bound(pair, params):
    """Capacity gap between the receiver and the eavesdropper for one draw.

    receiver:     log2(1 + |h p|^2 sigma_u^2 / sigma_n^2)
    eavesdropper: log2(1 + |g p|^2 sigma_u^2 / (E|g w|^2 + sigma_e^2))

    The gap may be negative for an unlucky single draw; on average the
    beamforming gain plus the leakage keep it positive.
    """
    h_row = _as_row(pair.h, "h")
    g_row = _as_row(pair.g, "g")
    p = beamformer(pair.h)
    leak = an_leakage_power(pair.g, pair.h, params.sigma_v_sq)
    bob_snr_num = float(np.abs(h_row @ p) ** 2) * params.sigma_u_sq
    eve_snr_num = float(np.abs(g_row @ p) ** 2) * params.sigma_u_sq
    if pair.sigma_n_sq > 0:
        bob = float(np.log2(1.0 + bob_snr_num / pair.sigma_n_sq))
    else:
        bob = np.inf
    eve_denom = leak + pair.sigma_e_sq
    if eve_denom > 0:
        eve = float(np.log2(1.0 + eve_snr_num / eve_denom))
    else:
        eve = np.inf
    return SecrecyReport(
        bob_capacity=bob,
        eve_capacity=eve,
        secrecy_lower_bound=bob - eve,
        an_leakage_power=leak,
    )
