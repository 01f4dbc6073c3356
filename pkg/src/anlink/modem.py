"""BPSK over Rayleigh fading and the Bob-vs-Eve BER comparison.

Conventions fixed here: bit 0 maps to +1, bit 1 to -1, a received sample
with Re == 0 demodulates to 0. Symbols have unit energy and the fading
gain is CN(0,1), so ``snr_db`` is the average received SNR and the AWGN
variance is ``10**(-snr_db/10)``.

The BER sweep models each party's information path as this scalar
per-symbol Rayleigh link; the artificial-noise term reaches the receiver
through the actual multi-antenna construction, redrawn per fading block:
``h @ (Z v)`` for the legitimate node (nulled to machine precision) and
``g @ (Z v)`` for the eavesdropper. The eavesdropper's projected
information gain is CN(0,1) and independent of her leakage row, so the
scalar link plus leakage is distributionally exact for her as well.
"""

from dataclasses import dataclass

import numpy as np

from . import linalg, wiretap
from .errors import EmptyLatentError

SCENARIOS = ("no_an", "bob_with_an", "eve_with_an")

DEFAULT_LATENT_RANGE = (-4.0, 4.0)


@dataclass(frozen=True)
class LinkConfig:
    """Geometry of the artificial-noise construction behind a BER sweep."""

    n_t: int = 4
    sigma_v_sq: float = 10.0
    per_symbol_fading: bool = True
    an_block_len: int = 100


@dataclass(frozen=True)
class BerPoint:
    snr_db: float
    ber: float
    trials: int
    errors: int


def bpsk_modulate(bits):
    """Map bits to unit-energy antipodal symbols: 0 -> +1, 1 -> -1."""
    bits = np.asarray(bits)
    return (1.0 - 2.0 * bits).astype(np.complex128)


def bpsk_demodulate(samples):
    """Hard decision on the real part: Re >= 0 -> 0, Re < 0 -> 1."""
    return (np.real(np.asarray(samples)) < 0).astype(np.uint8)


def rayleigh_link(symbols, snr_db, per_symbol_fading, rng):
    """Pass symbols through flat Rayleigh fading plus AWGN.

    Returns ``(received, gains)`` with ``received = g * s + n``. The gain is
    redrawn per symbol when ``per_symbol_fading`` is set, otherwise one
    draw covers the whole block. ``snr_db = inf`` (or None) disables noise.
    """
    symbols = np.asarray(symbols, dtype=np.complex128)
    n = symbols.shape[0]
    if per_symbol_fading:
        gains = linalg.sample_complex_gaussian(n, 1.0, rng)
    else:
        gains = np.full(n, linalg.sample_complex_gaussian(1, 1.0, rng)[0])
    received = gains * symbols
    if snr_db is not None and np.isfinite(snr_db):
        sigma_sq = 10.0 ** (-snr_db / 10.0)
        received = received + linalg.sample_complex_gaussian(n, sigma_sq, rng)
    return received, gains


def equalize(received, gains):
    """Zero-forcing coherent equalizer: r * conj(g) / |g|^2."""
    gains = np.asarray(gains)
    return np.asarray(received) * np.conj(gains) / (np.abs(gains) ** 2)


def rayleigh_bpsk_ber(snr_linear):
    """Closed-form coherent BPSK BER on Rayleigh fading:
    (1 - sqrt(snr / (1 + snr))) / 2."""
    g = np.asarray(snr_linear, dtype=float)
    return 0.5 * (1.0 - np.sqrt(g / (1.0 + g)))


def ber_sweep(snr_db_grid, bits_per_point, scenario, link_config=None, rng=None):
    """Monte-Carlo BER on an SNR grid for one scenario.

    Scenarios: ``no_an`` (plain Rayleigh link), ``bob_with_an`` (legitimate
    node, artificial noise active but nulled), ``eve_with_an``
    (eavesdropper, artificial noise leaks through her channel).

    Sweeps started from identically seeded generators share the same bits,
    fading and noise across scenarios, so scenario differences isolate the
    artificial-noise term.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")
    if bits_per_point < 10_000:
        raise ValueError("bits_per_point must be at least 10000")
    link = link_config if link_config is not None else LinkConfig()
    if rng is None:
        rng = np.random.default_rng(0)
    points = []
    for snr_db in snr_db_grid:
        child = rng.spawn(1)[0]
        points.append(_ber_point(float(snr_db), int(bits_per_point), scenario, link, child))
    return points


def _ber_point(snr_db, n_bits, scenario, link, rng):
    bit_rng, link_rng, an_rng = rng.spawn(3)
    bits = bit_rng.integers(0, 2, n_bits).astype(np.uint8)
    received, gains = rayleigh_link(
        bpsk_modulate(bits), snr_db, link.per_symbol_fading, link_rng
    )
    if scenario != "no_an":
        received = received + _an_leakage_samples(scenario, link, n_bits, an_rng)
    bits_hat = bpsk_demodulate(equalize(received, gains))
    errors = int(np.count_nonzero(bits_hat != bits))
    return BerPoint(snr_db=snr_db, ber=errors / n_bits, trials=n_bits, errors=errors)


def _an_leakage_samples(scenario, link, n_symbols, rng):
    """Per-symbol artificial-noise term seen by one party.

    Channel geometry (h, g, null basis) is redrawn per fading block; the
    noise coordinates v are redrawn per symbol, as the construction
    requires. Both parties consume identical draws, differing only in
    which channel row projects the noise.
    """
    n_null = link.n_t - 1
    block = link.an_block_len
    n_blocks = -(-n_symbols // block)
    rows = np.empty((n_blocks, n_null), dtype=np.complex128)
    for b in range(n_blocks):
        pair = wiretap.draw_channel_pair(link.n_t, 1, 1, 0.0, 0.0, rng)
        z = linalg.null_space_basis(pair.h)
        row = pair.h if scenario == "bob_with_an" else pair.g
        rows[b] = row[0] @ z
    v = linalg.sample_complex_gaussian(n_blocks * n_null * block, link.sigma_v_sq, rng)
    v = v.reshape(n_blocks, n_null, block)
    leak = np.einsum("bm,bmt->bt", rows, v)
    return leak.reshape(-1)[:n_symbols]


def quantize_latent(latent, bits_per_value, value_range=DEFAULT_LATENT_RANGE):
    """Uniform midrise quantizer; returns an MSB-first bit stream.

    Values outside ``value_range`` are clamped. Output length is
    ``len(latent) * bits_per_value``.
    """
    latent = np.asarray(latent, dtype=float).reshape(-1)
    if latent.size == 0:
        raise EmptyLatentError("latent vector is empty")
    if not 1 <= bits_per_value <= 16:
        raise ValueError(f"bits_per_value must be in [1, 16], got {bits_per_value}")
    lo, hi = value_range
    if not hi > lo:
        raise ValueError(f"invalid value range {value_range}")
    levels = 1 << bits_per_value
    step = (hi - lo) / levels
    idx = np.floor((np.clip(latent, lo, hi) - lo) / step).astype(np.int64)
    idx = np.clip(idx, 0, levels - 1)
    shifts = np.arange(bits_per_value - 1, -1, -1)
    return ((idx[:, None] >> shifts[None, :]) & 1).astype(np.uint8).reshape(-1)


def dequantize_latent(bits, bits_per_value, value_range=DEFAULT_LATENT_RANGE):
    """Inverse of :func:`quantize_latent`: cell-center reconstruction."""
    bits = np.asarray(bits).reshape(-1)
    if bits.size == 0:
        raise EmptyLatentError("bit stream is empty")
    if not 1 <= bits_per_value <= 16:
        raise ValueError(f"bits_per_value must be in [1, 16], got {bits_per_value}")
    if bits.size % bits_per_value:
        raise ValueError(
            f"bit stream length {bits.size} not a multiple of {bits_per_value}"
        )
    lo, hi = value_range
    weights = 1 << np.arange(bits_per_value - 1, -1, -1)
    idx = bits.reshape(-1, bits_per_value).astype(np.int64) @ weights
    step = (hi - lo) / (1 << bits_per_value)
    return lo + (idx + 0.5) * step
