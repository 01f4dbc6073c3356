"""anlink: secure compressed-image transmission over a wiretap channel.

A convolutional autoencoder compresses images into latent codes; the
transmitter beamforms them toward the legitimate receiver and fills the
null space of the receiver's channel with artificial noise, degrading
only the eavesdropper. The package measures reconstruction quality,
secrecy-capacity bounds and BER for both parties.
"""

from . import cae, cli, datasets, errors, linalg, metrics, modem, pipeline, wiretap
from .cae import ModelParams, TrainConfig, decode, encode, gradient_check, train
from .errors import AnlinkError
from .metrics import QualityReport, compression_ratio, normalized_mse, psnr
from .modem import (
    BerPoint,
    LinkConfig,
    ber_sweep,
    bpsk_demodulate,
    bpsk_modulate,
    dequantize_latent,
    quantize_latent,
    rayleigh_bpsk_ber,
    rayleigh_link,
)
from .pipeline import (
    ExperimentConfig,
    RunReport,
    emit_csv,
    emit_plots,
    load_checkpoint,
    load_config,
    load_dataset,
    run_end_to_end,
    save_checkpoint,
)
from .wiretap import (
    AnParams,
    ChannelPair,
    SecrecyReport,
    an_leakage_power,
    beamformer,
    draw_channel_pair,
    make_artificial_noise,
    propagate,
    secrecy_lower_bound,
    transmit,
)

__version__ = "0.1.0"
