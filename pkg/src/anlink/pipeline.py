"""End-to-end experiments: image -> latent -> protected channel -> both decoders.

For every test image the orchestrator encodes a latent code, sends it
through one block-fading channel draw (beamformed information symbols plus
null-space artificial noise), lets both the legitimate receiver and the
eavesdropper equalize with their own channel knowledge, decodes both with
the same decoder (worst case: the eavesdropper knows the model), and
aggregates quality metrics per grid cell.

Conventions: ``snr_db`` is transmit-referenced, ``sigma_n^2 = sigma_u^2 *
10**(-snr_db/10)`` with the same floor for both parties; the receiver
additionally enjoys the array gain ``||H||``. Analog transport scales each
latent to symbol power ``sigma_u^2`` (scale known at the receivers, in
line with the perfect-side-information assumptions); digital transport
quantizes the unit-RMS latent and sends BPSK. Per-trial random streams
derive from ``(seed, latent_length, snr index, image index)``, never from
scheduling order, so reports and CSV files are byte-stable across runs
and worker counts.
"""

import csv
import dataclasses
import json
import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import cae, datasets, linalg, metrics, modem, wiretap
from .errors import (
    ConfigInvalidError,
    InconsistentDimsError,
    IoFailureError,
    MissingCheckpointError,
    MissingPathError,
    VersionMismatchError,
)

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "ANLINK_OUTPUT_DIR"

CHECKPOINT_MAGIC = b"ANLK"
CHECKPOINT_VERSION = 1

QUALITY_METRICS = ("normalized_mse", "plain_mse", "psnr_db")
PARTIES = ("bob", "eve")

# fixed stream tags so unrelated draws never collide
_STREAM_TRAIN, _STREAM_CELL = 7, 101


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_path: str
    latent_lengths: tuple = (32, 64, 128, 256)
    n_t: int = 4
    snr_grid_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    sigma_v_sq: float = 10.0
    sigma_u_sq: float = 1.0
    transport: str = "analog"
    bits_per_value: int = 8
    train: cae.TrainConfig = cae.TrainConfig()
    seed: int = 0
    output_dir: str = "runs"

    def validate(self):
        if not self.latent_lengths:
            raise ConfigInvalidError("latent_lengths must not be empty")
        if any(int(l) < 1 for l in self.latent_lengths):
            raise ConfigInvalidError("latent lengths must be >= 1")
        if len(set(self.latent_lengths)) != len(self.latent_lengths):
            raise ConfigInvalidError("latent_lengths contains duplicates")
        if not self.snr_grid_db:
            raise ConfigInvalidError("snr_grid_db must not be empty")
        if self.n_t < 1:
            raise ConfigInvalidError("n_t must be >= 1")
        if self.sigma_v_sq > 0 and self.n_t < 2:
            raise ConfigInvalidError("artificial noise needs n_t >= 2")
        if self.sigma_v_sq < 0:
            raise ConfigInvalidError("sigma_v_sq must be >= 0")
        if self.sigma_u_sq <= 0:
            raise ConfigInvalidError("sigma_u_sq must be > 0")
        if self.transport not in ("analog", "digital"):
            raise ConfigInvalidError(f"unknown transport {self.transport!r}")
        if not 1 <= self.bits_per_value <= 16:
            raise ConfigInvalidError("bits_per_value must be in [1, 16]")
        return self


_CONFIG_KEYS = {f.name for f in dataclasses.fields(ExperimentConfig)}
_TRAIN_KEYS = {f.name for f in dataclasses.fields(cae.TrainConfig)}


def config_from_dict(raw):
    if not isinstance(raw, dict):
        raise ConfigInvalidError(f"config root must be an object, got {type(raw).__name__}")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigInvalidError(f"unknown config keys: {sorted(unknown)}")
    if "dataset_path" not in raw:
        raise ConfigInvalidError("config is missing required key 'dataset_path'")
    kwargs = dict(raw)
    train_raw = kwargs.pop("train", None)
    if train_raw is not None:
        if not isinstance(train_raw, dict):
            raise ConfigInvalidError("'train' must be an object")
        bad = set(train_raw) - _TRAIN_KEYS
        if bad:
            raise ConfigInvalidError(f"unknown train keys: {sorted(bad)}")
        kwargs["train"] = cae.TrainConfig(**train_raw)
    for key in ("latent_lengths", "snr_grid_db"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    try:
        config = ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigInvalidError(str(exc)) from exc
    return config.validate()


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigInvalidError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalidError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(raw)


# ---------------------------------------------------------------------------
# dataset ingestion

def load_dataset(path, split="train"):
    """Images as a list of (h, w, 1) float arrays in [0, 1].

    ``path`` may be one IDX image file or a directory holding either PNG
    files (lexicographic order), the conventional per-split IDX file names,
    or a ``<split>/`` subdirectory of PNGs.
    """
    p = Path(path)
    if not p.exists():
        raise MissingPathError(f"dataset path does not exist: {path}")
    if p.is_file():
        stack = datasets.read_idx_images(p)
    else:
        stack = _load_directory(p, split)
    images = [stack[i][:, :, np.newaxis] for i in range(stack.shape[0])]
    logger.info("loaded %d images of %dx%d from %s (split=%s)",
                len(images), stack.shape[1], stack.shape[2], path, split)
    return images


def _load_directory(p, split):
    pngs = sorted(p.glob("*.png"))
    if pngs:
        return _load_pngs(pngs)
    names = datasets.TRAIN_IDX_NAMES if split == "train" else datasets.TEST_IDX_NAMES
    for name in tuple(names) + tuple(n + ".gz" for n in names):
        candidate = p / name
        if candidate.exists():
            return datasets.read_idx_images(candidate)
    sub = p / split
    if sub.is_dir():
        pngs = sorted(sub.glob("*.png"))
        if pngs:
            return _load_pngs(pngs)
    raise MissingPathError(f"no IDX file or PNG images for split '{split}' under {p}")


def _load_pngs(paths):
    arrays = []
    shape = None
    for fp in paths:
        with Image.open(fp) as im:
            arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise InconsistentDimsError(f"{fp} is {arr.shape}, expected {shape}")
        arrays.append(arr)
    return np.stack(arrays)


# ---------------------------------------------------------------------------
# checkpoints

def checkpoint_path(output_dir, latent_length):
    return Path(output_dir) / "checkpoints" / f"cae_L{latent_length}.ckpt"


def save_checkpoint(params, path):
    """Versioned binary checkpoint: header, then float64 LE parameters in
    the fixed PARAM_FIELDS order."""
    arrays = [np.ascontiguousarray(getattr(params, f), dtype="<f8")
              for f in cae.PARAM_FIELDS]
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    blob += struct.pack("<IIII", params.width, params.height,
                        params.channels, params.latent_length)
    blob += struct.pack("<I", len(arrays))
    for arr in arrays:
        blob += struct.pack("<I", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
    for arr in arrays:
        blob += arr.tobytes()
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(bytes(blob))
    except OSError as exc:
        raise IoFailureError(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def load_checkpoint(path):
    path = Path(path)
    if not path.exists():
        raise MissingCheckpointError(f"no checkpoint at {path}")
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailureError(f"cannot read checkpoint {path}: {exc}") from exc

    view = memoryview(raw)
    if bytes(view[:4]) != CHECKPOINT_MAGIC:
        raise VersionMismatchError(f"{path}: not an anlink checkpoint")
    (version,) = struct.unpack_from("<I", view, 4)
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"{path}: format version {version}, this build reads {CHECKPOINT_VERSION}")
    width, height, channels, latent = struct.unpack_from("<IIII", view, 8)
    (n_arrays,) = struct.unpack_from("<I", view, 24)
    expected = cae.expected_shapes(width, height, channels, latent)
    if n_arrays != len(expected):
        raise VersionMismatchError(f"{path}: header lists {n_arrays} arrays, "
                                   f"expected {len(expected)}")
    offset = 28
    shapes = []
    for want in expected:
        (ndim,) = struct.unpack_from("<I", view, offset)
        offset += 4
        shape = struct.unpack_from(f"<{ndim}I", view, offset)
        offset += 4 * ndim
        if shape != want:
            raise VersionMismatchError(f"{path}: array shape {shape} does not "
                                       f"match expected {want}")
        shapes.append(shape)
    payload = sum(int(np.prod(s)) for s in shapes) * 8
    if len(raw) - offset != payload:
        raise IoFailureError(f"{path}: truncated payload "
                             f"({len(raw) - offset} of {payload} bytes)")
    arrays = {}
    for field, shape in zip(cae.PARAM_FIELDS, shapes):
        count = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        arrays[field] = arr.reshape(shape).astype(np.float64)
    return cae.ModelParams(width=width, height=height, channels=channels,
                           latent_length=latent, **arrays)


# ---------------------------------------------------------------------------
# the experiment itself

@dataclass(frozen=True)
class CellStats:
    latent_length: int
    snr_db: float
    party: str
    metrics: dict  # name -> (mean, std, trials)


@dataclass(frozen=True)
class SecrecyStats:
    latent_length: int
    snr_db: float
    bob_capacity_mean: float
    eve_capacity_mean: float
    secrecy_lower_bound_mean: float
    secrecy_lower_bound_std: float
    positive_fraction: float
    an_leakage_power_mean: float
    trials: int


@dataclass(frozen=True)
class RunReport:
    cells: list
    secrecy: list
    config: ExperimentConfig


def default_channel_factory(n_t, sigma_n_sq, sigma_e_sq, rng):
    return wiretap.draw_channel_pair(n_t, 1, 1, sigma_n_sq, sigma_e_sq, rng)


def train_and_save(config, latent_length, dataset=None):
    """Train one model and persist its checkpoint; returns (params, history)."""
    if dataset is None:
        dataset = load_dataset(config.dataset_path, "train")
    tcfg = dataclasses.replace(config.train, latent_length=int(latent_length))
    rng = np.random.default_rng([config.seed, _STREAM_TRAIN, int(latent_length)])
    params, history = cae.train(dataset, tcfg, rng)
    save_checkpoint(params, checkpoint_path(config.output_dir, latent_length))
    logger.info("trained L=%d: loss %.5f -> %.5f",
                latent_length, history[0], history[-1])
    return params, history


def run_end_to_end(config, workers=1, channel_factory=None, train_if_missing=False):
    """Evaluate the full grid; returns a RunReport with every cell exactly once."""
    config.validate()
    factory = channel_factory or default_channel_factory
    test_images = load_dataset(config.dataset_path, "test")
    imgs = np.stack(test_images).astype(np.float32)

    params_by_l = {}
    train_data = None
    for latent_length in config.latent_lengths:
        ck = checkpoint_path(config.output_dir, latent_length)
        if not ck.exists():
            if not train_if_missing:
                raise MissingCheckpointError(
                    f"no checkpoint for latent length {latent_length} at {ck}")
            if train_data is None:
                train_data = load_dataset(config.dataset_path, "train")
            train_and_save(config, latent_length, dataset=train_data)
        params_by_l[latent_length] = cae._to_dtype(load_checkpoint(ck), np.float32)

    latents_by_l = {
        latent_length: cae.encode(imgs, params)
        for latent_length, params in params_by_l.items()
    }

    grid = [(li, si) for li in range(len(config.latent_lengths))
            for si in range(len(config.snr_grid_db))]

    def job(cell):
        li, si = cell
        latent_length = config.latent_lengths[li]
        return _evaluate_cell(params_by_l[latent_length], latents_by_l[latent_length],
                              imgs, latent_length, si, config, factory)

    if workers <= 1:
        results = {cell: job(cell) for cell in grid}
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {cell: pool.submit(job, cell) for cell in grid}
        results = {cell: fut.result() for cell, fut in futures.items()}

    cells, secrecy = [], []
    for cell in grid:  # fixed order regardless of completion order
        bob_stats, eve_stats, secrecy_stats = results[cell]
        cells.extend([bob_stats, eve_stats])
        secrecy.append(secrecy_stats)
    return RunReport(cells=cells, secrecy=secrecy, config=config)


def _evaluate_cell(params, latents, imgs, latent_length, snr_index, config, factory):
    snr_db = float(config.snr_grid_db[snr_index])
    sigma_sq = config.sigma_u_sq * 10.0 ** (-snr_db / 10.0)
    n = imgs.shape[0]
    an = wiretap.AnParams(sigma_u_sq=config.sigma_u_sq, sigma_v_sq=config.sigma_v_sq)
    digital = config.transport == "digital"

    bob_lat = np.empty((n, latent_length), dtype=np.float32)
    eve_lat = np.empty_like(bob_lat)
    bob_ber = np.empty(n) if digital else None
    eve_ber = np.empty(n) if digital else None
    reports = []
    for i in range(n):
        rng = np.random.default_rng(
            [config.seed, _STREAM_CELL, int(latent_length), snr_index, i])
        pair = factory(config.n_t, sigma_sq, sigma_sq, rng)
        reports.append(wiretap.secrecy_lower_bound(pair, an))
        sent = _send_latent(latents[i].astype(np.float64), pair, config, rng)
        bob_lat[i], eve_lat[i] = sent[0], sent[1]
        if digital:
            bob_ber[i], eve_ber[i] = sent[2], sent[3]

    bob_rec = cae.decode(bob_lat, params)
    eve_rec = cae.decode(eve_lat, params)

    def cell_stats(party, rec, ber):
        per_metric = {name: [] for name in QUALITY_METRICS}
        for i in range(n):
            q = metrics.quality_report(np.asarray(rec[i], dtype=np.float64),
                                       np.asarray(imgs[i], dtype=np.float64),
                                       latent_length)
            per_metric["normalized_mse"].append(q.normalized_mse)
            per_metric["plain_mse"].append(q.plain_mse)
            per_metric["psnr_db"].append(q.psnr_db)
        stats = {name: (float(np.mean(vals)), float(np.std(vals)), n)
                 for name, vals in per_metric.items()}
        if ber is not None:
            stats["ber"] = (float(np.mean(ber)), float(np.std(ber)), n)
        return CellStats(latent_length=latent_length, snr_db=snr_db,
                         party=party, metrics=stats)

    bounds = np.array([r.secrecy_lower_bound for r in reports])
    secrecy_stats = SecrecyStats(
        latent_length=latent_length, snr_db=snr_db,
        bob_capacity_mean=float(np.mean([r.bob_capacity for r in reports])),
        eve_capacity_mean=float(np.mean([r.eve_capacity for r in reports])),
        secrecy_lower_bound_mean=float(np.mean(bounds)),
        secrecy_lower_bound_std=float(np.std(bounds)),
        positive_fraction=float(np.mean(bounds > 0)),
        an_leakage_power_mean=float(np.mean([r.an_leakage_power for r in reports])),
        trials=n,
    )
    return (cell_stats("bob", bob_rec, bob_ber),
            cell_stats("eve", eve_rec, eve_ber),
            secrecy_stats)


def _send_latent(latent, pair, config, rng):
    """One latent through one channel block; returns the two recovered
    latents (bob, eve) plus per-party bit error rates for digital transport."""
    rms = float(np.sqrt(np.mean(latent ** 2)))
    if rms < 1e-12:
        rms = 1.0
    su = np.sqrt(config.sigma_u_sq)
    if config.transport == "analog":
        u = latent.astype(np.complex128) * (su / rms)
        bob_rx, eve_rx, hp, gp = _propagate_block(u, pair, config.sigma_v_sq, rng)
        bob = np.real(bob_rx / hp) * (rms / su)
        eve = np.real(eve_rx / gp) * (rms / su)
        return bob, eve, None, None

    bits = modem.quantize_latent(latent / rms, config.bits_per_value)
    u = modem.bpsk_modulate(bits) * su
    bob_rx, eve_rx, hp, gp = _propagate_block(u, pair, config.sigma_v_sq, rng)
    bob_bits = modem.bpsk_demodulate(bob_rx / hp)  # hp is real and positive
    eve_bits = modem.bpsk_demodulate(eve_rx * np.conj(gp))
    bob = modem.dequantize_latent(bob_bits, config.bits_per_value) * rms
    eve = modem.dequantize_latent(eve_bits, config.bits_per_value) * rms
    return (bob, eve,
            float(np.mean(bob_bits != bits)), float(np.mean(eve_bits != bits)))


def _propagate_block(u, pair, sigma_v_sq, rng):
    """Block-fading propagation of symbol vector ``u`` to both parties.

    Equivalent to forming x = p*u + Zv per symbol and applying the two
    channel rows; the projected forms avoid materializing x.
    """
    h_row = pair.h[0]
    g_row = pair.g[0]
    p = wiretap.beamformer(pair.h)
    hp = complex(h_row @ p)
    gp = complex(g_row @ p)
    nsym = u.shape[0]
    if sigma_v_sq > 0 and pair.n_t >= 2:
        z = linalg.null_space_basis(pair.h)
        v = linalg.sample_complex_gaussian(z.shape[1] * nsym, sigma_v_sq, rng)
        v = v.reshape(z.shape[1], nsym)
        bob_leak = (h_row @ z) @ v
        eve_leak = (g_row @ z) @ v
    else:
        bob_leak = eve_leak = 0.0
    bob = hp * u + bob_leak + linalg.sample_complex_gaussian(nsym, pair.sigma_n_sq, rng)
    eve = gp * u + eve_leak + linalg.sample_complex_gaussian(nsym, pair.sigma_e_sq, rng)
    return bob, eve, hp, gp


# ---------------------------------------------------------------------------
# outputs

def _fmt(value):
    return f"{float(value):.12g}"


def emit_csv(report, path):
    """Quality table, one row per (latent_length, snr_db, party, metric)."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["latent_length", "snr_db", "party", "metric",
                             "mean", "std", "trials"])
            for cell in report.cells:
                for name, (mean, std, trials) in cell.metrics.items():
                    writer.writerow([cell.latent_length, _fmt(cell.snr_db),
                                     cell.party, name, _fmt(mean), _fmt(std), trials])
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc
    return path


def emit_secrecy_csv(report, path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["latent_length", "snr_db", "bob_capacity_mean",
                             "eve_capacity_mean", "secrecy_lower_bound_mean",
                             "secrecy_lower_bound_std", "positive_fraction",
                             "an_leakage_power_mean", "trials"])
            for s in report.secrecy:
                writer.writerow([s.latent_length, _fmt(s.snr_db),
                                 _fmt(s.bob_capacity_mean), _fmt(s.eve_capacity_mean),
                                 _fmt(s.secrecy_lower_bound_mean),
                                 _fmt(s.secrecy_lower_bound_std),
                                 _fmt(s.positive_fraction),
                                 _fmt(s.an_leakage_power_mean), s.trials])
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc
    return path


def emit_plots(report, out_dir):
    """SVG plots: per-L quality vs SNR, quality vs latent length, and BER
    vs SNR when the run measured bit errors."""
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = report.config
    written = []

    def take(latent_length, party, name):
        return [cell.metrics[name][0] for cell in report.cells
                if cell.latent_length == latent_length and cell.party == party]

    snrs = list(config.snr_grid_db)
    for latent_length in config.latent_lengths:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.semilogy(snrs, take(latent_length, "bob", "normalized_mse"),
                    "o-", label="receiver")
        ax.semilogy(snrs, take(latent_length, "eve", "normalized_mse"),
                    "s--", label="eavesdropper")
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel("normalized MSE")
        ax.set_title(f"latent length {latent_length}")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        p = out_dir / f"mse_vs_snr_L{latent_length}.svg"
        fig.savefig(p, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(p)

    fig, ax = plt.subplots(figsize=(6, 4))
    for si, snr in enumerate(snrs):
        ys = [cell.metrics["normalized_mse"][0] for cell in report.cells
              if cell.party == "bob" and cell.snr_db == snr]
        ax.semilogy(list(config.latent_lengths), ys, "o-", label=f"{snr:g} dB")
    ax.set_xlabel("latent length")
    ax.set_ylabel("receiver normalized MSE")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    p = out_dir / "mse_vs_latent.svg"
    fig.savefig(p, format="svg", metadata={"Date": None})
    plt.close(fig)
    written.append(p)

    if any("ber" in cell.metrics for cell in report.cells):
        fig, ax = plt.subplots(figsize=(6, 4))
        for latent_length in config.latent_lengths:
            ax.semilogy(snrs, take(latent_length, "bob", "ber"), "o-",
                        label=f"receiver L={latent_length}")
            ax.semilogy(snrs, take(latent_length, "eve", "ber"), "s--",
                        label=f"eavesdropper L={latent_length}")
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel("BER")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=8)
        p = out_dir / "ber_vs_snr.svg"
        fig.savefig(p, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(p)
    return written
