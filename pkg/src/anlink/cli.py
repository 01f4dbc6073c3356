"""Command-line front end: train, eval, sweep, ber, secrecy.

Every subcommand takes ``--config <json>`` plus optional ``--seed`` and
``--output-dir`` overrides. The output directory resolves as: flag, then
the ANLINK_OUTPUT_DIR environment variable, then the config value.
"""

import argparse
import dataclasses
import logging
import os

import numpy as np

from . import modem, pipeline, wiretap

logger = logging.getLogger(__name__)

_STREAM_BER, _STREAM_SECRECY = 202, 303


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="anlink",
        description="Secure compressed-image link simulator "
                    "(autoencoder + null-space artificial noise).")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON experiment config")
    common.add_argument("--seed", type=int, help="override config seed")
    common.add_argument("--output-dir", help="override output directory")

    sub.add_parser("train", parents=[common],
                   help="train one autoencoder per configured latent length")
    p_eval = sub.add_parser("eval", parents=[common],
                            help="evaluate a single latent length over the SNR grid")
    p_eval.add_argument("--latent-length", type=int,
                        help="latent length to evaluate (default: first configured)")
    p_eval.add_argument("--workers", type=int, default=1)
    p_sweep = sub.add_parser("sweep", parents=[common],
                             help="full latent-length x SNR sweep with CSV and plots")
    p_sweep.add_argument("--workers", type=int, default=1)
    p_ber = sub.add_parser("ber", parents=[common],
                           help="BER vs SNR for the three link scenarios")
    p_ber.add_argument("--bits", type=int, default=200_000,
                       help="bits per grid point")
    p_sec = sub.add_parser("secrecy", parents=[common],
                           help="Monte-Carlo secrecy bound over the SNR grid")
    p_sec.add_argument("--trials", type=int, default=1000)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s")

    config = pipeline.load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    out = args.output_dir or os.environ.get(pipeline.OUTPUT_DIR_ENV)
    if out:
        overrides["output_dir"] = out
    if overrides:
        config = dataclasses.replace(config, **overrides)

    handler = {
        "train": _cmd_train,
        "eval": _cmd_eval,
        "sweep": _cmd_sweep,
        "ber": _cmd_ber,
        "secrecy": _cmd_secrecy,
    }[args.command]
    return handler(config, args)


def _cmd_train(config, args):
    dataset = pipeline.load_dataset(config.dataset_path, "train")
    for latent_length in config.latent_lengths:
        _, history = pipeline.train_and_save(config, latent_length, dataset=dataset)
        print(f"L={latent_length}: loss {history[0]:.5f} -> {history[-1]:.5f} "
              f"({len(history)} steps)")
    return 0


def _cmd_eval(config, args):
    latent_length = args.latent_length or config.latent_lengths[0]
    config = dataclasses.replace(config, latent_lengths=(latent_length,))
    report = pipeline.run_end_to_end(config, workers=args.workers)
    path = pipeline.emit_csv(report, os.path.join(config.output_dir, "report.csv"))
    _print_cells(report)
    print(f"wrote {path}")
    return 0


def _cmd_sweep(config, args):
    report = pipeline.run_end_to_end(config, workers=args.workers,
                                     train_if_missing=True)
    out = config.output_dir
    paths = [pipeline.emit_csv(report, os.path.join(out, "report.csv")),
             pipeline.emit_secrecy_csv(report, os.path.join(out, "secrecy_cells.csv"))]
    paths += pipeline.emit_plots(report, out)
    _print_cells(report)
    for p in paths:
        print(f"wrote {p}")
    return 0


def _cmd_ber(config, args):
    import csv

    link = modem.LinkConfig(n_t=config.n_t, sigma_v_sq=config.sigma_v_sq)
    results = {}
    for scenario in modem.SCENARIOS:
        # identical seeding per scenario aligns bits, fading and noise
        rng = np.random.default_rng([config.seed, _STREAM_BER])
        results[scenario] = modem.ber_sweep(config.snr_grid_db, args.bits,
                                            scenario, link, rng)
    os.makedirs(config.output_dir, exist_ok=True)
    path = os.path.join(config.output_dir, "ber.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "snr_db", "ber", "trials", "errors"])
        for scenario, points in results.items():
            for pt in points:
                writer.writerow([scenario, f"{pt.snr_db:.12g}", f"{pt.ber:.12g}",
                                 pt.trials, pt.errors])
    for scenario, points in results.items():
        line = "  ".join(f"{pt.snr_db:g}dB:{pt.ber:.4f}" for pt in points)
        print(f"{scenario:12s} {line}")
    _plot_ber(results, config)
    print(f"wrote {path}")
    return 0


def _plot_ber(results, config):
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    styles = {"no_an": "k^-", "bob_with_an": "bo-", "eve_with_an": "rs--"}
    for scenario, points in results.items():
        ax.semilogy([p.snr_db for p in points], [max(p.ber, 1e-7) for p in points],
                    styles[scenario], label=scenario)
    grid = np.linspace(min(config.snr_grid_db), max(config.snr_grid_db), 100)
    ax.semilogy(grid, modem.rayleigh_bpsk_ber(10 ** (grid / 10)), "g:",
                label="Rayleigh closed form")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("BER")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    path = os.path.join(config.output_dir, "ber_vs_snr.svg")
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _cmd_secrecy(config, args):
    import csv

    an = wiretap.AnParams(sigma_u_sq=config.sigma_u_sq, sigma_v_sq=config.sigma_v_sq)
    os.makedirs(config.output_dir, exist_ok=True)
    path = os.path.join(config.output_dir, "secrecy.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["snr_db", "bob_capacity_mean", "eve_capacity_mean",
                         "secrecy_lower_bound_mean", "positive_fraction", "trials"])
        for si, snr_db in enumerate(config.snr_grid_db):
            sigma_sq = config.sigma_u_sq * 10.0 ** (-float(snr_db) / 10.0)
            rng = np.random.default_rng([config.seed, _STREAM_SECRECY, si])
            reports = []
            for _ in range(args.trials):
                pair = wiretap.draw_channel_pair(config.n_t, 1, 1,
                                                 sigma_sq, sigma_sq, rng)
                reports.append(wiretap.secrecy_lower_bound(pair, an))
            bounds = np.array([r.secrecy_lower_bound for r in reports])
            row = [f"{float(snr_db):.12g}",
                   f"{np.mean([r.bob_capacity for r in reports]):.12g}",
                   f"{np.mean([r.eve_capacity for r in reports]):.12g}",
                   f"{np.mean(bounds):.12g}",
                   f"{np.mean(bounds > 0):.12g}",
                   args.trials]
            writer.writerow(row)
            print(f"{float(snr_db):6.1f} dB: bound {np.mean(bounds):7.3f} bits/use, "
                  f"positive in {100 * np.mean(bounds > 0):5.1f}% of draws")
    print(f"wrote {path}")
    return 0


def _print_cells(report):
    for cell in report.cells:
        nm = cell.metrics["normalized_mse"]
        ps = cell.metrics["psnr_db"]
        print(f"L={cell.latent_length:<4d} snr={cell.snr_db:>5.1f}dB {cell.party:4s}"
              f"  nmse={nm[0]:.4f}±{nm[1]:.4f}  psnr={ps[0]:.2f}dB  (n={nm[2]})")


if __name__ == "__main__":
    raise SystemExit(main())
