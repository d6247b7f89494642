"""Command-line interface.

    farfield simulate-rir | mix | masks | enhance | wpe | metrics | eer

Results go to stdout as JSON, progress to stderr. Exit status: 0 on
success, 1 on data errors (error JSON on stderr), 2 on usage or config
errors.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import config, formats, metrics, mixer, pipeline, roomsim
from .dereverb import wpe
from .dsp import Waveform, istft, stft
from .errors import ConfigError, FarfieldError

log = logging.getLogger("farfield")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _emit_error(kind, message, command=None):
    payload = {"error": kind, "message": str(message)}
    if command:
        payload["command"] = command
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")


class JsonArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("UsageError", message, self.prog)
        sys.exit(EXIT_USAGE)


def _print(obj):
    sys.stdout.write(json.dumps(obj, sort_keys=True, allow_nan=False) + "\n")


def _bool_flag(p, name, help):
    p.add_argument(f"--{name}", dest=name.replace("-", "_"), action="store_true", default=None, help=help)
    p.add_argument(f"--no-{name}", dest=name.replace("-", "_"), action="store_false",
                   help=f"disable --{name}")


def _wpe_flags(p):
    p.add_argument("--taps", type=int, help="WPE filter taps (default 10)")
    p.add_argument("--delay", type=int, help="WPE prediction delay in frames (default 3)")
    p.add_argument("--iters", type=int, dest="iterations", help="WPE iterations (default 5)")
    p.add_argument("--alpha", type=float, help="WPE variance smoothing coefficient (default 0.9999)")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="global seed (default 0)")
    common.add_argument("--workers", type=int, help="worker processes (default 1)")
    common.add_argument("--config", help="run config JSON (see docs/run_config.schema.json)")
    common.add_argument("--log-level", default="INFO", help="stderr log level")

    parser = JsonArgumentParser(prog="farfield", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=JsonArgumentParser)

    p = sub.add_parser("simulate-rir", parents=[common], help="simulate a room impulse response")
    p.add_argument("--out", required=True, help="output RIR (.wav float32 or .tfb1)")
    p.add_argument("--profile", choices=["train", "eval"])
    p.add_argument("--room", help="RoomSpec JSON to simulate instead of sampling one")
    p.add_argument("--room-out", help="write the RoomSpec JSON here")
    p.add_argument("--inversion", choices=["ism", "sabine"], default="ism",
                   help="RT60 to absorption mapping (default ism)")

    p = sub.add_parser("mix", parents=[common], help="build a mixture corpus from a manifest")
    p.add_argument("--manifest", help="JSON-lines manifest of mixture specs")
    p.add_argument("--out", required=True, help="corpus output directory")

    p = sub.add_parser("masks", parents=[common], help="write oracle masks for a corpus")
    p.add_argument("--in", dest="corpus", required=True, help="corpus directory")
    p.add_argument("--out", help="mask directory (default: next to each clip)")
    p.add_argument("--ref-channel", type=int, dest="reference_channel")

    p = sub.add_parser("enhance", parents=[common], help="run the enhancement chain on a corpus")
    p.add_argument("--in", dest="corpus", required=True, help="corpus directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--mask-source", choices=pipeline.MASK_SOURCES)
    p.add_argument("--mask-dir", help="directory of <clip_id>.tfb1 mask files")
    p.add_argument("--order", choices=pipeline.ORDERS)
    p.add_argument("--reference", choices=pipeline.REFERENCES, help="scoring reference")
    p.add_argument("--mu", type=float, help="SDW-MWF trade-off (default 0.1)")
    _bool_flag(p, "rank1", "rank-1 speech covariance (default on)")
    p.add_argument("--ref-channel", type=int, dest="reference_channel")
    _bool_flag(p, "wpe", "run WPE (default on)")
    _wpe_flags(p)
    p.add_argument("--force", action="store_true", help="recompute completed clips")

    p = sub.add_parser("wpe", parents=[common], help="dereverberate one WAV file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    _wpe_flags(p)

    p = sub.add_parser("metrics", parents=[common], help="SDR and SI-SNR of an estimate")
    p.add_argument("--reference", required=True, help="reference WAV")
    p.add_argument("--estimate", required=True, help="estimate WAV")
    p.add_argument("--ref-channel", type=int, default=0, dest="reference_channel",
                   help="channel of a multichannel reference to score against")

    p = sub.add_parser("eer", parents=[common], help="EER with bootstrap CI from a trial CSV")
    p.add_argument("--trials", required=True, help="CSV of label,score lines")
    p.add_argument("--bootstrap", type=int, help="bootstrap resamples (default 1000, 0 = none)")
    return parser


# -- commands ----------------------------------------------------------------

def cmd_simulate_rir(args, cfg):
    seed = config.setting(cfg, "seed", args.seed)
    if args.room:
        room = roomsim.RoomSpec.from_dict(formats.read_json(args.room))
    else:
        room = roomsim.sample_room(seed, config.setting(cfg, "profile", args.profile))
    rir = roomsim.simulate_rir(room, inversion=args.inversion)
    if args.out.endswith(".tfb1"):
        formats.write_tfb1(rir.taps.astype(np.float32), args.out)
    else:
        formats.write_wav(Waveform(rir.taps, rir.sample_rate), args.out)
    if args.room_out:
        formats.write_json(room.to_dict(), args.room_out)
    _print({"room": room.to_dict(), "out": args.out, "taps": int(rir.taps.shape[1]),
            "channels": int(rir.taps.shape[0])})
    return EXIT_OK


def cmd_mix(args, cfg):
    manifest = args.manifest or cfg.get("manifest")
    if manifest is None:
        raise UsageError("mix needs --manifest (or 'manifest' in the config)")
    specs = mixer.load_manifest(manifest)
    records = mixer.build_corpus(specs, args.out, config.setting(cfg, "seed", args.seed),
                                 config.setting(cfg, "workers", args.workers),
                                 base_dir=os.path.dirname(os.path.abspath(manifest)))
    failed = [r["id"] for r in records if r["status"] == "failed"]
    _print({"n_items": len(records), "n_ok": len(records) - len(failed), "failed": failed,
            "manifest": os.path.join(args.out, "manifest.jsonl")})
    return EXIT_DATA if failed else EXIT_OK


def cmd_masks(args, cfg):
    chain = config.chain_config(cfg, reference_channel=args.reference_channel)
    written = pipeline.oracle_masks_for_corpus(args.corpus, args.out, chain.window_len, chain.hop,
                                               chain.beamformer.reference_channel, chain.mask_eps)
    _print({"written": len(written)})
    return EXIT_OK


def cmd_enhance(args, cfg):
    chain = config.chain_config(
        cfg, mask_source=args.mask_source, order=args.order, reference=args.reference,
        mu=args.mu, rank1=args.rank1, reference_channel=args.reference_channel,
        wpe_enabled=args.wpe, taps=args.taps, delay=args.delay,
        iterations=args.iterations, alpha=args.alpha)
    agg = pipeline.enhance_corpus(args.corpus, args.out, chain,
                                  workers=config.setting(cfg, "workers", args.workers),
                                  force=args.force, seed=config.setting(cfg, "seed", args.seed),
                                  mask_dir=args.mask_dir)
    _print(agg)
    return EXIT_DATA if agg["failed"] else EXIT_OK


def cmd_wpe(args, cfg):
    wcfg = config.wpe_config(cfg, taps=args.taps, delay=args.delay,
                             iterations=args.iterations, alpha=args.alpha)
    chain = config.chain_config(cfg)
    x = formats.read_wav(args.input, config.setting(cfg, "sample_rate"),
                         config.setting(cfg, "allow_rate"))
    grid = stft(x, chain.window_len, chain.hop)
    out = istft(wpe(grid, wcfg), len(x))
    formats.write_wav(out, args.out, config.setting(cfg, "encoding"))
    _print({"in": args.input, "out": args.out, "channels": x.channels,
            "frames": int(grid.shape[1])})
    return EXIT_OK


def cmd_metrics(args, cfg):
    rate, allow = config.setting(cfg, "sample_rate"), config.setting(cfg, "allow_rate")
    ref = formats.read_wav(args.reference, rate, allow)
    est = formats.read_wav(args.estimate, rate, allow)
    if est.channels == 1:
        r, e = ref.samples[args.reference_channel], est.samples[0]
    else:
        r, e = ref.samples, est.samples
    _print({"sdr": metrics.sdr(r, e), "si_snr": metrics.si_snr(r, e)})
    return EXIT_OK


def cmd_eer(args, cfg):
    trials = metrics.TrialSet(*formats.read_trials(args.trials))
    b = config.setting(cfg, "bootstrap", args.bootstrap)
    seed = config.setting(cfg, "seed", args.seed)
    if b == 0:
        res = metrics.eer(trials)
        res = metrics.EerResult(res.eer, res.threshold, res.ci_low, res.ci_high, 0, seed)
    else:
        res = metrics.bootstrap_ci(trials, b, seed)
    _print(res.to_dict())
    return EXIT_OK


COMMANDS = {"simulate-rir": cmd_simulate_rir, "mix": cmd_mix, "masks": cmd_masks,
            "enhance": cmd_enhance, "wpe": cmd_wpe, "metrics": cmd_metrics, "eer": cmd_eer}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=args.log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config.load(args.config)
        for key in ("seed", "workers"):
            value = getattr(args, key)
            if value is not None and value < (0 if key == "seed" else 1):
                raise UsageError(f"--{key} out of range: {value}")
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError) as exc:
        _emit_error(type(exc).__name__, exc, args.command)
        return EXIT_USAGE
    except (FarfieldError, OSError, ValueError, IndexError) as exc:
        _emit_error(type(exc).__name__, exc, args.command)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
