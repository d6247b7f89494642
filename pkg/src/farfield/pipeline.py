"""Per-clip enhancement chain and corpus driver.

    STFT -> masks -> mask-weighted covariances -> (rank-1) SDW-MWF -> WPE -> iSTFT

Masks come from the ground-truth images (oracle mode) or from TFB1 mask
files. In the default ``mwf_then_wpe`` order WPE dereverberates the
single-channel beamformer output; ``wpe_then_mwf`` dereverberates all
channels first and beamforms the result with the same masks.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import formats, masking, metrics
from .beamforming import BeamformerConfig, apply_weights, estimate_covariance, sdw_mwf_weights
from .dereverb import WpeConfig, wpe
from .dsp import Waveform, istft, stft
from .errors import ConfigError, FarfieldError, ShapeError, StageError

log = logging.getLogger(__name__)

MASK_SOURCES = ("oracle", "file")
ORDERS = ("mwf_then_wpe", "wpe_then_mwf")
REFERENCES = ("image", "dry")
MASK_FILE = "masks.tfb1"


@dataclass(frozen=True)
class ChainConfig:
    mask_source: str = "oracle"
    beamformer: BeamformerConfig = field(default_factory=BeamformerConfig)
    wpe: WpeConfig = field(default_factory=WpeConfig)  # None disables WPE
    order: str = "mwf_then_wpe"
    window_len: int = 512
    hop: int = 256
    reference: str = "image"
    mask_eps: float = masking.MASK_EPS

    def __post_init__(self):
        if self.mask_source not in MASK_SOURCES:
            raise ConfigError(f"mask_source must be one of {MASK_SOURCES}")
        if self.order not in ORDERS:
            raise ConfigError(f"order must be one of {ORDERS}")
        if self.reference not in REFERENCES:
            raise ConfigError(f"reference must be one of {REFERENCES}")

    def to_dict(self):
        d = asdict(self)
        d["wpe"] = asdict(self.wpe) if self.wpe is not None else None
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "beamformer" in d:
            d["beamformer"] = BeamformerConfig(**d["beamformer"])
        if "wpe" in d and d["wpe"] is not None:
            d["wpe"] = WpeConfig(**d["wpe"])
        return cls(**d)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except (FarfieldError, ValueError, IndexError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc


def _scores(reference, grid, length):
    if reference is None:
        return {}
    est = istft(grid, length).samples[0]
    return {"si_snr": metrics.si_snr(reference, est), "sdr": metrics.sdr(reference, est)}


def _check_masks(masks, shape):
    speech, noise = masks[:2]
    if speech.shape != shape or noise.shape != shape:
        raise ShapeError(f"mask shape {speech.shape} does not match the mixture grid {shape}")
    return speech, noise


def enhance_clip(mixture, cfg=ChainConfig(), speech_image=None, noise_image=None,
                 masks=None, dry=None, clip_id=None):
    """
    Run the enhancement chain on one multichannel mixture.

    Arguments:
        mixture: Waveform K x L, K >= 2
        cfg: ChainConfig
        speech_image, noise_image: ground-truth images (oracle masks, scoring)
        masks: (speech Mask, noise Mask) for mask_source "file"
        dry: aligned dry speech, the scoring reference when cfg.reference is "dry"
    Return:
        (enhanced single-channel Waveform, report dict)
    """
    ref_ch = cfg.beamformer.reference_channel
    L = len(mixture)
    if mixture.channels < 2:
        raise StageError("mwf", ShapeError(f"beamforming needs K >= 2 channels, got {mixture.channels}"))

    reference = None
    if cfg.reference == "dry" and dry is not None:
        reference = np.asarray(getattr(dry, "samples", dry), dtype=float).reshape(-1)[:L]
    elif cfg.reference == "image" and speech_image is not None:
        reference = speech_image.samples[ref_ch].astype(float)

    Y = _stage("stft", stft, mixture, cfg.window_len, cfg.hop)
    K, T, F = Y.shape

    if cfg.mask_source == "oracle":
        if speech_image is None or noise_image is None:
            raise StageError("masks", ConfigError("oracle masks need the speech and noise images"))

        def oracle():
            S = stft(speech_image, cfg.window_len, cfg.hop)
            N = stft(noise_image, cfg.window_len, cfg.hop)
            return masking.masks_from_estimates(
                *masking.oracle_estimates(Y, S, N, ref_ch), cfg.mask_eps)
        m_s, m_n = _stage("masks", oracle)
    else:
        if masks is None:
            raise StageError("masks", ConfigError("mask_source 'file' needs mask files"))
        m_s, m_n = _stage("masks", _check_masks, masks, (T, F))

    def beamform(grid):
        R_ss = estimate_covariance(grid, m_s)
        R_nn = estimate_covariance(grid, m_n)
        weights = sdw_mwf_weights(R_ss, R_nn, cfg.beamformer)
        return apply_weights(grid, weights), weights.silent_bins

    stages = [{"stage": "input", **_scores(reference, Y.channel(ref_ch), L)}]
    silent = 0
    if cfg.order == "mwf_then_wpe":
        out, silent = _stage("mwf", beamform, Y)
        stages.append({"stage": "mwf", **_scores(reference, out, L)})
        if cfg.wpe is not None:
            out = _stage("wpe", wpe, out, cfg.wpe)
            stages.append({"stage": "wpe", **_scores(reference, out, L)})
    else:
        pre = Y
        if cfg.wpe is not None:
            pre = _stage("wpe", wpe, Y, cfg.wpe)
            stages.append({"stage": "wpe", **_scores(reference, pre.channel(ref_ch), L)})
        out, silent = _stage("mwf", beamform, pre)
        stages.append({"stage": "mwf", **_scores(reference, out, L)})

    enhanced = _stage("istft", istft, out, L)
    report = {"clip_id": clip_id, "reference": cfg.reference if reference is not None else None,
              "silent_bins": int(silent), "stages": stages}
    if reference is not None:
        report.update(si_snr_in=stages[0]["si_snr"], si_snr_out=stages[-1]["si_snr"],
                      sdr_in=stages[0]["sdr"], sdr_out=stages[-1]["sdr"])
        report["si_snr_improvement"] = report["si_snr_out"] - report["si_snr_in"]
        report["sdr_improvement"] = report["sdr_out"] - report["sdr_in"]
    return Waveform(enhanced.samples.astype(np.float32), mixture.sample_rate), report


# -- corpus ------------------------------------------------------------------

def _load_clip(corpus_dir, record, cfg, mask_dir):
    files = record["files"]

    def wav(key):
        return formats.read_wav(os.path.join(corpus_dir, files[key]))

    mixture = wav("mixture")
    aux = {"speech_image": wav("speech_image"), "noise_image": wav("noise_image")}
    if "dry" in files:
        aux["dry"] = wav("dry")
    if cfg.mask_source == "file":
        base = mask_dir if mask_dir is not None else os.path.join(corpus_dir, record["id"])
        name = MASK_FILE if mask_dir is None else f"{record['id']}.tfb1"
        speech, noise, clamped = masking.load_masks(os.path.join(base, name))
        if clamped:
            log.warning("clip %s: %d mask values clamped to [0, 1]", record["id"], clamped)
        aux["masks"] = (speech, noise)
    return mixture, aux


def _enhance_job(args):
    corpus_dir, record, out_dir, cfg, force, mask_dir = args
    cid = record["id"]
    clip_out = os.path.join(out_dir, cid)
    wav_path = os.path.join(clip_out, "enhanced.wav")
    report_path = os.path.join(clip_out, "report.json")
    cfg_dict = cfg.to_dict()
    if not force and os.path.exists(wav_path) and os.path.exists(report_path):
        report = formats.read_json(report_path)
        if report.get("config") == cfg_dict:
            return report, True
    try:
        mixture, aux = _load_clip(corpus_dir, record, cfg, mask_dir)
        enhanced, report = enhance_clip(mixture, cfg, clip_id=cid, **aux)
    except (FarfieldError, OSError, ValueError) as exc:
        return {"clip_id": cid, "status": "failed", "error": f"{type(exc).__name__}: {exc}"}, False
    report["status"] = "ok"
    report["config"] = cfg_dict
    formats.write_wav(enhanced, wav_path)
    formats.write_json(report, report_path)
    return report, False


def _summary(values, seed):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return {"median": None, "mean": None, "ci_low": None, "ci_high": None}
    lo, hi = metrics.bootstrap_percentile(v, np.median, seed=seed)
    return {"median": float(np.median(v)), "mean": float(np.mean(v)), "ci_low": lo, "ci_high": hi}


AGGREGATE_KEYS = ("si_snr_in", "si_snr_out", "si_snr_improvement",
                  "sdr_in", "sdr_out", "sdr_improvement")


def aggregate(reports, seed=0):
    """Median, mean and bootstrap CI (of the median) per metric over scored clips."""
    ok = [r for r in reports if r.get("status", "ok") == "ok"]
    scored = [r for r in ok if "si_snr_in" in r]
    out = {"n_clips": len(ok), "n_scored": len(scored),
           "failed": sorted(r["clip_id"] for r in reports if r.get("status") == "failed"),
           "bootstrap_seed": seed}
    for key in AGGREGATE_KEYS:
        out[key] = _summary([r[key] for r in scored], seed)
    return out


def enhance_corpus(corpus_dir, out_dir, cfg=ChainConfig(), workers=1, force=False,
                   seed=0, mask_dir=None):
    """
    Enhance every successfully built clip of a corpus.

    Completed clips (enhanced WAV and a report made with the same config)
    are reused unless ``force``.

    Return:
        aggregate dict (also written to ``out_dir/aggregate.json``)
    """
    manifest = os.path.join(corpus_dir, "manifest.jsonl")
    records = formats.read_jsonl(manifest) if os.path.exists(manifest) else []
    records = [r for r in records if r.get("status", "ok") == "ok"]
    os.makedirs(out_dir, exist_ok=True)
    jobs = [(corpus_dir, r, out_dir, cfg, force, mask_dir) for r in records]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_enhance_job, jobs))
    else:
        results = [_enhance_job(j) for j in jobs]
    reports = []
    for report, reused in results:
        if report.get("status") == "failed":
            log.warning("clip %s failed: %s", report["clip_id"], report["error"])
        elif reused:
            log.info("clip %s: reusing existing output", report["clip_id"])
        reports.append(report)
    agg = aggregate(reports, seed)
    formats.write_json(agg, os.path.join(out_dir, "aggregate.json"))
    return agg


def oracle_masks_for_corpus(corpus_dir, out_dir=None, window_len=512, hop=256,
                            reference_channel=0, eps=masking.MASK_EPS):
    """
    Write oracle (speech, noise) masks for every clip as TFB1 files.

    Return:
        list of written paths
    """
    records = [r for r in formats.read_jsonl(os.path.join(corpus_dir, "manifest.jsonl"))
               if r.get("status", "ok") == "ok"]
    written = []
    for r in records:
        files = r["files"]
        Y, S, N = (stft(formats.read_wav(os.path.join(corpus_dir, files[k])), window_len, hop)
                   for k in ("mixture", "speech_image", "noise_image"))
        masks = masking.masks_from_estimates(
            *masking.oracle_estimates(Y, S, N, reference_channel), eps)
        path = (os.path.join(corpus_dir, r["id"], MASK_FILE) if out_dir is None
                else os.path.join(out_dir, f"{r['id']}.tfb1"))
        masking.save_masks(masks, path)
        written.append(path)
    return written

