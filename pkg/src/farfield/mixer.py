"""Reverberant speech + noise mixtures at a target SNR, and corpus building.

Speech and noise are convolved with the room's RIRs from their own source
positions; the noise image is scaled so the reference-channel speech-to-
noise power ratio equals the target. Speech gain stays 1 unless the
mixture would clip, in which case both images are scaled together.

Images are quantised to the 2^-24 grid before summation. All values lie in
(-1, 1), so the grid is exactly representable in float32, sums of grid
values are exact, and mixture == speech_image + noise_image holds bitwise
(and mixture - speech_image - noise_image == 0) in the written files.
"""

import logging
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from . import formats
from .dsp import Waveform
from .errors import ConfigError, FarfieldError, FormatError, SampleRateError, SnrError
from .roomsim import SPEED_OF_SOUND, RoomSpec, _draw_source, sample_room, simulate_rir

log = logging.getLogger(__name__)

GRID = 2.0 ** -24
PEAK_LIMIT = 0.99


@dataclass(frozen=True)
class MixtureSpec:
    """
    One manifest line.

    ``room`` is either a full RoomSpec dict or ``{"profile": ..., "seed": ...}``
    (seed optional: derived from the item seed when absent).
    """

    speech_path: str
    noise_path: str
    room: dict
    snr_db: float
    seed: int = 0
    truncate_s: float = 10.0
    id: str = None

    def __post_init__(self):
        if not np.isfinite(self.snr_db):
            raise ConfigError("snr_db must be finite")
        if self.truncate_s is not None and not self.truncate_s > 0:
            raise ConfigError("truncate_s must be positive")
        if not isinstance(self.room, dict):
            raise ConfigError("room must be a JSON object")

    @classmethod
    def from_dict(cls, d):
        allowed = {"speech_path", "noise_path", "room", "snr_db", "seed", "truncate_s", "id"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown manifest keys: {sorted(unknown)}")
        missing = {"speech_path", "noise_path", "room", "snr_db"} - set(d)
        if missing:
            raise ConfigError(f"manifest line lacks {sorted(missing)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class MixtureBundle:
    mixture: Waveform
    speech_image: Waveform
    noise_image: Waveform
    achieved_snr_db: float
    noise_gain: float = 1.0
    scale: float = 1.0
    spec: MixtureSpec = None
    extra: dict = field(default_factory=dict)


def convolve(dry, rir):
    """
    Full linear convolution of a mono signal with every RIR channel.

    Return:
        Waveform K x (len(dry) + rir_length - 1)
    """
    if not isinstance(dry, Waveform):
        dry = Waveform(dry, rir.sample_rate)
    if dry.sample_rate != rir.sample_rate:
        raise SampleRateError(f"signal at {dry.sample_rate} Hz, RIR at {rir.sample_rate} Hz")
    if dry.channels != 1:
        raise FormatError(f"dry signal must be mono, got {dry.channels} channels")
    taps = np.atleast_2d(rir.taps)
    out = fftconvolve(dry.samples.astype(float), taps, axes=-1)
    return Waveform(out, dry.sample_rate)


def _power(x):
    return float(np.mean(np.square(x, dtype=float)))


def _quantise(x):
    return np.round(x / GRID) * GRID


def mix_at_snr(speech_image, noise_image, snr_db, reference_channel=0):
    """
    Scale the noise image so the reference-channel SNR equals ``snr_db``.

        g = sqrt(P_s / (P_n 10^(snr/10)))

    Return:
        MixtureBundle with float32 images and the recomputed SNR
    """
    s = np.asarray(getattr(speech_image, "samples", speech_image), dtype=float)
    n = np.asarray(getattr(noise_image, "samples", noise_image), dtype=float)
    s, n = np.atleast_2d(s), np.atleast_2d(n)
    rate = getattr(speech_image, "sample_rate", 16000)
    if s.shape != n.shape:
        raise SnrError(f"speech image {s.shape} and noise image {n.shape} do not overlap exactly")
    if not np.isfinite(snr_db):
        raise SnrError("target SNR must be finite")
    ps, pn = _power(s[reference_channel]), _power(n[reference_channel])
    if ps == 0:
        raise SnrError("speech image is silent on the reference channel; cannot set SNR")
    if pn == 0:
        raise SnrError("noise image is silent on the reference channel; cannot set SNR")
    g = np.sqrt(ps / (pn * 10 ** (snr_db / 10)))
    n = g * n
    peak = np.max(np.abs(s + n))
    scale = PEAK_LIMIT / peak if peak > PEAK_LIMIT else 1.0
    sq, nq = _quantise(scale * s), _quantise(scale * n)
    if _power(nq[reference_channel]) == 0 or _power(sq[reference_channel]) == 0:
        raise SnrError("image vanishes after quantisation; SNR too extreme")
    s32, n32 = sq.astype(np.float32), nq.astype(np.float32)
    mix32 = s32 + n32
    achieved = 10 * np.log10(_power(s32[reference_channel]) / _power(n32[reference_channel]))
    return MixtureBundle(Waveform(mix32, rate), Waveform(s32, rate), Waveform(n32, rate),
                         float(achieved), float(g), float(scale))


def _fit_length(x, length, rng):
    """Loop with a random circular offset, or crop at a random start."""
    if x.size >= length:
        start = int(rng.integers(0, x.size - length + 1))
        return x[start:start + length]
    offset = int(rng.integers(0, x.size))
    reps = -(-(length + offset) // x.size)
    return np.tile(x, reps)[offset:offset + length]


def resolve_room(room, rng):
    if "dimensions" in room:
        return RoomSpec.from_dict(room)
    unknown = set(room) - {"profile", "seed"}
    if unknown:
        raise ConfigError(f"unknown room keys: {sorted(unknown)}")
    seed = room.get("seed")
    if seed is None:
        seed = int(rng.integers(0, 2 ** 31))
    return sample_room(seed, room.get("profile", "train"))


def _mono(w, path):
    if w.channels != 1:
        raise FormatError(f"{path}: expected a mono file, got {w.channels} channels")
    return w.samples[0].astype(float)


def make_mixture(spec, global_seed=0, base_dir="."):
    """
    Build one mixture from a MixtureSpec.

    Return:
        (MixtureBundle, RoomSpec, dry speech as aligned to the reference channel's direct path)
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(global_seed), int(spec.seed)]))
    speech_path = os.path.join(base_dir, spec.speech_path)
    noise_path = os.path.join(base_dir, spec.noise_path)
    speech = formats.read_wav(speech_path)
    noise = formats.read_wav(noise_path)
    fs = speech.sample_rate
    dry = _mono(speech, spec.speech_path)
    if spec.truncate_s is not None:
        dry = dry[:int(round(spec.truncate_s * fs))]
    dry_noise = _fit_length(_mono(noise, spec.noise_path), dry.size, rng)

    room = resolve_room(spec.room, rng)
    if room.sample_rate != fs:
        raise SampleRateError(f"room at {room.sample_rate} Hz, audio at {fs} Hz")
    noise_position = room.noise_position
    if noise_position is None:
        noise_position = tuple(_draw_source(rng, room.dimensions))
    rir_s = simulate_rir(room)
    rir_n = simulate_rir(room, source=noise_position)
    bundle = mix_at_snr(convolve(dry, rir_s), convolve(dry_noise, rir_n), spec.snr_db)

    delay = np.linalg.norm(np.subtract(room.source_position, room.mic_positions[0])) / SPEED_OF_SOUND * fs
    shift = int(round(delay))
    aligned = np.zeros(len(bundle.mixture))
    aligned[shift:shift + dry.size] = dry[:len(aligned) - shift] * bundle.scale
    extra = {"direct_delay_samples": float(delay), "rir_length": int(rir_s.taps.shape[1])}
    return (MixtureBundle(bundle.mixture, bundle.speech_image, bundle.noise_image,
                          bundle.achieved_snr_db, bundle.noise_gain, bundle.scale, spec, extra),
            room, Waveform(aligned.astype(np.float32), fs))


def item_id(spec, index):
    return spec.id if spec.id is not None else f"mix{index:05d}"


def _build_item(args):
    spec, index, out_dir, global_seed, base_dir = args
    cid = item_id(spec, index)
    try:
        bundle, room, dry = make_mixture(spec, global_seed, base_dir)
        clip_dir = os.path.join(out_dir, cid)
        files = {"mixture": "mixture.wav", "speech_image": "speech_image.wav",
                 "noise_image": "noise_image.wav", "dry": "dry.wav"}
        formats.write_wav(bundle.mixture, os.path.join(clip_dir, files["mixture"]))
        formats.write_wav(bundle.speech_image, os.path.join(clip_dir, files["speech_image"]))
        formats.write_wav(bundle.noise_image, os.path.join(clip_dir, files["noise_image"]))
        formats.write_wav(dry, os.path.join(clip_dir, files["dry"]))
        record = {"id": cid, "status": "ok", "spec": spec.to_dict(), "room": room.to_dict(),
                  "target_snr_db": float(spec.snr_db), "achieved_snr_db": bundle.achieved_snr_db,
                  "noise_gain": bundle.noise_gain, "scale": bundle.scale,
                  "length": len(bundle.mixture), "channels": bundle.mixture.channels,
                  "files": {k: f"{cid}/{v}" for k, v in files.items()}, **bundle.extra}
        formats.write_json(record, os.path.join(clip_dir, "record.json"))
        return record
    except (FarfieldError, OSError, ValueError) as exc:
        return {"id": cid, "status": "failed", "error": f"{type(exc).__name__}: {exc}"}
    except Exception as exc:  # keep the run going
        log.debug("mixture %s:\n%s", cid, traceback.format_exc())
        return {"id": cid, "status": "failed", "error": f"{type(exc).__name__}: {exc}"}


def load_manifest(path):
    return [MixtureSpec.from_dict(d) for d in formats.read_jsonl(path)]


def build_corpus(specs, out_dir, global_seed=0, workers=1, base_dir="."):
    """
    Write one directory per mixture plus ``manifest.jsonl`` with one record
    per input line (in input order, failures included).

    Return:
        list of records; items with status "failed" carry an error message
    """
    os.makedirs(out_dir, exist_ok=True)
    jobs = [(spec, i, out_dir, global_seed, base_dir) for i, spec in enumerate(specs)]
    ids = [item_id(s, i) for i, s in enumerate(specs)]
    if len(set(ids)) != len(ids):
        raise ConfigError("manifest item ids must be unique")
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_build_item, jobs))
    else:
        records = [_build_item(j) for j in jobs]
    for r in records:
        if r["status"] == "failed":
            log.warning("mixture %s failed: %s", r["id"], r["error"])
    formats.write_jsonl(records, os.path.join(out_dir, "manifest.jsonl"))
    return records
