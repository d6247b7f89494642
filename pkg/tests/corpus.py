"""Synthetic desk corpora: dry sources on disk plus mixer manifests."""

import json
import os

import numpy as np

from farfield import synth
from farfield.dsp import Waveform
from farfield.formats import write_wav


def write_sources(src_dir, n, duration=4.0, noise_exponent=0.0, seed=0):
    """Write n speech-like files and n noise files; return their relative names."""
    os.makedirs(src_dir, exist_ok=True)
    names = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        s, v = f"speech{i:03d}.wav", f"noise{i:03d}.wav"
        write_wav(Waveform(synth.speech_like(duration, rng)), os.path.join(src_dir, s))
        write_wav(Waveform(synth.colored_noise(duration, rng, noise_exponent)),
                  os.path.join(src_dir, v))
        names.append((s, v))
    return names


def specs(names, snr_db, profile="eval", room_seed0=0, item_seed0=0):
    """Manifest dicts, one room per item with seeds fixed up front."""
    snrs = snr_db if np.ndim(snr_db) else [snr_db] * len(names)
    return [{"speech_path": s, "noise_path": v, "snr_db": float(snr),
             "room": {"profile": profile, "seed": room_seed0 + i}, "seed": item_seed0 + i}
            for i, ((s, v), snr) in enumerate(zip(names, snrs))]


def write_manifest(items, path):
    with open(path, "w") as fh:
        for d in items:
            fh.write(json.dumps(d) + "\n")
    return path
