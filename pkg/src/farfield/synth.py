"""Synthetic test signals for desk-scale corpora.

No speech data ships with the package, so the desk corpora use a crude
speech surrogate: voiced syllables (glottal-like harmonic series with a
gliding pitch, shaped by random formant resonances and a smooth envelope),
occasional unvoiced fricative bursts, and pauses. It is non-stationary,
sparse in time-frequency and harmonic, which is what masking, beamforming
and dereverberation care about. Noise is spectrally shaped Gaussian noise.
"""

import numpy as np
from scipy.signal import butter, lfilter, sosfilt

from .dsp import DEFAULT_RATE


def _resonator(f0, bandwidth, fs):
    r = np.exp(-np.pi * bandwidth / fs)
    theta = 2 * np.pi * f0 / fs
    return [1 - r], [1.0, -2 * r * np.cos(theta), r * r]


def _syllable(rng, fs):
    dur = rng.uniform(0.12, 0.35)
    n = int(dur * fs)
    t = np.arange(n) / fs
    f_start = rng.uniform(90, 230)
    pitch = f_start * (1 + rng.uniform(-0.25, 0.25) * t / dur)
    phase = 2 * np.pi * np.cumsum(pitch) / fs
    src = np.zeros(n)
    for h in range(1, 40):
        alive = h * pitch < 0.45 * fs
        src += alive * np.sin(h * phase) / h
    out = np.zeros(n)
    for lo, hi in ((300, 900), (900, 2400), (2300, 3500)):
        b, a = _resonator(rng.uniform(lo, hi), rng.uniform(60, 160), fs)
        out += rng.uniform(0.4, 1.0) * lfilter(b, a, src)
    env = np.sin(np.pi * t / dur) ** rng.uniform(0.5, 2.0)
    return out * env


def _fricative(rng, fs):
    n = int(rng.uniform(0.05, 0.15) * fs)
    sos = butter(4, rng.uniform(2500, 4500), "highpass", fs=fs, output="sos")
    burst = sosfilt(sos, rng.standard_normal(n))
    return 0.3 * burst * np.hanning(n)


def speech_like(duration, rng, fs=DEFAULT_RATE):
    """
    Arguments:
        duration: seconds
        rng: numpy Generator
    Return:
        1-D float array, peak 0.5
    """
    total = int(duration * fs)
    x = np.zeros(total)
    pos = int(rng.uniform(0.05, 0.2) * fs)
    while pos < total:
        seg = _fricative(rng, fs) if rng.random() < 0.2 else _syllable(rng, fs)
        end = min(total, pos + seg.size)
        x[pos:end] += seg[:end - pos]
        gap = rng.uniform(0.1, 0.5) if rng.random() < 0.15 else rng.uniform(0.0, 0.06)
        pos = end + int(gap * fs)
    peak = np.max(np.abs(x))
    return 0.5 * x / peak if peak > 0 else x


def colored_noise(duration, rng, exponent=1.0, fs=DEFAULT_RATE):
    """Gaussian noise with a 1/f^exponent power spectrum (0 = white), peak 0.5."""
    n = int(duration * fs)
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1 / fs)
    f[0] = f[1]
    x = np.fft.irfft(spec / f ** (exponent / 2), n)
    return 0.5 * x / np.max(np.abs(x))
