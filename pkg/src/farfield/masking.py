"""Speech / noise time-frequency masks.

Masks come from separated single-channel estimates of speech and noise
(in oracle mode: the reference-channel slices of the ground-truth images),
or from TFB1 files written by an external mask estimator.
"""

from dataclasses import dataclass

import numpy as np

from . import formats
from .dsp import TFGrid
from .errors import FormatError, ShapeError

MASK_EPS = 1e-16
SPEECH, NOISE = "speech", "noise"


@dataclass(frozen=True, eq=False)
class Mask:
    """Real gains in [0, 1], shaped T x F."""

    gains: np.ndarray
    kind: str = SPEECH

    def __post_init__(self):
        if self.kind not in (SPEECH, NOISE):
            raise ValueError(f"mask kind must be 'speech' or 'noise', got {self.kind!r}")
        g = np.asarray(self.gains)
        if g.ndim != 2:
            raise ShapeError(f"mask must be T x F, got shape {g.shape}")
        object.__setattr__(self, "gains", g)

    @property
    def shape(self):
        return self.gains.shape


def _single_channel(x, name):
    v = x.values if isinstance(x, TFGrid) else np.asarray(x)
    if v.ndim == 3:
        if v.shape[0] != 1:
            raise ShapeError(f"{name} must be single-channel, got {v.shape[0]} channels")
        v = v[0]
    if v.ndim != 2:
        raise ShapeError(f"{name} must be T x F, got shape {v.shape}")
    return v


def masks_from_estimates(s_hat, n_hat, eps=MASK_EPS):
    """
    Ratio masks from separated speech and noise estimates.

        M_s = |s| / (|s| + max(|n|, eps))
        M_n = |n| / (|s| + max(|n|, eps))

    Where |n| >= eps the noise mask is evaluated as ``1 - M_s``, which is
    the same quantity algebraically and makes M_s + M_n == 1 hold exactly
    in floating point.

    Arguments:
        s_hat, n_hat: single-channel TFGrids (or T x F arrays)
    Return:
        (speech Mask, noise Mask)
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    s = np.abs(_single_channel(s_hat, "s_hat"))
    n = np.abs(_single_channel(n_hat, "n_hat"))
    if s.shape != n.shape:
        raise ShapeError(f"estimate shapes differ: {s.shape} vs {n.shape}")
    denom = s + np.maximum(n, eps)
    m_s = s / denom
    m_n = np.where(n >= eps, 1.0 - m_s, n / denom)
    return Mask(m_s, SPEECH), Mask(m_n, NOISE)


def oracle_estimates(mix, speech_image, noise_image, reference_channel=0):
    """
    Ground-truth stand-ins for separated estimates: the reference-channel
    slices of the speech and noise images.
    """
    shapes = {mix.shape, speech_image.shape, noise_image.shape}
    if len(shapes) != 1:
        raise ShapeError(f"grid shapes differ: {sorted(shapes)}")
    K = mix.shape[0]
    if not 0 <= reference_channel < K:
        raise IndexError(f"reference_channel {reference_channel} out of range for {K} channels")
    return (speech_image.channel(reference_channel),
            noise_image.channel(reference_channel))


def save_masks(masks, path):
    """Write (speech, noise) masks as one float32 TFB1 tensor shaped 2 x T x F."""
    speech, noise = masks
    if speech.shape != noise.shape:
        raise ShapeError("speech and noise masks differ in shape")
    formats.write_tfb1(np.stack([speech.gains, noise.gains]).astype(np.float32), path)


def load_masks(path, expected_shape=None):
    """
    Read masks written by :func:`save_masks` (or an external estimator).

    Values outside [0, 1] are clamped; the number of clamped entries is
    returned alongside the masks.

    Return:
        (speech Mask, noise Mask, n_clamped)
    """
    data = formats.read_tfb1(path)
    if np.iscomplexobj(data):
        raise FormatError(f"{path}: mask file must hold float32 values")
    if data.ndim != 3 or data.shape[0] != 2:
        raise FormatError(f"{path}: mask tensor must be 2 x T x F, got {data.shape}")
    if expected_shape is not None and tuple(data.shape[1:]) != tuple(expected_shape):
        raise ShapeError(f"{path}: mask shape {data.shape[1:]} does not match "
                         f"expected {tuple(expected_shape)}")
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: mask contains non-finite values")
    n_clamped = int(np.count_nonzero((data < 0) | (data > 1)))
    data = np.clip(data, 0.0, 1.0)
    return Mask(data[0], SPEECH), Mask(data[1], NOISE), n_clamped
