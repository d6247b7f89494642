"""Batch multichannel WPE dereverberation.

Per frequency bin, the late reverberation of every channel is predicted
from a stack of ``taps`` past frames of all channels, starting ``delay``
frames back, and subtracted:

    d(t) = y(t) - G^H y~(t)

G solves the variance-weighted normal equations

    (sum_t y~ y~^H / lambda) G = sum_t y~ y^H / lambda

where lambda(t) is the channel-mean power of the current estimate d,
exponentially smoothed over frames. Estimation and filtering alternate for
a fixed number of iterations.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .dsp import DEFAULT_LOADING, TFGrid, hermitian_solve
from .errors import ClipTooShortError

VARIANCE_FLOOR = 1e-10


@dataclass(frozen=True)
class WpeConfig:
    taps: int = 10
    delay: int = 3
    iterations: int = 5
    alpha: float = 0.9999
    loading: float = DEFAULT_LOADING

    def __post_init__(self):
        if self.taps < 1 or self.delay < 1 or self.iterations < 1:
            raise ValueError("taps, delay and iterations must all be >= 1")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.loading < 0:
            raise ValueError("loading must be >= 0")


def tap_stack(Y, taps, delay):
    """
    Delayed multichannel prediction buffer, zero before the first frame.

    Arguments:
        Y: F x K x T
    Return:
        F x (taps * K) x T, block k holding Y shifted by delay + k frames
    """
    F, K, T = Y.shape
    out = np.zeros((F, taps * K, T), dtype=Y.dtype)
    for k in range(taps):
        d = delay + k
        if d >= T:
            break
        out[:, k * K:(k + 1) * K, d:] = Y[:, :, :T - d]
    return out


def smooth_power(power, alpha):
    """lambda(t) = alpha * p(t) + (1 - alpha) * lambda(t - 1), lambda(0) = p(0)."""
    if alpha == 1:
        return power
    zi = (1 - alpha) * power[:, :1]
    out, _ = lfilter([alpha], [1.0, -(1 - alpha)], power, axis=-1, zi=zi)
    return out


def wpe(y, cfg=WpeConfig()):
    """
    Arguments:
        y: TFGrid (K x T x F) or array of that shape
        cfg: WpeConfig
    Return:
        dereverberated grid, same type and shape as ``y``
    """
    values = y.values if isinstance(y, TFGrid) else np.asarray(y)
    K, T, F = values.shape
    if T <= cfg.delay + cfg.taps:
        raise ClipTooShortError(f"WPE needs more than delay + taps = "
                                f"{cfg.delay + cfg.taps} frames, got {T}")

    Y = np.ascontiguousarray(values.transpose(2, 0, 1)).astype(complex)  # F x K x T
    mean_power = np.mean(np.abs(Y) ** 2, axis=(1, 2))
    live = mean_power > 0
    D = Y.copy()
    if live.any():
        Yl = Y[live]
        floor = VARIANCE_FLOOR * mean_power[live][:, None]
        Ytil = tap_stack(Yl, cfg.taps, cfg.delay)
        Dl = Yl
        for _ in range(cfg.iterations):
            lam = smooth_power(np.mean(np.abs(Dl) ** 2, axis=1), cfg.alpha)
            lam = np.maximum(lam, floor)
            weighted = Ytil / lam[:, None, :]
            R = weighted @ Ytil.conj().transpose(0, 2, 1)
            P = weighted @ Yl.conj().transpose(0, 2, 1)
            G = hermitian_solve(R, P, cfg.loading)
            Dl = Yl - G.conj().transpose(0, 2, 1) @ Ytil
        D[live] = Dl

    out = D.transpose(1, 2, 0)
    return y.with_values(out) if isinstance(y, TFGrid) else out
