"""Mask-based spatial covariance estimation and (SDW-)MWF filtering.

For each frequency the speech-distortion-weighted multichannel Wiener
filter is

    w(f) = (R_ss(f) + mu * R_nn(f))^-1 R_ss(f) u

with u selecting the reference channel. mu = 1 gives the plain MWF; the
rank-1 variant replaces R_ss by its dominant eigencomponent first.
Note the inverse applies to the sum (R_ss + mu R_nn), not to R_nn alone.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .dsp import DEFAULT_LOADING, EigenConvergenceWarning, TFGrid, hermitian_solve, principal_eigpairs
from .errors import ShapeError


@dataclass(frozen=True)
class BeamformerConfig:
    mu: float = 0.1
    rank1: bool = True
    reference_channel: int = 0
    diagonal_loading: float = DEFAULT_LOADING

    def __post_init__(self):
        if not self.mu >= 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if self.reference_channel < 0:
            raise ValueError("reference_channel must be >= 0")
        if self.diagonal_loading < 0:
            raise ValueError("diagonal_loading must be >= 0")


@dataclass(frozen=True, eq=False)
class BeamformerWeights:
    """Per-frequency filters, ``w`` shaped F x K."""

    w: np.ndarray
    silent_bins: int = 0


def _grid_values(y):
    return y.values if isinstance(y, TFGrid) else np.asarray(y)


def estimate_covariance(y, mask):
    """
    Mask-weighted spatial covariance, one K x K matrix per bin.

        R(f) = 1/T sum_t (m(t,f) y(t,f)) (m(t,f) y(t,f))^H

    The single T x F mask is applied to every channel.

    Arguments:
        y: TFGrid (K x T x F)
        mask: Mask or T x F array
    Return:
        F x K x K Hermitian stack
    """
    Y = _grid_values(y)
    m = getattr(mask, "gains", mask)
    m = np.asarray(m, dtype=float)
    K, T, F = Y.shape
    if T == 0:
        raise ShapeError("cannot estimate a covariance from zero frames")
    if m.shape != (T, F):
        raise ShapeError(f"mask shape {m.shape} does not match grid (T, F) = {(T, F)}")
    S = Y * m[None]
    R = np.einsum("ktf,ltf->fkl", S, S.conj()) / T
    # exact Hermitian symmetry
    return 0.5 * (R + R.conj().transpose(0, 2, 1))


def rank1_project(R):
    """
    Best rank-1 approximation lambda_1 v_1 v_1^H of every matrix in the stack.

    Matrices on which power iteration fails to converge are reported with
    one :class:`EigenConvergenceWarning` carrying their count.
    """
    lam, v, ok = principal_eigpairs(R)
    if not np.all(ok):
        warnings.warn(f"power iteration did not converge on {np.count_nonzero(~ok)} "
                      f"of {ok.size} matrices", EigenConvergenceWarning, stacklevel=2)
    return lam[..., None, None] * np.einsum("...k,...l->...kl", v, v.conj())


def sdw_mwf_weights(R_ss, R_nn, cfg=BeamformerConfig()):
    """
    Arguments:
        R_ss, R_nn: F x K x K speech / noise covariances
        cfg: BeamformerConfig
    Return:
        BeamformerWeights; bins where R_ss + mu R_nn is exactly zero get a
        zero filter and are counted in ``silent_bins``. Noise-free bins
        (R_nn exactly zero) get the reference selector, which makes the
        speech-distortion term vanish for any mu.
    """
    R_ss = np.asarray(R_ss, dtype=complex)
    R_nn = np.asarray(R_nn, dtype=complex)
    if R_ss.shape != R_nn.shape or R_ss.ndim != 3 or R_ss.shape[1] != R_ss.shape[2]:
        raise ShapeError(f"covariance stacks must both be F x K x K, got "
                         f"{R_ss.shape} and {R_nn.shape}")
    F, K, _ = R_ss.shape
    if cfg.reference_channel >= K:
        raise IndexError(f"reference_channel {cfg.reference_channel} out of range for {K} channels")

    if cfg.rank1:
        R_ss = rank1_project(R_ss)
    A = R_ss + cfg.mu * R_nn
    rhs = R_ss[:, :, cfg.reference_channel]

    silent = np.all(A == 0, axis=(1, 2))
    noise_free = np.all(R_nn == 0, axis=(1, 2)) & ~silent
    solve = ~(silent | noise_free)
    w = np.zeros((F, K), dtype=complex)
    w[noise_free, cfg.reference_channel] = 1.0
    if solve.any():
        w[solve] = hermitian_solve(A[solve], rhs[solve], cfg.diagonal_loading)
    return BeamformerWeights(w, int(np.count_nonzero(silent)))


def mwf_weights(R_ss, R_nn, rank1=False, reference_channel=0,
                diagonal_loading=DEFAULT_LOADING):
    """Plain MWF: the SDW-MWF with mu = 1."""
    cfg = BeamformerConfig(1.0, rank1, reference_channel, diagonal_loading)
    return sdw_mwf_weights(R_ss, R_nn, cfg)


def apply_weights(y, weights):
    """
    out(t, f) = w(f)^H y(t, f)

    Return:
        single-channel TFGrid (or 1 x T x F array for array input)
    """
    Y = _grid_values(y)
    w = getattr(weights, "w", weights)
    w = np.asarray(w)
    if Y.ndim != 3 or w.shape != (Y.shape[2], Y.shape[0]):
        raise ShapeError(f"weights {w.shape} do not match grid K x T x F = {Y.shape}")
    out = np.einsum("fk,ktf->tf", w.conj(), Y)[None]
    return y.with_values(out) if isinstance(y, TFGrid) else out
