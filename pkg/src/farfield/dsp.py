"""STFT/iSTFT engine and small batched Hermitian linear algebra.

Shape conventions used throughout the package:
    waveform:  K x L        (channels x samples)
    TF grid:   K x T x F    (channels x frames x bins)
    matrices:  F x K x K    (one Hermitian matrix per bin)
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError, SingularSystemError

DEFAULT_RATE = 16000
DEFAULT_LOADING = 1e-10


class EigenConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class Waveform:
    """Multichannel real signal, ``samples`` shaped K x L."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_RATE

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim == 1:
            s = s[None, :]
        if s.ndim != 2:
            raise ShapeError(f"waveform must be 1-D or 2-D, got shape {s.shape}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", s)

    @property
    def channels(self):
        return self.samples.shape[0]

    def __len__(self):
        return self.samples.shape[1]

    def channel(self, k):
        return Waveform(self.samples[k:k + 1], self.sample_rate)


@dataclass(frozen=True, eq=False)
class TFGrid:
    """Complex STFT coefficients, ``values`` shaped K x T x F.

    ``length`` is the number of time-domain samples the grid was computed
    from; istft trims its output to it.
    """

    values: np.ndarray
    window_len: int = 512
    hop: int = 256
    sample_rate: int = DEFAULT_RATE
    length: int = None

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim == 2:
            v = v[None]
        if v.ndim != 3:
            raise ShapeError(f"TF grid must be K x T x F, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape

    def with_values(self, values):
        return replace(self, values=values)

    def channel(self, k):
        return replace(self, values=self.values[k:k + 1])


def hann(window_len):
    """Periodic Hann window."""
    n = np.arange(window_len)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / window_len)


def _as_samples(x):
    if isinstance(x, Waveform):
        return x.samples, x.sample_rate
    s = np.asarray(x, dtype=float)
    if s.ndim == 1:
        s = s[None, :]
    return s, DEFAULT_RATE


def num_frames(length, hop):
    return -(-length // hop)


def stft(x, window_len=512, hop=256):
    """
    Hann-windowed one-sided STFT.

    The signal is zero padded by ``window_len - hop`` samples in front and
    as needed at the end, so every input sample is covered by the full set
    of overlapping frames. Without the front pad the first and last samples
    would sit under window tails only, and any modification of the grid
    would be amplified there by the synthesis normalisation.

    Arguments:
        x: Waveform, or array shaped K x L / L
    Return:
        TFGrid with values K x ceil((L + window_len - hop) / hop) x (window_len / 2 + 1)
    """
    samples, rate = _as_samples(x)
    K, L = samples.shape
    if L == 0:
        raise ShapeError("cannot analyse an empty signal")
    if window_len <= 0 or window_len % 2:
        raise ValueError(f"window_len must be positive and even, got {window_len}")
    if not 0 < hop <= window_len:
        raise ValueError(f"hop must satisfy 0 < hop <= window_len, got {hop}")
    if L < window_len:
        raise ShapeError(f"signal of {L} samples is shorter than the window ({window_len})")

    front = window_len - hop
    T = num_frames(L + front, hop)
    padded = np.zeros((K, (T - 1) * hop + window_len))
    padded[:, front:front + L] = samples
    frames = sliding_window_view(padded, window_len, axis=-1)[:, ::hop]
    values = np.fft.rfft(frames * hann(window_len), axis=-1)
    return TFGrid(values, window_len, hop, rate, L)


def istft(g, length=None):
    """
    Weighted overlap-add synthesis, normalised by the summed squared window.

    Arguments:
        g: TFGrid produced by :func:`stft` (or a processed copy of one)
        length: output length; defaults to ``g.length``
    Return:
        Waveform K x length
    """
    K, T, F = g.values.shape
    N, hop = g.window_len, g.hop
    if F != N // 2 + 1:
        raise ShapeError(f"grid has {F} bins, expected {N // 2 + 1} for window_len={N}")
    if length is None:
        length = g.length if g.length is not None else T * hop

    win = hann(N)
    frames = np.fft.irfft(g.values, n=N, axis=-1) * win
    total = (T - 1) * hop + N
    out = np.zeros((K, total))
    wsum = np.zeros(total)
    for t in range(T):
        out[:, t * hop:t * hop + N] += frames[:, t]
        wsum[t * hop:t * hop + N] += win ** 2
    nz = wsum > 1e-10
    out[:, nz] /= wsum[nz]
    out[:, ~nz] = 0.0

    front = N - hop
    y = out[:, front:front + length]
    if y.shape[1] < length:
        y = np.pad(y, ((0, 0), (0, length - y.shape[1])))
    return Waveform(y, g.sample_rate)


def hermitian_solve(A, B, loading=DEFAULT_LOADING):
    """
    Solve (A + loading * trace(A) / K * I) X = B, batched over leading dims.

    Arguments:
        A: ... x K x K Hermitian
        B: ... x K x M, or ... x K for a single right-hand side
        loading: relative diagonal load (>= 0)
    Return:
        X with the shape of B
    """
    if loading < 0:
        raise ValueError("loading must be non-negative")
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    K = A.shape[-1]
    vector_rhs = B.ndim == A.ndim - 1
    if vector_rhs:
        B = B[..., None]

    trace = np.real(np.trace(A, axis1=-2, axis2=-1))
    if loading:
        A = A + (loading * trace / K)[..., None, None] * np.eye(K)
    if np.any(np.all(A == 0, axis=(-2, -1))):
        raise SingularSystemError("system matrix is exactly zero")
    try:
        X = np.linalg.solve(A, B)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc
    return X[..., 0] if vector_rhs else X


def _start_vector(K):
    # fixed, irregular phases: deterministic and never orthogonal to a
    # dominant eigenvector except on a measure-zero set
    k = np.arange(K)
    return (1.0 + k / K) * np.exp(2j * np.pi * 0.6180339887 * (k + 1) ** 2)


def _fix_phase(v):
    mag = np.abs(v)
    thresh = 1e-10 * mag.max(axis=-1, keepdims=True)
    first = np.argmax(mag > thresh, axis=-1)
    pivot = np.take_along_axis(v, first[:, None], axis=-1)
    pmag = np.abs(pivot)
    rot = np.where(pmag > 0, np.conj(pivot) / np.where(pmag > 0, pmag, 1.0), 1.0)
    v = v * rot
    rows = np.arange(v.shape[0])
    v[rows, first] = v[rows, first].real
    return v


def principal_eigpairs(A, tol=1e-12, max_iter=500, squarings=10):
    """
    Dominant eigenpair of each Hermitian PSD matrix by power iteration.

    The start vector is first pushed through ``A ** (2 ** squarings)`` (by
    repeated squaring) so small eigengaps do not stall the iteration; plain
    power steps with ``A`` then run until the Rayleigh quotient changes by
    less than ``tol`` relative and the iterate itself has stopped moving.

    Arguments:
        A: ... x K x K
    Return:
        values (...), vectors (... x K), converged (...) bool
    """
    A = np.asarray(A, dtype=complex)
    lead, K = A.shape[:-2], A.shape[-1]
    A = A.reshape(-1, K, K)
    n = A.shape[0]

    scale = np.abs(A).max(axis=(-2, -1))
    zero = scale == 0
    safe = np.where(zero, 1.0, scale)
    B = A / safe[:, None, None]
    for _ in range(squarings):
        B = B @ B
        nrm = np.linalg.norm(B, axis=(-2, -1))
        B /= np.where(nrm > 0, nrm, 1.0)[:, None, None]

    v0 = np.broadcast_to(_start_vector(K), (n, K))
    v = np.einsum("nij,nj->ni", B, v0)
    nrm = np.linalg.norm(v, axis=-1)
    v = np.where((nrm > 0)[:, None], v / np.where(nrm > 0, nrm, 1.0)[:, None],
                 v0 / np.linalg.norm(v0[0]))

    lam = np.real(np.einsum("ni,nij,nj->n", v.conj(), A, v))
    active = ~zero
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        w = np.einsum("nij,nj->ni", A[idx], v[idx])
        wn = np.linalg.norm(w, axis=-1)
        ok = wn > 0
        w[ok] /= wn[ok, None]
        w[~ok] = v[idx][~ok]
        step = np.linalg.norm(w - v[idx], axis=-1)
        v[idx] = w
        lam_new = np.real(np.einsum("ni,nij,nj->n", w.conj(), A[idx], w))
        done = (np.abs(lam_new - lam[idx]) <= tol * np.abs(lam_new)) & (step <= 1e-10)
        lam[idx] = lam_new
        active[idx[done | ~ok]] = False

    resid = np.linalg.norm(np.einsum("nij,nj->ni", A, v) - lam[:, None] * v, axis=-1)
    converged = ~active & (resid <= 1e-6 * np.maximum(np.abs(lam), 1e-300))
    converged |= zero

    v[zero] = 0.0
    v[zero, 0] = 1.0
    v = _fix_phase(v)
    lam = np.maximum(lam, 0.0)
    lam[zero] = 0.0
    return lam.reshape(lead), v.reshape(lead + (K,)), converged.reshape(lead)


def principal_eigpair(A, tol=1e-12, max_iter=500):
    """
    Dominant eigenpair (value >= 0, unit vector) of one Hermitian PSD matrix.

    The vector's first non-negligible entry is made real positive. If the
    iteration fails to converge an :class:`EigenConvergenceWarning` is
    issued and the best iterate is returned.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {A.shape}")
    scale = np.abs(A).max()
    if scale and np.abs(A - A.conj().T).max() > 1e-8 * scale:
        raise ValueError("matrix is not Hermitian")
    lam, v, ok = principal_eigpairs(A, tol=tol, max_iter=max_iter)
    if not ok:
        warnings.warn("power iteration did not converge; returning best iterate",
                      EigenConvergenceWarning, stacklevel=2)
    return float(lam), v
