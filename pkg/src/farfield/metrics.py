"""Signal metrics (SDR, SI-SNR) and verification metrics (EER, bootstrap CI).

EER conventions: a trial is accepted when its score is >= the threshold,
so FRR(t) counts targets with score < t and FAR(t) counts nontargets with
score >= t. Operating points are evaluated at every distinct score and at
+inf; the EER is the FRR/FAR crossing, linearly interpolated between the
two adjacent operating points that bracket it. The crossing is computed in
exact integer arithmetic and rounded once.
"""

from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .dsp import Waveform
from .errors import EerError, ShapeError

SENTINEL_DB = 300.0


def _flat(x):
    return np.asarray(x.samples if isinstance(x, Waveform) else x, dtype=float).ravel()


def _pair(reference, estimate):
    s, e = _flat(reference), _flat(estimate)
    if s.shape != e.shape:
        raise ShapeError(f"reference has {s.size} samples, estimate has {e.size}")
    return s, e


def sdr(reference, estimate):
    """
    10 log10(||s||^2 / ||s - s_hat||^2); +300 dB when the residual is zero.
    """
    s, e = _pair(reference, estimate)
    ps = np.dot(s, s)
    if ps == 0:
        raise ValueError("SDR is undefined for an all-zero reference")
    pr = np.dot(s - e, s - e)
    if pr == 0:
        return SENTINEL_DB
    return float(np.clip(10 * np.log10(ps / pr), -SENTINEL_DB, SENTINEL_DB))


def si_snr(reference, estimate):
    """
    Scale-invariant SNR after mean removal.

        s_t = <s_hat, s> / ||s||^2 * s,  e = s_hat - s_t
        SI-SNR = 10 log10(||s_t||^2 / ||e||^2)

    Return:
        dB, +300 when e = 0, -300 when s_hat is orthogonal to s
    """
    s, e = _pair(reference, estimate)
    s = s - s.mean()
    e = e - e.mean()
    ps = np.dot(s, s)
    if ps == 0:
        raise ValueError("SI-SNR is undefined for a constant reference")
    target = np.dot(e, s) / ps * s
    noise = e - target
    pt, pn = np.dot(target, target), np.dot(noise, noise)
    if pt == 0:
        return -SENTINEL_DB
    if pn == 0:
        return SENTINEL_DB
    return float(np.clip(10 * np.log10(pt / pn), -SENTINEL_DB, SENTINEL_DB))


# -- verification ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrialSet:
    """Scored trials: ``is_target`` (bool) and ``scores`` (float), same length."""

    is_target: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.is_target, dtype=bool)
        s = np.asarray(self.scores, dtype=float)
        if t.shape != s.shape or t.ndim != 1:
            raise ShapeError("labels and scores must be 1-D and of equal length")
        if not np.all(np.isfinite(s)):
            raise EerError("scores must be finite")
        object.__setattr__(self, "is_target", t)
        object.__setattr__(self, "scores", s)

    def __len__(self):
        return self.scores.size

    @classmethod
    def from_lists(cls, targets, nontargets):
        targets, nontargets = list(targets), list(nontargets)
        return cls([True] * len(targets) + [False] * len(nontargets), targets + nontargets)


@dataclass(frozen=True)
class EerResult:
    eer: float
    threshold: float
    ci_low: float
    ci_high: float
    b: int = 0
    seed: int = None
    redrawn: int = 0

    def to_dict(self):
        return asdict(self)


def _eer_sorted(tar, non):
    """
    Arguments:
        tar, non: sorted target / nontarget scores, both non-empty
    Return:
        (eer, threshold)
    """
    nt, nn = tar.size, non.size
    thr = np.unique(np.concatenate([tar, non]))
    miss = np.searchsorted(tar, thr, side="left")             # targets < t
    fa = nn - np.searchsorted(non, thr, side="left")           # nontargets >= t
    # +inf operating point: miss = nt, fa = 0
    gap = miss * nn - fa * nt                                  # sign of FRR - FAR
    above = np.flatnonzero(gap >= 0)
    if above.size == 0:
        j, g1, a1, t1 = thr.size, nt * nn, nt, np.inf
    else:
        j = int(above[0])
        g1, a1, t1 = int(gap[j]), int(miss[j]), float(thr[j])
    if g1 == 0 or j == 0:
        return float(Fraction(a1, nt)), t1
    g0, a0, t0 = int(gap[j - 1]), int(miss[j - 1]), float(thr[j - 1])
    # crossing of FRR - FAR between the two operating points
    eer = Fraction(a0 * g1 - a1 * g0, nt * (g1 - g0))
    if np.isinf(t1):
        return float(eer), t0
    lam = Fraction(-g0, g1 - g0)
    return float(eer), float(t0 + float(lam) * (t1 - t0))


def _split(trials):
    if not isinstance(trials, TrialSet):
        trials = TrialSet(*trials)
    tar = np.sort(trials.scores[trials.is_target])
    non = np.sort(trials.scores[~trials.is_target])
    return tar, non


def eer(trials):
    """
    Arguments:
        trials: TrialSet (or (is_target, scores) pair)
    Return:
        EerResult with the point estimate; ci_low = ci_high = eer
    """
    tar, non = _split(trials)
    if tar.size == 0 or non.size == 0:
        raise EerError("EER needs at least one target and one nontarget trial")
    e, t = _eer_sorted(tar, non)
    return EerResult(e, t, e, e)


def bootstrap_ci(trials, b=1000, seed=0, level=0.95, max_redraws=10000):
    """
    Percentile bootstrap over whole trials.

    Resample i draws from its own generator spawned from ``seed``, so the
    result does not depend on evaluation order. A resample holding a single
    class is redrawn from the same generator; redraws are counted.

    Return:
        EerResult; the interval is widened if needed to contain the point
        estimate
    """
    if not isinstance(trials, TrialSet):
        trials = TrialSet(*trials)
    point = eer(trials)
    if b < 1:
        raise ValueError("b must be >= 1")
    labels, scores = trials.is_target, trials.scores
    n = labels.size
    stats = np.empty(b)
    redrawn = 0
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(b)):
        rng = np.random.default_rng(child)
        for _ in range(max_redraws):
            idx = rng.integers(0, n, n)
            lab = labels[idx]
            if lab.any() and not lab.all():
                break
            redrawn += 1
        else:
            raise EerError("could not draw a two-class resample; too few trials of one class")
        s = scores[idx]
        stats[i] = _eer_sorted(np.sort(s[lab]), np.sort(s[~lab]))[0]
    tail = 100 * (1 - level) / 2
    lo, hi = np.percentile(stats, [tail, 100 - tail])
    return EerResult(point.eer, point.threshold, float(min(lo, point.eer)),
                     float(max(hi, point.eer)), int(b), seed, redrawn)


def bootstrap_percentile(values, stat=np.median, b=1000, seed=0, level=0.95):
    """
    Percentile bootstrap CI of ``stat`` over per-item values.

    Return:
        (low, high), or (None, None) for an empty input
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return None, None
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, v.size, (b, v.size))
    stats = np.array([stat(v[row]) for row in idx])
    tail = 100 * (1 - level) / 2
    lo, hi = np.percentile(stats, [tail, 100 - tail])
    return float(lo), float(hi)
