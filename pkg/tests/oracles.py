"""Independent reference implementations used as test oracles.

Deliberately naive: loops, textbook algorithms, exact rationals. None of
them shares code with the package.
"""

import math
from fractions import Fraction

import numpy as np


def gauss_solve(A, B):
    """Gaussian elimination with partial pivoting, column by column."""
    A = np.array(A, dtype=complex)
    B = np.array(B, dtype=complex)
    vec = B.ndim == 1
    if vec:
        B = B[:, None]
    n = A.shape[0]
    M = np.hstack([A, B])
    for i in range(n):
        p = i + int(np.argmax(np.abs(M[i:, i])))
        M[[i, p]] = M[[p, i]]
        for r in range(i + 1, n):
            M[r] -= M[r, i] / M[i, i] * M[i]
    X = np.zeros((n, B.shape[1]), dtype=complex)
    for i in range(n - 1, -1, -1):
        X[i] = (M[i, n:] - M[i, i + 1:n] @ X[i + 1:]) / M[i, i]
    return X[:, 0] if vec else X


def jacobi_eigh(A, sweeps=100, tol=1e-15):
    """
    Cyclic complex Jacobi eigenvalue algorithm for Hermitian matrices.

    Return:
        (eigenvalues descending, eigenvectors as columns)
    """
    A = np.array(A, dtype=complex)
    n = A.shape[0]
    V = np.eye(n, dtype=complex)
    for _ in range(sweeps):
        off = math.sqrt(sum(abs(A[p, q]) ** 2 for p in range(n) for q in range(n) if p != q))
        if off < tol * max(1.0, np.linalg.norm(A)):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < 1e-300:
                    continue
                # unitary phase to make the pivot real, then a real rotation
                phase = apq / abs(apq)
                app, aqq = A[p, p].real, A[q, q].real
                theta = 0.5 * math.atan2(2 * abs(apq), aqq - app)
                c, s = math.cos(theta), math.sin(theta)
                J = np.eye(n, dtype=complex)
                J[p, p] = c
                J[q, q] = c
                J[p, q] = s * phase
                J[q, p] = -s * np.conj(phase)
                A = J.conj().T @ A @ J
                V = V @ J
    w = np.real(np.diag(A))
    order = np.argsort(w)[::-1]
    return w[order], V[:, order]


def naive_convolve(x, h):
    out = [0.0] * (len(x) + len(h) - 1)
    for i, xv in enumerate(x):
        for j, hv in enumerate(h):
            out[i + j] += xv * hv
    return np.array(out)


def loop_covariance(Y, m):
    """R(f) = 1/T sum_t (m y)(m y)^H with explicit loops."""
    K, T, F = Y.shape
    R = np.zeros((F, K, K), dtype=complex)
    for f in range(F):
        for t in range(T):
            v = m[t, f] * Y[:, t, f]
            for a in range(K):
                for b in range(K):
                    R[f, a, b] += v[a] * np.conj(v[b])
        R[f] /= T
    return R


def dft_frame(frame):
    """Direct O(N^2) one-sided DFT."""
    N = len(frame)
    n = np.arange(N)
    return np.array([np.sum(frame * np.exp(-2j * np.pi * k * n / N)) for k in range(N // 2 + 1)])


def schroeder_rt60(h, fs, lo_db=-5.0, hi_db=-35.0):
    """
    Backward-integrated energy decay, least-squares line between lo_db and
    hi_db, extrapolated to -60 dB.
    """
    e = np.asarray(h, dtype=float) ** 2
    edc = np.cumsum(e[::-1])[::-1]
    edc_db = 10 * np.log10(edc / edc[0] + 1e-300)
    idx = np.flatnonzero((edc_db <= lo_db) & (edc_db >= hi_db))
    t = idx / fs
    slope, _ = np.polyfit(t, edc_db[idx], 1)
    return -60.0 / slope


def brute_force_eer(targets, nontargets):
    """
    Exhaustive sweep in exact rationals: evaluate FRR (< t) and FAR (>= t)
    at every score and at +inf, then interpolate the sign change of FRR-FAR.

    Return:
        EER as a Fraction
    """
    tar = [Fraction(x) for x in targets]
    non = [Fraction(x) for x in nontargets]
    cands = sorted(set(tar) | set(non))
    points = []
    for t in cands:
        frr = Fraction(sum(1 for x in tar if x < t), len(tar))
        far = Fraction(sum(1 for x in non if x >= t), len(non))
        points.append((frr, far))
    points.append((Fraction(1), Fraction(0)))
    prev = None
    for frr, far in points:
        if frr == far:
            return frr
        if frr > far:
            f0, a0 = prev
            d0, d1 = f0 - a0, frr - far
            lam = -d0 / (d1 - d0)
            return f0 + lam * (frr - f0)
        prev = (frr, far)
    raise AssertionError("no crossing")


def direct_sdr(s, e):
    s = np.asarray(s, dtype=float)
    e = np.asarray(e, dtype=float)
    return 10 * math.log10(sum(s * s) / sum((s - e) ** 2))


def direct_si_snr(s, e):
    s = np.asarray(s, dtype=float) - np.mean(s)
    e = np.asarray(e, dtype=float) - np.mean(e)
    a = sum(e * s) / sum(s * s)
    t = a * s
    r = e - t
    return 10 * math.log10(sum(t * t) / sum(r * r))
