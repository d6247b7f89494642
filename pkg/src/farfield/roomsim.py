"""Shoebox room impulse responses by the image-source method.

Walls are frequency independent and share one absorption coefficient
alpha. Each image reflected n times contributes beta**n / (4 pi d),
beta = sqrt(1 - alpha), at delay d / c, rendered as an 81-tap Hann-windowed
sinc so fractional delays are kept. Because every reflection is positive,
dense late images pile up a DC component; a 2nd-order 50 Hz high-pass
removes it (as in Allen & Berkley's original method).

alpha is solved per room from the image set's own energy decay
(:func:`ism_absorption`); the Sabine inversion is kept as
:func:`rt60_to_absorption` but underestimates the absorption a specular
shoebox needs.
"""

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.signal import butter, sosfilt

from .errors import InfeasibleRoomError

SPEED_OF_SOUND = 343.0
SINC_HALF_WIDTH = 40  # 81 taps
FRACTIONAL_PHASES = 256
HIGHPASS_HZ = 50.0

PROFILES = {
    "train": {"length": (3.0, 8.0), "width": (3.0, 5.0), "height": (2.0, 3.0),
              "rt60": (0.2, 0.6)},
    "eval": {"length": (3.0, 8.0), "width": (3.0, 5.0), "height": (2.0, 3.0),
             "rt60": 0.4},
}
SOURCE_WALL_MARGIN = 1.5
MIC_WALL_MARGIN = 1.0
SOURCE_HEIGHT = (1.2, 1.8)
MIN_SOURCE_MIC_DISTANCE = 0.5
ARRAY_MICS = 4
ARRAY_SPACING = 0.05
MAX_RETRIES = 1000


@dataclass(frozen=True)
class RoomSpec:
    dimensions: tuple
    rt60_target: float
    source_position: tuple
    mic_positions: tuple
    sample_rate: int = 16000
    seed: int = None
    noise_position: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "dimensions", tuple(float(v) for v in self.dimensions))
        object.__setattr__(self, "source_position", tuple(float(v) for v in self.source_position))
        object.__setattr__(self, "mic_positions",
                           tuple(tuple(float(v) for v in m) for m in self.mic_positions))
        if self.noise_position is not None:
            object.__setattr__(self, "noise_position",
                               tuple(float(v) for v in self.noise_position))
        dims = np.array(self.dimensions)
        if dims.shape != (3,) or np.any(dims <= 0):
            raise InfeasibleRoomError(f"room dimensions must be three positive lengths, got {self.dimensions}")
        if not self.rt60_target > 0:
            raise InfeasibleRoomError("rt60_target must be positive")
        points = [self.source_position, *self.mic_positions]
        if self.noise_position is not None:
            points.append(self.noise_position)
        for p in points:
            p = np.array(p)
            if p.shape != (3,) or np.any(p <= 0) or np.any(p >= dims):
                raise InfeasibleRoomError(f"position {tuple(p)} is not strictly inside the room")
        if any(m == self.source_position for m in self.mic_positions):
            raise InfeasibleRoomError("source coincides with a microphone")

    @property
    def n_mics(self):
        return len(self.mic_positions)

    def to_dict(self):
        d = asdict(self)
        d["dimensions"] = list(self.dimensions)
        d["source_position"] = list(self.source_position)
        d["mic_positions"] = [list(m) for m in self.mic_positions]
        if self.noise_position is not None:
            d["noise_position"] = list(self.noise_position)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True, eq=False)
class Rir:
    """Impulse responses, ``taps`` shaped K x length."""

    taps: np.ndarray
    sample_rate: int = 16000


def _uniform(rng, bounds):
    if isinstance(bounds, tuple):
        return float(rng.uniform(*bounds))
    return float(bounds)


def _linear_array(center, azimuth, n_mics=ARRAY_MICS, spacing=ARRAY_SPACING):
    offsets = (np.arange(n_mics) - (n_mics - 1) / 2) * spacing
    axis = np.array([math.cos(azimuth), math.sin(azimuth), 0.0])
    return center[None, :] + offsets[:, None] * axis[None, :]


def _draw_source(rng, dims):
    L, W, H = dims
    z_hi = min(SOURCE_HEIGHT[1], H - 0.5)
    return np.array([rng.uniform(SOURCE_WALL_MARGIN, L - SOURCE_WALL_MARGIN),
                     rng.uniform(SOURCE_WALL_MARGIN, W - SOURCE_WALL_MARGIN),
                     rng.uniform(SOURCE_HEIGHT[0], z_hi)])


def _mics_ok(mics, dims):
    return bool(np.all(mics >= MIC_WALL_MARGIN) and np.all(mics <= np.asarray(dims) - MIC_WALL_MARGIN))


def sample_room(seed, profile="train", n_mics=ARRAY_MICS, spacing=ARRAY_SPACING,
                sample_rate=16000):
    """
    Draw a random room following the corpus protocol.

    Dimensions and RT60 are uniform within the profile bounds; the "eval"
    profile fixes RT60 at 0.4 s. The speech and noise sources keep 1.5 m
    from the four side walls, every microphone keeps 1 m from all six
    surfaces. The microphones form a linear array (5 cm spacing by
    default) placed as a rigid body with a random horizontal orientation.
    Placements are redrawn until all constraints hold.
    """
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; expected one of {sorted(PROFILES)}")
    bounds = PROFILES[profile]
    rng = np.random.default_rng(seed)
    dims = (_uniform(rng, bounds["length"]), _uniform(rng, bounds["width"]),
            _uniform(rng, bounds["height"]))
    rt60 = _uniform(rng, bounds["rt60"])

    half = (n_mics - 1) / 2 * spacing
    for _ in range(MAX_RETRIES):
        source = _draw_source(rng, dims)
        noise = _draw_source(rng, dims)
        center = np.array([rng.uniform(MIC_WALL_MARGIN, dims[0] - MIC_WALL_MARGIN),
                           rng.uniform(MIC_WALL_MARGIN, dims[1] - MIC_WALL_MARGIN),
                           rng.uniform(MIC_WALL_MARGIN, dims[2] - MIC_WALL_MARGIN)])
        mics = _linear_array(center, rng.uniform(0, 2 * math.pi), n_mics, spacing)
        if half and not _mics_ok(mics, dims):
            continue
        if np.min(np.linalg.norm(mics - source, axis=1)) < MIN_SOURCE_MIC_DISTANCE:
            continue
        if np.min(np.linalg.norm(mics - noise, axis=1)) < MIN_SOURCE_MIC_DISTANCE:
            continue
        if np.array_equal(source, noise):
            continue
        room = RoomSpec(dims, rt60, tuple(source), tuple(map(tuple, mics)),
                        sample_rate, seed, tuple(noise))
        rt60_to_absorption(room)
        return room
    raise InfeasibleRoomError(f"no feasible placement after {MAX_RETRIES} retries "
                              f"(dimensions {dims})")


def rt60_to_absorption(room):
    """Sabine inversion: alpha = 0.161 V / (S RT60)."""
    L, W, H = room.dimensions
    volume = L * W * H
    surface = 2 * (L * W + L * H + W * H)
    alpha = 0.161 * volume / (surface * room.rt60_target)
    if alpha > 1:
        raise InfeasibleRoomError(f"RT60 of {room.rt60_target} s needs absorption "
                                  f"{alpha:.3f} > 1 in a {L}x{W}x{H} m room")
    return alpha


def _schroeder_t30(energy, bin_seconds):
    """T30 (-5 to -35 dB, extrapolated to 60 dB) of a binned energy curve."""
    edc = np.cumsum(energy[::-1])[::-1]
    with np.errstate(divide="ignore"):
        db = 10 * np.log10(edc / edc[0])
    sel = (db <= -5) & (db >= -35)
    if np.count_nonzero(sel) < 2:
        return np.nan
    t = np.flatnonzero(sel) * bin_seconds
    slope = np.polyfit(t, db[sel], 1)[0]
    return -60.0 / slope


def ism_absorption(room, bin_seconds=1e-3):
    """
    Wall absorption at which the image-source response of this room decays
    with the target RT60.

    Sabine (and Eyring) assume a diffuse field; a specular shoebox is not
    one, and its late tail is carried by images that reflect off few walls,
    so the Sabine absorption leaves the generated responses ~25-60% too
    long. Here the energy-time curve of the image set (source to first
    microphone) is binned once per reflection count, and alpha is solved so
    that its Schroeder T30 equals ``room.rt60_target``.
    """
    fs = room.sample_rate
    length = rir_length(room)
    max_distance = length / fs * SPEED_OF_SOUND
    positions, refl = image_sources(np.asarray(room.source_position), room.dimensions,
                                    max_distance)
    d = np.linalg.norm(positions - np.asarray(room.mic_positions[0]), axis=1)
    near = d < max_distance
    d, refl = d[near], refl[near]
    n_bins = int(math.ceil(length / fs / bin_seconds))
    t_bin = np.minimum((d / SPEED_OF_SOUND / bin_seconds).astype(np.int64), n_bins - 1)
    max_refl = int(refl.max())
    hist = np.bincount(refl * n_bins + t_bin, weights=1.0 / d ** 2,
                       minlength=(max_refl + 1) * n_bins).reshape(max_refl + 1, n_bins)
    orders = np.arange(max_refl + 1)

    def excess(alpha):
        energy = (1.0 - alpha) ** orders @ hist
        t30 = _schroeder_t30(energy, bin_seconds)
        # too fast to resolve at this bin width counts as "too short"
        return (0.0 if np.isnan(t30) else t30) - room.rt60_target

    lo, hi = 1e-4, 0.99
    if not excess(hi) < 0:
        raise InfeasibleRoomError(f"RT60 of {room.rt60_target} s is unreachable even "
                                  f"with fully absorbing walls")
    if not excess(lo) > 0:
        raise InfeasibleRoomError(f"RT60 of {room.rt60_target} s exceeds what the "
                                  f"simulated response length can hold")
    return brentq(excess, lo, hi, xtol=1e-6)


def rir_length(room):
    return int(math.ceil(1.5 * room.rt60_target * room.sample_rate))


def image_sources(source, dims, max_distance):
    """
    All image positions that may lie within ``max_distance`` of the room.

    Return:
        positions (M x 3), reflection counts (M,)
    """
    per_axis = []
    for s, L in zip(source, dims):
        N = int(math.ceil(max_distance / (2 * L))) + 1
        n = np.arange(-N, N + 1)
        pos = np.concatenate([s + 2 * n * L, -s + 2 * n * L])
        refl = np.concatenate([2 * np.abs(n), np.abs(n - 1) + np.abs(n)])
        per_axis.append((pos, refl))
    (px, rx), (py, ry), (pz, rz) = per_axis
    X, Y, Z = np.meshgrid(px, py, pz, indexing="ij")
    RX, RY, RZ = np.meshgrid(rx, ry, rz, indexing="ij")
    positions = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    return positions, (RX + RY + RZ).ravel()


def _sinc_table(phases=FRACTIONAL_PHASES):
    """Hann-windowed sinc taps for fractional offsets -0.5 .. 0.5 (rows)."""
    phi = (np.arange(phases + 1) / phases - 0.5)[:, None]
    x = np.arange(-SINC_HALF_WIDTH, SINC_HALF_WIDTH + 1)[None, :] - phi
    window = 0.5 * (1 + np.cos(np.pi * x / (SINC_HALF_WIDTH + 0.5)))
    return window * np.sinc(x)


def _render(delays, amps, length, phases=FRACTIONAL_PHASES):
    """
    Sum windowed-sinc pulses at fractional sample delays.

    Each pulse is split linearly between the two nearest of ``phases``
    tabulated fractional offsets, so the whole response is one matrix
    product instead of one 81-tap kernel per image.
    """
    half = SINC_HALF_WIDTH
    n0 = np.rint(delays)
    pos = (delays - n0 + 0.5) * phases
    j = np.minimum(np.floor(pos), phases - 1)
    frac = pos - j
    row = n0.astype(np.int64) + half
    keep = (row >= 0) & (row < length + 2 * half)
    row, j, frac, amps = row[keep], j[keep].astype(np.int64), frac[keep], amps[keep]

    rows, cols = length + 2 * half, phases + 1
    flat = row * cols + j
    acc = np.bincount(flat, weights=amps * (1 - frac), minlength=rows * cols)
    acc += np.bincount(flat + 1, weights=amps * frac, minlength=rows * cols)
    per_tap = acc.reshape(rows, cols) @ _sinc_table(phases)  # rows x 81

    out = np.zeros(rows + 2 * half + 1)
    for k in range(2 * half + 1):
        out[k:k + rows] += per_tap[:, k]
    # row r holds pulses centred on sample r - half; tap k lands on r - half + k - half
    return out[2 * half:2 * half + length]


def simulate_rir(room, source=None, absorption=None, inversion="ism",
                 highpass_hz=HIGHPASS_HZ):
    """
    Arguments:
        room: RoomSpec
        source: emitter position, defaults to ``room.source_position``
        absorption: explicit wall absorption; otherwise derived from
            ``room.rt60_target`` by ``inversion`` ("ism" or "sabine")
        highpass_hz: cutoff of the DC-blocking high-pass, None to disable
    Return:
        Rir with K x ceil(1.5 * RT60 * fs) taps
    """
    if absorption is None:
        if inversion == "ism":
            absorption = ism_absorption(room)
        elif inversion == "sabine":
            absorption = rt60_to_absorption(room)
        else:
            raise ValueError(f"unknown inversion {inversion!r}")
    alpha = float(absorption)
    if not 0 <= alpha <= 1:
        raise InfeasibleRoomError(f"absorption must lie in [0, 1], got {alpha}")
    beta = math.sqrt(1 - alpha)
    fs = room.sample_rate
    length = rir_length(room)
    src = np.asarray(room.source_position if source is None else source, dtype=float)
    max_distance = (length + SINC_HALF_WIDTH) / fs * SPEED_OF_SOUND

    positions, refl = image_sources(src, room.dimensions, max_distance)
    if beta == 0:
        keep = refl == 0
        positions, refl = positions[keep], refl[keep]
    gain = beta ** refl

    taps = np.zeros((room.n_mics, length))
    for m, mic in enumerate(room.mic_positions):
        d = np.linalg.norm(positions - np.asarray(mic), axis=1)
        near = d <= max_distance
        dist = d[near]
        taps[m] = _render(dist / SPEED_OF_SOUND * fs, gain[near] / (4 * np.pi * dist), length)
    if highpass_hz:
        sos = butter(2, highpass_hz, "highpass", fs=fs, output="sos")
        taps = sosfilt(sos, taps, axis=-1)
    return Rir(taps, fs)
