"""File formats: WAV audio, TFB1 tensors, trial CSVs, JSON / JSON-lines.

TFB1 layout (little endian)::

    magic   4 bytes  b"TFB1"
    version u8       1
    dtype   u8       0 = float32, 1 = complex64 (interleaved re/im float32)
    ndim    u8
    reserved u8      0
    dims    ndim x u32
    payload row-major, last dim fastest

All writers go through a temporary file in the destination directory and
an atomic rename, so readers never see partial files.
"""

import contextlib
import json
import math
import os
import struct
import tempfile
import warnings

import numpy as np
from scipy.io import wavfile

from .dsp import DEFAULT_RATE, Waveform
from .errors import FormatError, SampleRateError

TFB1_MAGIC = b"TFB1"
TFB1_VERSION = 1
_TFB1_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<c8")}
_PCM16_SCALE = 32768.0


@contextlib.contextmanager
def atomic_write(path, mode="wb"):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


# -- WAV ---------------------------------------------------------------------

def read_wav(path, expected_rate=DEFAULT_RATE, allow_rate=False):
    """
    Read a PCM16 or IEEE float32 WAV file.

    Return:
        Waveform with float32 samples shaped K x L (PCM16 scaled by 1/32768)
    """
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(os.fspath(path))
    # a RIFF file without fmt/data chunks surfaces as UnboundLocalError
    except (ValueError, EOFError, struct.error, UnboundLocalError) as exc:
        raise FormatError(f"{path}: malformed WAV file ({exc})") from exc
    if data.dtype == np.int16:
        samples = data.astype(np.float32) / np.float32(_PCM16_SCALE)
    elif data.dtype == np.float32:
        samples = data
    else:
        raise FormatError(f"{path}: unsupported sample format {data.dtype}; "
                          f"only PCM16 and float32 are accepted")
    if rate != expected_rate and not allow_rate:
        raise SampleRateError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    samples = samples[:, None] if samples.ndim == 1 else samples
    return Waveform(np.ascontiguousarray(samples.T), int(rate))


def to_pcm16(x):
    """Round half away from zero, saturate to the int16 range."""
    scaled = np.asarray(x, dtype=np.float64) * _PCM16_SCALE
    q = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return np.clip(q, -32768, 32767).astype(np.int16)


def write_wav(w, path, encoding="float32"):
    if not isinstance(w, Waveform):
        w = Waveform(w)
    if encoding == "float32":
        data = w.samples.astype(np.float32)
    elif encoding == "pcm16":
        data = to_pcm16(w.samples)
    else:
        raise ValueError(f"unknown encoding {encoding!r}; use 'float32' or 'pcm16'")
    data = data.T if data.shape[0] > 1 else data[0]
    with atomic_write(path) as fh:
        wavfile.write(fh, int(w.sample_rate), np.ascontiguousarray(data))


# -- TFB1 --------------------------------------------------------------------

def write_tfb1(tensor, path):
    arr = np.asarray(tensor)
    if np.iscomplexobj(arr):
        code, arr = 1, arr.astype("<c8")
    else:
        code, arr = 0, arr.astype("<f4")
    if arr.ndim > 255:
        raise FormatError("TFB1 supports at most 255 dimensions")
    if any(d >= 2 ** 32 for d in arr.shape):
        raise FormatError("TFB1 dimensions must fit in u32")
    header = TFB1_MAGIC + struct.pack("<BBBB", TFB1_VERSION, code, arr.ndim, 0)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    with atomic_write(path) as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_tfb1(path):
    """Validate header and total size against the file before allocating."""
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) < 8:
            raise FormatError(f"{path}: truncated TFB1 header")
        if head[:4] != TFB1_MAGIC:
            raise FormatError(f"{path}: bad magic {head[:4]!r}")
        version, code, ndim, reserved = struct.unpack("<BBBB", head[4:])
        if version != TFB1_VERSION:
            raise FormatError(f"{path}: unsupported TFB1 version {version}")
        if code not in _TFB1_DTYPES:
            raise FormatError(f"{path}: unknown dtype code {code}")
        if reserved != 0:
            raise FormatError(f"{path}: reserved header byte is {reserved}, expected 0")
        raw_dims = fh.read(4 * ndim)
        if len(raw_dims) < 4 * ndim:
            raise FormatError(f"{path}: truncated TFB1 dimension table")
        dims = struct.unpack(f"<{ndim}I", raw_dims)
        dtype = _TFB1_DTYPES[code]
        expected = dtype.itemsize * math.prod(dims)
        available = size - 8 - 4 * ndim
        if expected != available:
            raise FormatError(f"{path}: header declares {expected} payload bytes, "
                              f"file holds {available}")
        payload = fh.read(expected)
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


# -- text formats ------------------------------------------------------------

def read_trials(path):
    """
    Trial list as CSV lines ``label,score`` with label target / nontarget.
    A leading ``label,score`` header line is accepted.

    Return:
        (is_target bool array, scores float array)
    """
    labels, scores = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if lineno == 1 and parts == ["label", "score"]:
                continue
            if len(parts) != 2 or parts[0] not in ("target", "nontarget"):
                raise FormatError(f"{path}:{lineno}: expected 'target|nontarget,score'")
            try:
                score = float(parts[1])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: bad score {parts[1]!r}") from exc
            if not math.isfinite(score):
                raise FormatError(f"{path}:{lineno}: score must be finite")
            labels.append(parts[0] == "target")
            scores.append(score)
    return np.array(labels, dtype=bool), np.array(scores, dtype=float)


def write_trials(is_target, scores, path):
    with atomic_write(path, "w") as fh:
        fh.write("label,score\n")
        for t, s in zip(is_target, scores):
            fh.write(f"{'target' if t else 'nontarget'},{float(s)!r}\n")


def dumps(obj):
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(obj, path):
    with atomic_write(path, "w") as fh:
        fh.write(dumps(obj))


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def read_jsonl(path):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
    return out


def write_jsonl(records, path):
    with atomic_write(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True, allow_nan=False) + "\n")
