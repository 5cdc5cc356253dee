"""Frame-level prosodic descriptors and utterance-level functionals.

Per frame: sum-square energy, autocorrelation F0 with a voicing decision,
and 13 MFCCs from a 26-band mel filterbank (log floor 1e-10, orthonormal
DCT-II). Per utterance: 12 statistical functionals over each of the 15
descriptor channels plus two duration features, giving a fixed 182-dim
vector. The schema binds vector index to (descriptor, functional) name and
its id must match between training and inference.

Energy and F0 are computed on the raw frame; a Hann window is applied only
on the MFCC spectral path.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .audio_io import CANONICAL_RATE, Frame

N_MELS = 26
N_MFCC = 13
N_FFT = 512
F0_MIN_HZ = 50.0
F0_MAX_HZ = 500.0
VOICING_PEAK_MIN = 0.3
# Mean-square floor below which a frame is unvoiced outright.
F0_ENERGY_FLOOR = 1e-6
LOG_FLOOR = 1e-10

FUNCTIONAL_NAMES = (
    "mean", "std", "min", "max", "range", "median",
    "q25", "q75", "iqr", "slope", "skewness", "activity",
)
CHANNEL_NAMES = ("energy", "f0") + tuple(f"mfcc{i:02d}" for i in range(N_MFCC))


class EmptyUtterance(Exception):
    """Functionals requested over zero frames."""


@dataclass(frozen=True)
class FrameLLD:
    """Low-level descriptors of one frame; f0_hz is None when unvoiced."""

    energy: float
    f0_hz: float | None
    mfcc: np.ndarray


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    schema_id: str

    def __post_init__(self) -> None:
        if len(self.values) != schema_dim():
            raise ValueError(f"expected {schema_dim()} values, got {len(self.values)}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite feature values")


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def _mel_filterbank(rate: int, n_fft: int, n_mels: int) -> np.ndarray:
    """Triangular filters on the mel scale from 0 to rate/2."""
    mel_pts = np.linspace(_hz_to_mel(0.0), _hz_to_mel(rate / 2.0), n_mels + 2)
    hz_pts = _mel_to_hz(mel_pts)
    bin_freqs = np.arange(n_fft // 2 + 1) * rate / n_fft
    fb = np.zeros((n_mels, n_fft // 2 + 1))
    for m in range(n_mels):
        lo, mid, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (bin_freqs - lo) / (mid - lo)
        down = (hi - bin_freqs) / (hi - mid)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def _dct2_ortho(n_out: int, n_in: int) -> np.ndarray:
    k = np.arange(n_out)[:, None]
    m = np.arange(n_in)[None, :]
    mat = np.sqrt(2.0 / n_in) * np.cos(np.pi * k * (2 * m + 1) / (2 * n_in))
    mat[0] /= np.sqrt(2.0)
    return mat


_FILTERBANK = _mel_filterbank(CANONICAL_RATE, N_FFT, N_MELS)
_DCT = _dct2_ortho(N_MFCC, N_MELS)


def frame_lld(frame: Frame) -> FrameLLD:
    """Compute energy, F0 (autocorrelation peak in [50, 500] Hz) and MFCCs.

    Total function: silence yields energy 0, unvoiced F0 and floor-logged
    MFCCs.
    """
    x = frame.samples
    n = len(x)
    energy = float(np.dot(x, x))

    f0 = None
    if energy > F0_ENERGY_FLOOR * n:
        # FFT autocorrelation; padding >= 2n avoids circular wrap.
        nfft = 1
        while nfft < 2 * n:
            nfft *= 2
        spec = np.fft.rfft(x, nfft)
        r = np.fft.irfft(spec * np.conj(spec))[: n]
        lag_min = int(np.ceil(CANONICAL_RATE / F0_MAX_HZ))
        lag_max = min(int(CANONICAL_RATE / F0_MIN_HZ), n - 1)
        if lag_max >= lag_min and r[0] > 0:
            lags = r[lag_min : lag_max + 1]
            best = int(np.argmax(lags))
            if lags[best] / r[0] >= VOICING_PEAK_MIN:
                f0 = CANONICAL_RATE / float(lag_min + best)

    windowed = x * np.hanning(n)
    power = np.abs(np.fft.rfft(windowed, N_FFT)) ** 2
    mel_energies = _FILTERBANK @ power
    mfcc = _DCT @ np.log(np.maximum(mel_energies, LOG_FLOOR))
    return FrameLLD(energy=energy, f0_hz=f0, mfcc=mfcc)


def _slope(series: np.ndarray) -> float:
    n = len(series)
    if n < 2:
        return 0.0
    idx = np.arange(n, dtype=np.float64)
    idx -= idx.mean()
    denom = float(np.dot(idx, idx))
    return float(np.dot(idx, series - series.mean()) / denom)


def _skewness(series: np.ndarray) -> float:
    n = len(series)
    mu = series.mean()
    sd = series.std()
    if sd == 0.0:
        return 0.0
    return float(np.mean(((series - mu) / sd) ** 3))


def _mean_crossing_rate(series: np.ndarray) -> float:
    if len(series) < 2:
        return 0.0
    centered = series - series.mean()
    crossings = np.sum(centered[:-1] * centered[1:] < 0)
    return float(crossings) / (len(series) - 1)


def _channel_functionals(series: np.ndarray, activity: float) -> list[float]:
    if len(series) == 0:
        return [0.0] * len(FUNCTIONAL_NAMES)
    q25, med, q75 = np.percentile(series, [25, 50, 75])
    return [
        float(series.mean()),
        float(series.std()),
        float(series.min()),
        float(series.max()),
        float(series.max() - series.min()),
        float(med),
        float(q25),
        float(q75),
        float(q75 - q25),
        _slope(series),
        _skewness(series),
        activity,
    ]


def utterance_functionals(llds: Sequence[FrameLLD], duration_ms: int) -> FeatureVector:
    """Summarize frame descriptors into the fixed 182-dim utterance vector.

    F0 functionals run over voiced frames only; an all-unvoiced utterance
    zeroes the whole f0 block (voiced-ratio included). The std of a
    singleton series is 0.
    """
    if not llds:
        raise EmptyUtterance("no frames in utterance")
    energy = np.array([l.energy for l in llds])
    f0 = np.array([l.f0_hz for l in llds if l.f0_hz is not None], dtype=np.float64)
    voiced_count = len(f0)
    mfcc = np.stack([l.mfcc for l in llds])

    values: list[float] = []
    values += _channel_functionals(energy, _mean_crossing_rate(energy))
    values += _channel_functionals(f0, voiced_count / len(llds))
    for c in range(N_MFCC):
        col = mfcc[:, c]
        values += _channel_functionals(col, _mean_crossing_rate(col))
    values.append(float(duration_ms))
    values.append(float(voiced_count))
    return FeatureVector(np.array(values), schema_id=schema_id())


def schema_names() -> list[str]:
    names = []
    for ch in CHANNEL_NAMES:
        for fn in FUNCTIONAL_NAMES:
            if fn == "activity":
                fn = "voiced_ratio" if ch == "f0" else "mean_crossing_rate"
            names.append(f"{ch}_{fn}")
    names += ["duration_ms", "voiced_count"]
    return names


def schema_dim() -> int:
    return len(CHANNEL_NAMES) * len(FUNCTIONAL_NAMES) + 2


def schema_id() -> str:
    digest = hashlib.sha1("\n".join(schema_names()).encode()).hexdigest()
    return f"llf-{digest[:12]}"


def schema_json() -> str:
    """Versioned schema document serialized alongside any trained model."""
    return json.dumps(
        {"version": 1, "schema_id": schema_id(), "names": schema_names()},
        indent=2,
    )
