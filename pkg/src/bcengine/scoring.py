"""Proactive-backchannel scoring: pause, progress and participant scores
combined into a weighted decision.

The pause score is the CDF of a location-shifted lognormal fitted to
silence intervals (per task); the progress score discretizes a fitted
skew-normal over task time into 100 ms bins and rescales the peak bin to
1; the participant score is the calibrated margin of the participant
classifier. The overall score is the convex combination of the three and a
decision fires strictly above the threshold.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize
from scipy.special import log_ndtr, ndtr

from .models import PlattParams, platt_score

logger = logging.getLogger(__name__)


class TooFewSamples(Exception):
    pass


class DegenerateSamples(Exception):
    pass


class FitDiverged(Exception):
    pass


class WeightsNotNormalized(Exception):
    pass


MIN_FIT_SAMPLES = 20
DEFAULT_BIN_MS = 100
# Simpson panels per bin when discretizing the progress density.
_PANELS_PER_BIN = 16


def normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


# ---------------------------------------------------------------------------
# Pause score: location-shifted lognormal
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogNormalParams:
    """Location mu (ms), scale sigma (ms), shape s; defined for t > mu."""

    mu: float
    sigma: float
    s: float
    task_id: str = ""

    def __post_init__(self) -> None:
        if self.sigma <= 0 or self.s <= 0:
            raise ValueError("sigma and s must be positive")

    def pdf(self, t: float) -> float:
        if t <= self.mu:
            return 0.0
        z = (t - self.mu) / self.sigma
        return math.exp(-math.log(z) ** 2 / (2 * self.s**2)) / (
            self.s * z * self.sigma * math.sqrt(2 * math.pi)
        )

    def cdf(self, t: float) -> float:
        if t <= self.mu:
            return 0.0
        z = (t - self.mu) / self.sigma
        return normal_cdf(math.log(z) / self.s)

    @property
    def median(self) -> float:
        return self.mu + self.sigma


def fit_lognormal(samples, task_id: str = "", n_grid: int = 200) -> LogNormalParams:
    """Maximum-likelihood fit with the location profiled over a grid.

    For each location candidate the shape/scale MLE is closed-form on
    log(t - mu); candidates run from 0 to just below min(sample), keeping
    the unbounded-likelihood endpoint out of the search.
    """
    t = np.asarray(samples, dtype=np.float64)
    if len(t) < MIN_FIT_SAMPLES:
        raise TooFewSamples(f"need >= {MIN_FIT_SAMPLES}, got {len(t)}")
    if np.any(t <= 0):
        raise ValueError("pause samples must be positive")
    t_min = float(t.min())
    if t_min == float(t.max()):
        raise DegenerateSamples("all samples equal")
    eps = max(1e-3 * t_min, 1e-9)
    best = None
    for mu in np.linspace(0.0, t_min - eps, n_grid):
        logs = np.log(t - mu)
        y_bar = float(logs.mean())
        s2 = float(logs.var())
        if s2 <= 0:
            continue
        # Profile log-likelihood up to constants: -n/2*log s2 - sum(log(t-mu))
        ll = -0.5 * len(t) * math.log(s2) - float(logs.sum())
        if best is None or ll > best[0]:
            best = (ll, mu, math.exp(y_bar), math.sqrt(s2))
    if best is None:
        raise DegenerateSamples("no valid location candidate")
    _, mu, sigma, s = best
    return LogNormalParams(mu=float(mu), sigma=sigma, s=s, task_id=task_id)


def pause_score(t_pau: float, p: LogNormalParams) -> float:
    """CDF of the fitted pause distribution; 0 at or below the location."""
    return p.cdf(t_pau)


def sample_lognormal(p: LogNormalParams, n: int, rng: np.random.Generator) -> np.ndarray:
    return p.mu + p.sigma * np.exp(p.s * rng.standard_normal(n))


# ---------------------------------------------------------------------------
# Progress score: skew-normal discretized to a rescaled PMF
# ---------------------------------------------------------------------------


def _skewnorm_logpdf(x: np.ndarray, xi: float, omega: float, a: float) -> np.ndarray:
    u = (x - xi) / omega
    return (
        math.log(2.0 / omega)
        - 0.5 * (u * u + math.log(2 * math.pi))
        + log_ndtr(a * u)
    )


def _skewnorm_pdf(x: np.ndarray, xi: float, omega: float, a: float) -> np.ndarray:
    u = (x - xi) / omega
    return (
        2.0 / omega
        * np.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)
        * ndtr(a * u)
    )


class SkewNormalParams:
    """Skew-normal over task time plus its 100 ms PMF discretization.

    Bin masses are integrated once (composite Simpson) and cached; the
    progress score divides by the max bin mass so the peak bin scores 1.0
    exactly. k = 1/max_bin_mass is exposed for serialization.
    """

    def __init__(
        self,
        xi: float,
        omega: float,
        a: float,
        task_duration_ms: int,
        bin_ms: int = DEFAULT_BIN_MS,
        task_id: str = "",
    ) -> None:
        if omega <= 0:
            raise ValueError("omega must be positive")
        if task_duration_ms % bin_ms != 0:
            raise ValueError("bin_ms must divide task_duration_ms")
        self.xi = float(xi)
        self.omega = float(omega)
        self.a = float(a)
        self.task_duration_ms = int(task_duration_ms)
        self.bin_ms = int(bin_ms)
        self.task_id = task_id
        self._masses: np.ndarray | None = None

    def pdf(self, x) -> np.ndarray:
        return _skewnorm_pdf(np.asarray(x, dtype=np.float64), self.xi, self.omega, self.a)

    @property
    def bin_masses(self) -> np.ndarray:
        if self._masses is None:
            n_bins = self.task_duration_ms // self.bin_ms
            m = _PANELS_PER_BIN
            edges = np.linspace(
                0.0, float(self.task_duration_ms), n_bins * m + 1
            )
            vals = self.pdf(edges)
            h = self.bin_ms / m
            # Composite Simpson per bin needs an even panel count.
            masses = np.empty(n_bins)
            for b in range(n_bins):
                seg = vals[b * m : b * m + m + 1]
                masses[b] = h / 3.0 * (
                    seg[0] + seg[-1] + 4.0 * seg[1:-1:2].sum() + 2.0 * seg[2:-2:2].sum()
                )
            self._masses = masses
        return self._masses

    @property
    def max_bin_mass(self) -> float:
        return float(self.bin_masses.max())

    @property
    def k(self) -> float:
        return 1.0 / self.max_bin_mass

    def to_dict(self) -> dict:
        return {
            "xi": self.xi,
            "omega": self.omega,
            "a": self.a,
            "k": self.k,
            "bin_ms": self.bin_ms,
            "duration_ms": self.task_duration_ms,
        }

    @staticmethod
    def from_dict(d: dict, task_id: str = "") -> "SkewNormalParams":
        return SkewNormalParams(
            xi=d["xi"],
            omega=d["omega"],
            a=d["a"],
            task_duration_ms=d["duration_ms"],
            bin_ms=d.get("bin_ms", DEFAULT_BIN_MS),
            task_id=task_id,
        )


def _skewnorm_moments_start(x: np.ndarray) -> tuple[float, float, float]:
    m1 = float(x.mean())
    m2 = float(x.var())
    g1 = float(np.mean(((x - m1) / max(x.std(), 1e-12)) ** 3))
    g1 = float(np.clip(g1, -0.95, 0.95))
    # Invert sample skewness to the shape parameter (standard approximation).
    r = abs(g1) ** (2.0 / 3.0)
    c = ((4.0 - math.pi) / 2.0) ** (2.0 / 3.0)
    delta = math.copysign(math.sqrt(math.pi / 2.0 * r / (r + c)), g1)
    delta = float(np.clip(delta, -0.99, 0.99))
    a = delta / math.sqrt(1.0 - delta * delta)
    omega = math.sqrt(m2 / (1.0 - 2.0 * delta * delta / math.pi))
    xi = m1 - omega * delta * math.sqrt(2.0 / math.pi)
    return xi, omega, a


def fit_skewnormal(
    samples,
    duration_ms: int,
    bin_ms: int = DEFAULT_BIN_MS,
    task_id: str = "",
) -> SkewNormalParams:
    """Skew-normal MLE by derivative-free simplex from a moments start.

    Falls back to a symmetric normal (a = 0) when the search fails to
    produce a finite optimum, logging the event.
    """
    x = np.asarray(samples, dtype=np.float64)
    if len(x) < MIN_FIT_SAMPLES:
        raise TooFewSamples(f"need >= {MIN_FIT_SAMPLES}, got {len(x)}")
    if float(x.min()) == float(x.max()):
        raise DegenerateSamples("all samples equal")

    def neg_ll(theta: np.ndarray) -> float:
        xi, log_omega, a = theta
        omega = math.exp(min(log_omega, 50.0))
        return -float(np.sum(_skewnorm_logpdf(x, xi, omega, a)))

    xi0, omega0, a0 = _skewnorm_moments_start(x)
    start = np.array([xi0, math.log(max(omega0, 1e-9)), a0])
    res = optimize.minimize(
        neg_ll,
        start,
        method="Nelder-Mead",
        options={"xatol": 1e-6, "fatol": 1e-9, "maxiter": 4000, "maxfev": 6000},
    )
    if not np.all(np.isfinite(res.x)) or not math.isfinite(res.fun):
        logger.warning("skew-normal fit diverged; falling back to symmetric normal")
        return SkewNormalParams(
            xi=float(x.mean()),
            omega=float(x.std()),
            a=0.0,
            task_duration_ms=duration_ms,
            bin_ms=bin_ms,
            task_id=task_id,
        )
    xi, log_omega, a = res.x
    return SkewNormalParams(
        xi=float(xi),
        omega=float(math.exp(log_omega)),
        a=float(a),
        task_duration_ms=duration_ms,
        bin_ms=bin_ms,
        task_id=task_id,
    )


def progress_score(t_task: float, p: SkewNormalParams) -> float:
    """Rescaled PMF of the bin containing t_task; 0 outside [0, duration)."""
    if t_task < 0 or t_task >= p.task_duration_ms:
        return 0.0
    b = int(t_task // p.bin_ms)
    return float(p.bin_masses[b] / p.max_bin_mass)


def sample_skewnormal(p: SkewNormalParams, n: int, rng: np.random.Generator) -> np.ndarray:
    delta = p.a / math.sqrt(1.0 + p.a * p.a)
    u0 = rng.standard_normal(n)
    u1 = rng.standard_normal(n)
    return p.xi + p.omega * (delta * np.abs(u0) + math.sqrt(1.0 - delta * delta) * u1)


# ---------------------------------------------------------------------------
# Participant score and the combined decision
# ---------------------------------------------------------------------------


class ParticipantScoreCache:
    """Session-confined memo of calibrated participant scores."""

    def __init__(self) -> None:
        self._memo: dict[float, float] = {}

    def score(self, d: float, p: PlattParams) -> float:
        if d not in self._memo:
            self._memo[d] = platt_score(d, p)
        return self._memo[d]


def participant_score(
    d: float, p: PlattParams, cache: ParticipantScoreCache | None = None
) -> float:
    """Calibrated probability that the participant is in the more-proactive
    class; cached per session when a cache is supplied."""
    if cache is not None:
        return cache.score(d, p)
    return platt_score(d, p)


@dataclass(frozen=True)
class TaskScoringParams:
    pause: LogNormalParams
    progress: SkewNormalParams


@dataclass(frozen=True)
class PbcScoringConfig:
    """Weights, threshold and per-task distribution parameters."""

    weight_pause: float = 0.5
    weight_progress: float = 0.3
    weight_participant: float = 0.2
    thr_pbc: float = 0.75
    task_params: dict[str, TaskScoringParams] = field(default_factory=dict)

    def __post_init__(self) -> None:
        w = (self.weight_pause, self.weight_progress, self.weight_participant)
        if any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
            raise WeightsNotNormalized(f"weights {w} must be >= 0 and sum to 1")
        if not 0.0 < self.thr_pbc < 1.0:
            raise ValueError("thr_pbc must be in (0, 1)")


def pbc_score(s_pau: float, s_pg: float, s_pt: float, cfg: PbcScoringConfig) -> float:
    """Convex combination of the three sub-scores."""
    w = (cfg.weight_pause, cfg.weight_progress, cfg.weight_participant)
    if any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
        raise WeightsNotNormalized(str(w))
    return w[0] * s_pau + w[1] * s_pg + w[2] * s_pt


def pbc_decision(score: float, cfg: PbcScoringConfig, threshold: float | None = None) -> bool:
    """Fire strictly above the threshold (score == thr is no decision)."""
    thr = cfg.thr_pbc if threshold is None else threshold
    return score > thr


# ---------------------------------------------------------------------------
# Fitted-parameter file I/O (versioned JSON, one entry per task)
# ---------------------------------------------------------------------------

PARAMS_FILE_VERSION = 1


def save_params(path: str | Path, tasks: dict[str, TaskScoringParams]) -> None:
    doc = {
        "version": PARAMS_FILE_VERSION,
        "tasks": {
            tid: {
                "lognormal": {"mu": tp.pause.mu, "sigma": tp.pause.sigma, "s": tp.pause.s},
                "skewnormal": tp.progress.to_dict(),
            }
            for tid, tp in tasks.items()
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2), encoding="utf-8")


def load_params(path: str | Path) -> dict[str, TaskScoringParams]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != PARAMS_FILE_VERSION:
        raise ValueError(f"unsupported params file version: {doc.get('version')}")
    tasks = {}
    for tid, entry in doc["tasks"].items():
        ln = entry["lognormal"]
        tasks[tid] = TaskScoringParams(
            pause=LogNormalParams(mu=ln["mu"], sigma=ln["sigma"], s=ln["s"], task_id=tid),
            progress=SkewNormalParams.from_dict(entry["skewnormal"], task_id=tid),
        )
    return tasks
