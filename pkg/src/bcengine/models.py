"""Numerical core: L1-penalized regression with stability selection, a
linear max-margin classifier, logistic calibration of its margins, and
evaluation metrics.

All solvers are written here on plain numpy. Training standardizes
features internally (population mean/std); reported weights refer to the
standardized features, and serialized models are self-contained (the
standardizer travels with them).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)


class SingleClass(Exception):
    pass


class SchemaMismatch(Exception):
    pass


class DidNotConverge(Exception):
    pass


class LengthMismatch(Exception):
    pass


# ---------------------------------------------------------------------------
# L1-penalized least squares (cyclic coordinate descent, soft thresholding)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LassoConfig:
    lam: float
    rounds: int = 100
    subsample_fraction: float = 0.5
    select_threshold: float = 0.6
    max_iter: int = 1000
    tol: float = 1e-7

    def __post_init__(self) -> None:
        if not 0 < self.subsample_fraction <= 1:
            raise ValueError("subsample_fraction must be in (0, 1]")
        if not 0 < self.select_threshold <= 1:
            raise ValueError("select_threshold must be in (0, 1]")


@dataclass(frozen=True)
class LassoFit:
    weights: np.ndarray
    converged: bool
    iterations: int


def _standardize(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd == 0.0, 1.0, sd)
    return (X - mu) / sd, mu, sd


def lasso_fit(
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
    max_iter: int = 1000,
    tol: float = 1e-7,
) -> LassoFit:
    """Minimize (1/2n)||y - Xw||^2 + lam*||w||_1 by cyclic coordinate descent.

    X is standardized and y centered internally; the returned weights refer
    to the standardized features. Convergence: max coordinate change < tol.
    On hitting max_iter the best iterate is returned with converged=False.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if n < 2:
        raise ValueError("need at least 2 rows")
    Xs, _, _ = _standardize(X)
    yc = y - y.mean()

    gram = Xs.T @ Xs / n
    corr = Xs.T @ yc / n  # x_j . residual / n, maintained incrementally
    diag = np.diag(gram).copy()
    diag[diag == 0.0] = 1.0
    w = np.zeros(p)

    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        delta_max = 0.0
        for j in range(p):
            old = w[j]
            rho = corr[j] + diag[j] * old
            new = math.copysign(max(abs(rho) - lam, 0.0), rho) / diag[j]
            if new != old:
                dw = new - old
                corr -= dw * gram[:, j]
                w[j] = new
                delta_max = max(delta_max, abs(dw))
        if delta_max < tol:
            converged = True
            break
    if not converged:
        logger.warning("coordinate descent hit max_iter=%d (lam=%g)", max_iter, lam)
    return LassoFit(weights=w, converged=converged, iterations=it)


def stability_select(
    X: np.ndarray,
    y: np.ndarray,
    cfg: LassoConfig,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Repeated L1 fits on random subsamples; keep frequently-selected features.

    Each round subsamples floor(n * subsample_fraction) rows without
    replacement (per-round generators derive from (seed, round) so rounds
    are order-independent), records the nonzero support, and a feature is
    selected when its frequency reaches select_threshold. Failed rounds are
    logged and skipped; frequencies always divide by the configured rounds.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if cfg.rounds < 1:
        raise ValueError("rounds must be >= 1")
    m = int(n * cfg.subsample_fraction)
    counts = np.zeros(p)
    for r in range(cfg.rounds):
        rng = np.random.default_rng([seed, r])
        rows = rng.choice(n, size=m, replace=False)
        try:
            fit = lasso_fit(X[rows], y[rows], cfg.lam, cfg.max_iter, cfg.tol)
        except Exception:
            logger.exception("selection round %d failed; skipping", r)
            continue
        counts += fit.weights != 0.0
    freqs = counts / cfg.rounds
    selected = np.flatnonzero(freqs >= cfg.select_threshold)
    return selected, freqs


# ---------------------------------------------------------------------------
# Linear SVM (deterministic full-batch Pegasos-style subgradient descent)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std


@dataclass(frozen=True)
class SvmModel:
    weights: np.ndarray
    bias: float
    feature_indices: np.ndarray
    standardizer: Standardizer
    schema_id: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.feature_indices):
            raise ValueError("weights and feature_indices must align")
        if np.any(self.standardizer.std <= 0):
            raise ValueError("standardizer stds must be positive")


def svm_train(
    X: np.ndarray,
    y: np.ndarray,
    c: float = 1.0,
    epochs: int = 200,
    seed: int = 0,
    feature_indices: np.ndarray | None = None,
    schema_id: str = "",
) -> SvmModel:
    """Train a linear hinge-loss classifier on standardized features.

    Objective: 1/(2c)*||w||^2 + mean_i hinge(y_i (w.x_i + b)), minimized by
    full-batch subgradient steps with the Pegasos 1/(lambda t) rate and an
    averaged final iterate. The normalized (mean) loss makes duplicating
    every training row exactly neutral. The bias is unregularized. Per-epoch
    objective values of the running average are recorded in metadata.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    classes = np.unique(y)
    if not np.array_equal(classes, [-1.0, 1.0]):
        raise SingleClass(f"need both classes -1/+1, got {classes}")
    if feature_indices is None:
        feature_indices = np.arange(X.shape[1])
    feature_indices = np.asarray(feature_indices, dtype=np.int64)
    Xsel = X[:, feature_indices]
    sd = Xsel.std(axis=0)
    keep = sd > 0.0
    if not np.any(keep):
        raise ValueError("all selected features have zero variance")
    feature_indices = feature_indices[keep]
    Xsel = Xsel[:, keep]
    std = Standardizer(mean=Xsel.mean(axis=0), std=Xsel.std(axis=0))
    Xs = std.apply(Xsel)

    n, p = Xs.shape
    lam = 1.0 / c
    w = np.zeros(p)
    b = 0.0
    w_sum = np.zeros(p)
    b_sum = 0.0
    objectives = []
    for t in range(1, epochs + 1):
        margins = y * (Xs @ w + b)
        viol = margins < 1.0
        eta = 1.0 / (lam * t)
        grad_w = lam * w - (y[viol, None] * Xs[viol]).sum(axis=0) / n
        grad_b = -y[viol].sum() / n
        w = w - eta * grad_w
        b = b - eta * grad_b
        w_sum += w
        b_sum += b
        w_avg, b_avg = w_sum / t, b_sum / t
        hinge = np.maximum(0.0, 1.0 - y * (Xs @ w_avg + b_avg)).mean()
        objectives.append(float(lam / 2 * np.dot(w_avg, w_avg) + hinge))

    w_avg, b_avg = w_sum / epochs, b_sum / epochs
    meta = {"seed": seed, "c": c, "epochs": epochs, "objectives": objectives}
    return SvmModel(
        weights=w_avg,
        bias=float(b_avg),
        feature_indices=feature_indices,
        standardizer=std,
        schema_id=schema_id,
        metadata=meta,
    )


def _model_input(model: SvmModel, x) -> np.ndarray:
    values = getattr(x, "values", None)
    if values is not None:
        if model.schema_id and x.schema_id != model.schema_id:
            raise SchemaMismatch(f"model {model.schema_id} vs input {x.schema_id}")
        arr = np.asarray(values, dtype=np.float64)
    else:
        arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size <= int(model.feature_indices.max(initial=-1)):
        raise SchemaMismatch(
            f"input of length {arr.size} cannot index features up to "
            f"{int(model.feature_indices.max(initial=-1))}"
        )
    return arr


def svm_decision(model: SvmModel, x) -> float:
    """Signed distance to the separating hyperplane on standardized inputs."""
    arr = _model_input(model, x)
    xt = model.standardizer.apply(arr[model.feature_indices])
    raw = float(np.dot(model.weights, xt) + model.bias)
    norm = float(np.linalg.norm(model.weights))
    return raw / norm if norm > 0 else raw


def svm_predict(model: SvmModel, x) -> int:
    """Sign of the decision value; the tie d == 0 maps to +1."""
    return 1 if svm_decision(model, x) >= 0.0 else -1


# ---------------------------------------------------------------------------
# Logistic calibration of decision values (Newton with smoothed targets)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlattParams:
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError("calibration parameters must be finite")


def platt_fit(ds, ys, max_iter: int = 100) -> PlattParams:
    """Fit P(y=1|d) = 1/(1+exp(alpha*d + beta)) by Newton iterations.

    Targets use the standard smoothing priors (N+ + 1)/(N+ + 2) and
    1/(N- + 2), which keep the parameters finite even on perfectly
    separated scores. Converged when the max gradient entry < 1e-8.
    """
    d = np.asarray(ds, dtype=np.float64)
    y = np.asarray(ys)
    if d.shape != y.shape or d.ndim != 1:
        raise LengthMismatch("ds and ys must be equal-length vectors")
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("need both label values")
    t = np.where(pos, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    a = 0.0
    b = math.log((n_neg + 1.0) / (n_pos + 1.0))

    def nll(a_, b_):
        u = a_ * d + b_
        # log(1 + e^u) computed stably; NLL_i = log(1+e^u) - (1-t) u
        return float(np.sum(np.logaddexp(0.0, u) - (1.0 - t) * u))

    current = nll(a, b)
    for _ in range(max_iter):
        u = a * d + b
        p = 1.0 / (1.0 + np.exp(np.clip(u, -700, 700)))
        g = t - p
        grad_a = float(np.dot(d, g))
        grad_b = float(np.sum(g))
        if max(abs(grad_a), abs(grad_b)) < 1e-8:
            return PlattParams(alpha=a, beta=b)
        pq = p * (1.0 - p)
        h11 = float(np.dot(d * d, pq)) + 1e-12
        h22 = float(np.sum(pq)) + 1e-12
        h12 = float(np.dot(d, pq))
        det = h11 * h22 - h12 * h12
        if det <= 0:
            raise DidNotConverge("singular Hessian")
        da = -(h22 * grad_a - h12 * grad_b) / det
        db = -(h11 * grad_b - h12 * grad_a) / det
        step = 1.0
        while step >= 1e-10:
            cand = nll(a + step * da, b + step * db)
            if cand <= current + 1e-12:
                a, b = a + step * da, b + step * db
                current = cand
                break
            step /= 2.0
        else:
            raise DidNotConverge("line search failed")
    raise DidNotConverge(f"no convergence in {max_iter} iterations")


_ONE_BELOW_1 = math.nextafter(1.0, 0.0)


def platt_score(d: float, p: PlattParams) -> float:
    """Calibrated probability, strictly monotonic in d.

    Clamped just below 1.0 where the logistic saturates past float
    resolution, so the range stays inside the open interval (0, 1).
    """
    u = p.alpha * d + p.beta
    if u >= 0:
        e = math.exp(-min(u, 700.0))
        return e / (1.0 + e)
    e = math.exp(max(u, -700.0))
    return min(1.0 / (1.0 + e), _ONE_BELOW_1)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def eval_metrics(pred, truth) -> dict[str, float]:
    """Accuracy/precision/recall/F1 with +1 as the positive class.

    Precision and recall fall back to 0 on empty denominators; F1 is 0
    when precision + recall is 0.
    """
    pred = list(pred)
    truth = list(truth)
    if len(pred) != len(truth) or not pred:
        raise LengthMismatch(f"{len(pred)} vs {len(truth)}")
    tp = sum(p == 1 and t == 1 for p, t in zip(pred, truth))
    fp = sum(p == 1 and t == -1 for p, t in zip(pred, truth))
    fn = sum(p == -1 and t == 1 for p, t in zip(pred, truth))
    correct = sum(p == t for p, t in zip(pred, truth))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "accuracy": correct / len(pred),
        "precision": precision,
        "recall": recall,
        "f1": f1,
    }


# ---------------------------------------------------------------------------
# Model file I/O
# ---------------------------------------------------------------------------

MODEL_FILE_VERSION = 1


def save_model(
    path: str | Path,
    model: SvmModel,
    platt: PlattParams | None = None,
) -> None:
    doc = {
        "version": MODEL_FILE_VERSION,
        "schema_id": model.schema_id,
        "feature_indices": model.feature_indices.tolist(),
        "weights": model.weights.tolist(),
        "bias": model.bias,
        "standardizer": {
            "mean": model.standardizer.mean.tolist(),
            "std": model.standardizer.std.tolist(),
        },
        "platt": None if platt is None else {"alpha": platt.alpha, "beta": platt.beta},
        "metadata": model.metadata,
    }
    Path(path).write_text(json.dumps(doc, indent=2), encoding="utf-8")


def load_model(path: str | Path) -> tuple[SvmModel, PlattParams | None]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != MODEL_FILE_VERSION:
        raise ValueError(f"unsupported model file version: {doc.get('version')}")
    model = SvmModel(
        weights=np.array(doc["weights"], dtype=np.float64),
        bias=float(doc["bias"]),
        feature_indices=np.array(doc["feature_indices"], dtype=np.int64),
        standardizer=Standardizer(
            mean=np.array(doc["standardizer"]["mean"], dtype=np.float64),
            std=np.array(doc["standardizer"]["std"], dtype=np.float64),
        ),
        schema_id=doc.get("schema_id", ""),
        metadata=doc.get("metadata", {}),
    )
    platt = None
    if doc.get("platt"):
        platt = PlattParams(alpha=doc["platt"]["alpha"], beta=doc["platt"]["beta"])
    return model, platt
