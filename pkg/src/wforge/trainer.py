"""Sparse max-margin training of witness coefficients.

The objective is the L1-regularized hinge loss

    L(a) = mean_t max(0, 1 - yhat_t * (x_t . a))**m + lam * sum_k |a_k|

(the intercept, feature 0, is excluded from the penalty unless
``regularize_intercept``). Three solvers are available:

``exact``  m=1: cutting-plane linear program (HiGHS), optimality gap certified
           below ``tolerance``.
           m=2: L-BFGS-B on the split-sign (a+ - a-) smooth reformulation.
``prox``   proximal subgradient with a diminishing step and soft-thresholding;
           slow, kept as an independent route to the same minimum.
``adam``   mini-batch adaptive-moment updates followed by soft-thresholding,
           see :func:`train_online`.
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog, minimize

log = logging.getLogger(__name__)

DEFAULT_LAMBDA = 2e-3


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    m: int = 1
    lam: float = DEFAULT_LAMBDA
    solver: str = "exact"
    max_epochs: int = 2000
    eta0: float = 0.5
    t0: float = 100.0
    batch_size: int | None = None
    seed: int = 0
    tolerance: float = 1e-9
    prune_threshold: float = 0.01
    regularize_intercept: bool = False
    average_tail: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.m not in (1, 2):
            raise ValueError("hinge exponent m must be 1 or 2")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.prune_threshold < 0:
            raise ValueError("prune_threshold must be non-negative")
        if self.solver not in ("exact", "prox", "adam"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if not 0 <= self.average_tail < 1:
            raise ValueError("average_tail must lie in [0, 1)")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive or None (full batch)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})

    def digest(self) -> str:
        text = repr(sorted(self.to_dict().items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    basis_id: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels).astype(np.int8)
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise ValueError("dataset is empty")
        if not np.isfinite(self.features).all():
            raise ValueError("features must be finite")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels and features disagree in length")
        if not np.isin(self.labels, (-1, 1)).all():
            raise ValueError("labels must be +1 or -1")

    def require_both_classes(self):
        if not ((self.labels == 1).any() and (self.labels == -1).any()):
            raise ValueError("training requires both classes")

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(np.ascontiguousarray(self.labels).tobytes())
        return h.hexdigest()[:16]

    @classmethod
    def concat(cls, parts) -> "Dataset":
        parts = list(parts)
        return cls(np.vstack([p.features for p in parts]), np.concatenate([p.labels for p in parts]), parts[0].basis_id)


@dataclass(frozen=True)
class WitnessModel:
    """Witness coefficients over a feature basis.

    ``scale`` records the positive factor by which the raw optimizer output was
    divided during normalization (1.0 for an unnormalized model).
    """

    spec: tuple
    labels: tuple
    coefficients: np.ndarray
    basis_id: str = ""
    scale: float = 1.0
    config: dict = field(default_factory=dict)
    dataset_digest: str = ""
    p_max: float | None = None
    converged: bool = True
    final_loss: float | None = None
    loss_trace: tuple = ()

    def __post_init__(self):
        coef = np.array(self.coefficients, dtype=float)
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "spec", tuple(self.spec))
        if len(coef) != len(self.labels):
            raise ValueError("coefficient vector and basis labels differ in length")

    @property
    def support(self) -> list[str]:
        return [self.labels[i] for i in np.flatnonzero(self.coefficients)]

    @property
    def n_terms(self) -> int:
        return int(np.count_nonzero(self.coefficients))

    def terms(self) -> dict:
        return {self.labels[i]: float(self.coefficients[i]) for i in np.flatnonzero(self.coefficients)}

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features) @ self.coefficients

    def with_coefficients(self, coef, **kw) -> "WitnessModel":
        return replace(self, coefficients=np.asarray(coef, dtype=float), **kw)


def _penalty_weights(n_features: int, cfg: TrainConfig, cols=None) -> np.ndarray:
    w = np.full(n_features, cfg.lam)
    if not cfg.regularize_intercept:
        w[0] = 0.0
    return w if cols is None else w[cols]


def hinge(margins: np.ndarray, m: int) -> np.ndarray:
    return np.maximum(0.0, 1.0 - margins) ** m


def loss(a: np.ndarray, data: Dataset, cfg: TrainConfig) -> float:
    """Mean hinge^m plus the L1 penalty."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    a = np.asarray(a, dtype=float)
    if a.shape != (data.n_features,):
        raise ValueError("coefficient length does not match feature width")
    margins = data.labels * (data.features @ a)
    return float(hinge(margins, cfg.m).mean() + _penalty_weights(data.n_features, cfg) @ np.abs(a))


def soft_threshold(a: np.ndarray, thresh: np.ndarray) -> np.ndarray:
    return np.sign(a) * np.maximum(np.abs(a) - thresh, 0.0)


def _subgradient(a, X, y, m):
    margins = y * (X @ a)
    slack = np.maximum(0.0, 1.0 - margins)
    if m == 1:
        coef = (slack > 0).astype(float)
    else:
        coef = 2.0 * slack
    return -(X.T @ (coef * y)) / len(y)


# -- exact m = 1: linear program ----------------------------------------------------

_COEF_BOUND = 1e6


def _lp_direct(X, y, pen):
    """min (1/T) sum xi + pen.|a|  s.t. xi_t >= 1 - y_t x_t.a, xi >= 0, as one LP."""
    T, F = X.shape
    A = -(y[:, None] * X)
    A_ub = sp.hstack([sp.csr_matrix(A), sp.csr_matrix(-A), -sp.eye(T, format="csr")], format="csr")
    c = np.concatenate([pen, pen, np.full(T, 1.0 / T)])
    bounds = [(0, _COEF_BOUND)] * (2 * F) + [(0, None)] * T
    res = linprog(c, A_ub=A_ub, b_ub=-np.ones(T), bounds=bounds, method="highs")
    if res.status != 0:
        raise TrainingError(f"LP solver failed: {res.message}")
    return res.x[:F] - res.x[F : 2 * F]


def _solve_lp_cutting_plane(X, y, pen, init=None, groups=16, subsample=20000, max_rounds=2000, tol=1e-9):
    """Optimum of the m=1 objective to within ``tol`` in loss.

    Small problems go to a single LP. Larger ones split each class into
    ``groups`` interleaved blocks and approximate each block's summed hinge
    from below by cutting planes ``sum_{t in S}(1 - y_t x_t.a)``, where ``S``
    is the block's active set at an iterate. The master LP over the cuts is a
    lower bound on the objective, so the gap between the true block hinges and
    the master's epigraph variables certifies optimality.
    """
    T, F = X.shape
    if T <= subsample and init is None:
        return _lp_direct(X, y, pen), 1
    if init is None:
        idx = np.linspace(0, T - 1, subsample).astype(np.int64)
        a = _lp_direct(X[idx], y[idx], pen)
    else:
        a = np.asarray(init, dtype=float)
    order = np.arange(T)
    grp = np.where(y > 0, order % groups, groups + order % groups)
    G = 2 * groups
    cut_g, cut_k, cut_grp = [], [], []
    c = np.concatenate([pen, pen, np.full(G, 1.0 / T)])
    bounds = [(0, _COEF_BOUND)] * (2 * F) + [(0, None)] * G
    eta = None
    for rounds in range(1, max_rounds + 1):
        slack = 1.0 - y * (X @ a)
        active = slack > 0
        value = np.bincount(grp[active], weights=slack[active], minlength=G)
        if eta is not None and (value - eta).sum() <= tol * T:
            if np.abs(a).max() >= 0.5 * _COEF_BOUND:
                raise TrainingError("coefficients hit the LP box bound")
            return a, rounds - 1
        # per-group sums of y_t x_t over the active rows, without copying X
        rows = np.flatnonzero(active)
        S = sp.csr_matrix((y[rows], (grp[rows], rows)), shape=(G, T))
        cut_g.extend(np.asarray(S @ X))
        cut_k.extend(np.bincount(grp[rows], minlength=G).astype(float))
        cut_grp.extend(range(G))
        C = len(cut_k)
        Gm = np.array(cut_g)
        E = np.zeros((C, G))
        E[np.arange(C), cut_grp] = -1.0
        res = linprog(c, A_ub=np.hstack([-Gm, Gm, E]), b_ub=-np.array(cut_k), bounds=bounds, method="highs")
        if res.status != 0:
            raise TrainingError(f"LP solver failed: {res.message}")
        a = res.x[:F] - res.x[F : 2 * F]
        eta = res.x[2 * F :]
        log.debug("cutting-plane round %d: %d cuts, gap %.3g", rounds, C, ((value - eta).sum()) / T)
    raise TrainingError("cutting-plane LP did not settle")


# -- exact m = 2: smooth split-sign problem ---------------------------------------

def _solve_sq_hinge(X, y, pen, init=None, tol=1e-12, maxiter=20000):
    T, F = X.shape
    a0 = np.zeros(F) if init is None else np.asarray(init, dtype=float)
    z0 = np.concatenate([np.maximum(a0, 0), np.maximum(-a0, 0)])

    def fun(z):
        a = z[:F] - z[F:]
        slack = np.maximum(0.0, 1.0 - y * (X @ a))
        val = (slack**2).mean() + pen @ (z[:F] + z[F:])
        ga = -(X.T @ (2 * slack * y)) / T
        return val, np.concatenate([ga + pen, -ga + pen])

    res = minimize(fun, z0, jac=True, method="L-BFGS-B", bounds=[(0, None)] * (2 * F),
                   options={"maxiter": maxiter, "ftol": tol, "gtol": 1e-10, "maxcor": 30})
    return res.x[:F] - res.x[F:], bool(res.success), res.nit


# -- proximal subgradient ------------------------------------------------------------

def _solve_prox(X, y, pen, cfg: TrainConfig, init=None):
    """Monotone proximal subgradient: a step is only accepted if the loss does not rise."""
    F = X.shape[1]
    a = np.zeros(F) if init is None else np.asarray(init, dtype=float).copy()

    def objective(v):
        return hinge(y * (X @ v), cfg.m).mean() + pen @ np.abs(v)

    cur = objective(a)
    trace = [cur]
    converged = False
    for t in range(cfg.max_epochs):
        eta = cfg.eta0 / (1 + t / cfg.t0)
        g = _subgradient(a, X, y, cfg.m)
        for _ in range(30):
            cand = soft_threshold(a - eta * g, eta * pen)
            val = objective(cand)
            if val <= cur:
                break
            eta *= 0.5
        else:
            cand, val = a, cur
        delta = cur - val
        a, cur = cand, val
        trace.append(cur)
        if 0 <= delta < cfg.tolerance and t > 10:
            converged = True
            break
    return a, converged, trace


def _as_mask(mask, F):
    if mask is None:
        return np.arange(F)
    mask = np.asarray(mask)
    if mask.dtype == bool:
        return np.flatnonzero(mask)
    return np.unique(mask)


def train_full_batch(data: Dataset, cfg: TrainConfig, *, init=None, mask=None, basis=None) -> WitnessModel:
    """Minimize the objective on the full dataset.

    ``mask`` restricts training to a subset of feature columns (others are held at
    zero); ``init`` seeds the solver and must have full feature width.
    """
    data.require_both_classes()
    F = data.n_features
    cols = _as_mask(mask, F)
    X = data.features if len(cols) == F else data.features[:, cols]
    y = data.labels.astype(float)
    pen = _penalty_weights(F, cfg, cols)
    init_c = None if init is None else np.asarray(init, dtype=float)[cols]
    converged = True
    trace: list = []
    if cfg.solver == "exact":
        if cfg.m == 1:
            sub, _ = _solve_lp_cutting_plane(X, y, pen, init=init_c)
        else:
            sub, converged, _ = _solve_sq_hinge(X, y, pen, init=init_c)
    elif cfg.solver == "prox":
        sub, converged, trace = _solve_prox(X, y, pen, cfg, init=init_c)
    else:
        return train_online([data], cfg, init=init, mask=mask, basis=basis)
    a = np.zeros(F)
    a[cols] = sub
    final = loss(a, data, cfg)
    if not converged:
        log.warning("training did not converge within %d epochs (loss %.6g)", cfg.max_epochs, final)
    return _make_model(a, data, cfg, basis, converged=converged, final_loss=final, trace=trace)


def train_online(batches: Iterable[Dataset], cfg: TrainConfig, *, init=None, mask=None, basis=None,
                 epochs: int | None = None) -> WitnessModel:
    """Adaptive-moment (Adam) training on a sequence of batches.

    Each pass visits the batches in order; each batch is split into mini-batches
    of ``cfg.batch_size`` rows (whole batch if None). The L1 term is applied as a
    soft-threshold after every update. The step size decays as
    ``eta0 / sqrt(1 + t / t0)``. The returned coefficients are the average of
    the iterates over the last ``average_tail`` fraction of epochs (tail
    averaging damps the oscillation of subgradient steps around a kink of the
    hinge); ``average_tail=0`` returns the last iterate.
    """
    batches = list(batches)
    if not batches:
        raise ValueError("no batches supplied")
    F = batches[0].n_features
    for b in batches:
        if b.n_features != F:
            raise ValueError("batches have inconsistent feature widths")
    cols = _as_mask(mask, F)
    pen = _penalty_weights(F, cfg, cols)
    a = np.zeros(len(cols)) if init is None else np.asarray(init, dtype=float)[cols].copy()
    mom = np.zeros_like(a)
    vel = np.zeros_like(a)
    rng = np.random.default_rng(cfg.seed)
    step = 0
    trace = []
    n_epochs = cfg.max_epochs if epochs is None else epochs
    start_avg = int(n_epochs * (1 - cfg.average_tail))
    avg = np.zeros_like(a)
    n_avg = 0
    for epoch in range(n_epochs):
        for b in batches:
            X = b.features[:, cols]
            y = b.labels.astype(float)
            order = rng.permutation(len(y)) if cfg.batch_size else np.arange(len(y))
            size = cfg.batch_size or len(y)
            for lo in range(0, len(y), size):
                idx = order[lo : lo + size]
                g = _subgradient(a, X[idx], y[idx], cfg.m)
                step += 1
                mom = cfg.beta1 * mom + (1 - cfg.beta1) * g
                vel = cfg.beta2 * vel + (1 - cfg.beta2) * g * g
                mhat = mom / (1 - cfg.beta1**step)
                vhat = vel / (1 - cfg.beta2**step)
                eta = cfg.eta0 / math.sqrt(1 + step / cfg.t0)
                lr = eta / (np.sqrt(vhat) + cfg.eps)
                a = soft_threshold(a - lr * mhat, lr * pen)
        if cfg.average_tail > 0 and epoch >= start_avg:
            n_avg += 1
            avg += (a - avg) / n_avg
        full = np.zeros(F)
        full[cols] = avg if n_avg else a
        trace.append(float(np.mean([loss(full, b, cfg) for b in batches])))
    full = np.zeros(F)
    full[cols] = avg if n_avg else a
    data = batches[0] if len(batches) == 1 else Dataset.concat(batches)
    return _make_model(full, data, cfg, basis, converged=True, final_loss=trace[-1], trace=trace)


def _make_model(a, data: Dataset, cfg: TrainConfig, basis, *, converged, final_loss, trace):
    if basis is not None:
        spec = (basis.spec.d, basis.spec.n)
        labels = basis.labels
        basis_id = basis.basis_id
    else:
        spec = (0, 0)
        labels = tuple(f"f{i}" for i in range(len(a)))
        basis_id = data.basis_id
    return WitnessModel(spec, labels, a, basis_id=basis_id, config=cfg.to_dict(), dataset_digest=data.digest(),
                        converged=converged, final_loss=final_loss, loss_trace=tuple(trace))


def prune_and_normalize(model: WitnessModel, threshold: float | None = None) -> WitnessModel:
    """Zero coefficients below ``threshold * max|a|`` and rescale so max|a| = 1.

    Coefficients exactly at the threshold are pruned; the intercept is kept
    whenever it is nonzero.
    """
    if threshold is None:
        threshold = model.config.get("prune_threshold", 0.01)
    a = np.array(model.coefficients, dtype=float)
    peak = np.abs(a).max()
    if peak == 0:
        raise ValueError("cannot normalize an all-zero model")
    keep = np.abs(a) > threshold * peak
    keep[0] |= a[0] != 0
    a = np.where(keep, a / peak, 0.0)
    return model.with_coefficients(a, scale=model.scale * peak)


def fit(data: Dataset, cfg: TrainConfig, *, basis=None, init=None, mask=None) -> WitnessModel:
    """Train then prune and normalize."""
    return prune_and_normalize(train_full_batch(data, cfg, basis=basis, init=init, mask=mask), cfg.prune_threshold)
