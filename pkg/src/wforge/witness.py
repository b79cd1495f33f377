"""Witness analysis: operator assembly, white-noise tolerance, the fidelity-method
baseline, separable-set calibration and recursive feature elimination."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize

from .featurize import FeatureBasis, SpecMismatchError, build_basis, featurize
from .qcore import ParticleSpec, is_hermitian, projector
from .trainer import Dataset, TrainConfig, WitnessModel, prune_and_normalize, train_full_batch

log = logging.getLogger(__name__)

TIE_TOL = 1e-12
TERM_TOL = 1e-9
CALIBRATION_MARGIN = 1e-9


class DetectionError(ValueError):
    """The witness does not report its target as entangled."""


@lru_cache(maxsize=16)
def _cached_basis(d: int, n: int) -> FeatureBasis:
    return build_basis(ParticleSpec(d, n))


def basis_for(model: WitnessModel) -> FeatureBasis:
    basis = _cached_basis(*model.spec)
    if tuple(basis.labels) != tuple(model.labels):
        raise SpecMismatchError("model labels do not match the canonical basis for its spec")
    return basis


def assemble(model: WitnessModel) -> np.ndarray:
    """Witness operator sum_k a_k O_k."""
    basis = basis_for(model)
    return np.einsum("k,kij->ij", model.coefficients, basis.observables)


def _affine_ends(model: WitnessModel, target: np.ndarray):
    """Expectation on the pure target and on the maximally mixed state."""
    W = assemble(model)
    target = np.asarray(target, dtype=complex)
    if target.shape != (W.shape[0],):
        raise SpecMismatchError("target dimension does not match the witness")
    t = float(np.real(target.conj() @ W @ target))
    mixed = float(np.trace(W).real) / W.shape[0]
    return t, mixed


def expectation_curve(model: WitnessModel, target: np.ndarray, p) -> np.ndarray:
    """Closed form E(p) = (1 - p) t + p Tr(W)/D on white-noise mixtures of ``target``."""
    t, mixed = _affine_ends(model, target)
    p = np.asarray(p, dtype=float)
    return (1 - p) * t + p * mixed


def noise_tolerance(model: WitnessModel, target: np.ndarray) -> float:
    """Largest white-noise fraction at which the witness still detects ``target``.

    Returns ``inf`` when the expectation stays negative up to p = 1.
    """
    t, mixed = _affine_ends(model, target)
    if t >= 0:
        raise DetectionError(f"witness does not detect the target (<W> = {t:.4g})")
    if mixed < 0:
        return math.inf
    return t / (t - mixed)


def classify(model: WitnessModel, rho) -> tuple[str, float]:
    """Side of the hyperplane and the margin value y = sum_k a_k x_k."""
    basis = basis_for(model)
    y = float(featurize(rho, basis) @ model.coefficients)
    side = "separable" if y >= 0 or abs(y) < TIE_TOL else "entangled"
    return side, y


@dataclass(frozen=True)
class FidelityWitness:
    """c I - |psi><psi|."""

    target: np.ndarray
    c: float
    spec: ParticleSpec

    def __post_init__(self):
        if not 0 < self.c < 1:
            raise ValueError("fidelity constant must lie in (0, 1)")
        if len(self.target) != self.spec.dim:
            raise SpecMismatchError("target dimension does not match spec")

    @property
    def matrix(self) -> np.ndarray:
        return self.c * np.eye(self.spec.dim) - projector(self.target)

    def expectation(self, p):
        p = np.asarray(p, dtype=float)
        return self.c - (1 - p) - p / self.spec.dim

    def zero_crossing(self) -> float:
        D = self.spec.dim
        return (1 - self.c) / (1 - 1 / D)


# c = 2/3 is the largest W-state overlap attainable by biseparable states
W_FIDELITY_C = 2.0 / 3.0


def fidelity_witness(target: np.ndarray, c: float, spec: ParticleSpec | None = None) -> FidelityWitness:
    target = np.asarray(target, dtype=complex)
    if spec is None:
        n = round(math.log2(len(target)))
        spec = ParticleSpec(2, n)
    return FidelityWitness(target, float(c), spec)


def pauli_coefficients(obs: np.ndarray, basis: FeatureBasis) -> np.ndarray:
    """|Tr(O_k obs)| / D for every basis observable."""
    obs = np.asarray(obs)
    if not is_hermitian(obs):
        raise ValueError("observable is not Hermitian")
    return np.abs(np.einsum("kij,ji->k", basis.observables, obs)) / basis.spec.dim


def pauli_term_count(obs: np.ndarray, basis: FeatureBasis) -> int:
    return int((pauli_coefficients(obs, basis) > TERM_TOL).sum())


# -- separable-set minimum ------------------------------------------------------------

def _cut_tensor(W: np.ndarray, d: int, n: int, k: int) -> np.ndarray:
    """Reshape W to (d, D/d, d, D/d) with particle ``k`` split off first."""
    perm = [k] + [i for i in range(n) if i != k]
    t = W.reshape([d] * (2 * n)).transpose(perm + [n + i for i in perm])
    rest = d ** (n - 1)
    return t.reshape(d, rest, d, rest)


def _cut_minimum(t: np.ndarray, d: int, rng: np.random.Generator, n_starts: int, n_refine: int):
    def lowest(vecs):
        vecs = vecs / np.linalg.norm(vecs, axis=-1, keepdims=True)
        reduced = np.einsum("bi,iajc,bj->bac", vecs.conj(), t, vecs)
        return np.linalg.eigvalsh(reduced)[:, 0]

    starts = rng.standard_normal((n_starts, d)) + 1j * rng.standard_normal((n_starts, d))
    vals = lowest(starts)
    best_val = float(vals.min())
    best_vec = starts[int(vals.argmin())]
    for i in np.argsort(vals)[:n_refine]:
        x0 = np.concatenate([starts[i].real, starts[i].imag])
        res = minimize(lambda x: lowest((x[:d] + 1j * x[d:])[None])[0], x0, method="Nelder-Mead",
                       options={"xatol": 1e-11, "fatol": 1e-14, "maxiter": 20000, "maxfev": 20000})
        if res.fun < best_val:
            best_val = float(res.fun)
            best_vec = res.x[:d] + 1j * res.x[d:]
    return best_val, best_vec / np.linalg.norm(best_vec)


def separable_minimum(W: np.ndarray, spec: ParticleSpec, seed: int = 0, n_starts: int = 4000,
                      n_refine: int = 8) -> float:
    """Minimum of <W> over the pure separable-side training class.

    Two particles: product states. Three particles: biseparable states (every
    single-particle cut), which contain the fully separable ones. For a fixed
    single-particle state the minimum over the complementary pure state is the
    lowest eigenvalue of the reduced operator, so only the single-particle state
    is searched (random starts, then Nelder-Mead polishing). The result is a
    numerical upper bound on the true minimum, tight to optimizer precision.
    """
    W = np.asarray(W)
    if spec.n == 1:
        return float(np.linalg.eigvalsh(W)[0])
    if spec.n > 3:
        raise NotImplementedError("separable minimum is implemented for up to three particles")
    rng = np.random.default_rng(seed)
    cuts = range(1) if spec.n == 2 else range(3)
    return min(_cut_minimum(_cut_tensor(W, spec.d, spec.n, k), spec.d, rng, n_starts, n_refine)[0] for k in cuts)


def calibrate(model: WitnessModel, *, reference: str = "exact", separable_features: np.ndarray | None = None,
              seed: int = 0) -> WitnessModel:
    """Raise the intercept just enough that no separable-side state has y < 0, then renormalize.

    ``reference="exact"`` uses :func:`separable_minimum`; ``"training"`` uses the
    minimum over ``separable_features`` rows; ``"none"`` returns the model as is.
    The intercept is never lowered.
    """
    if reference == "none":
        return model
    if reference == "exact":
        low = separable_minimum(assemble(model), ParticleSpec(*model.spec), seed=seed)
    elif reference == "training":
        if separable_features is None:
            raise ValueError("training calibration needs the separable feature rows")
        low = float((separable_features @ model.coefficients).min())
    else:
        raise ValueError(f"unknown calibration reference {reference!r}")
    # for qudits the intercept observable is 2 I, so y shifts by 2 per unit of a_0
    unit = 1.0 if model.spec[0] == 2 else 2.0
    shift = max(0.0, CALIBRATION_MARGIN - low) / unit
    a = np.array(model.coefficients)
    a[0] += shift
    peak = np.abs(a).max()
    return model.with_coefficients(a / peak, scale=model.scale * peak)


def with_tolerance(model: WitnessModel, target: np.ndarray) -> WitnessModel:
    try:
        p = noise_tolerance(model, target)
    except DetectionError:
        p = None
    return model.with_coefficients(model.coefficients, p_max=p)


def derive(data: Dataset, cfg: TrainConfig, basis: FeatureBasis, target: np.ndarray, *,
           calibration: str = "exact", init=None, mask=None, seed: int = 0) -> tuple[WitnessModel, WitnessModel]:
    """Train, prune/normalize, calibrate and attach the noise tolerance.

    Returns ``(witness, raw)`` where ``raw`` is the unpruned optimizer output.
    """
    raw = train_full_batch(data, cfg, basis=basis, init=init, mask=mask)
    model = prune_and_normalize(raw, cfg.prune_threshold)
    sep = data.features[data.labels == 1] if calibration == "training" else None
    model = calibrate(model, reference=calibration, separable_features=sep, seed=seed)
    return with_tolerance(model, target), raw


# -- recursive feature elimination -------------------------------------------------------

@dataclass(frozen=True)
class RfeStep:
    removed: str | None
    model: WitnessModel
    p_max: float | None
    misclassified: int

    @property
    def n_terms(self) -> int:
        return self.model.n_terms

    @property
    def labels(self) -> list[str]:
        return self.model.support

    def to_dict(self) -> dict:
        return {
            "n_terms": self.n_terms,
            "removed": self.removed,
            "retained": self.labels,
            "coefficients": [float(self.model.coefficients[self.model.labels.index(l)]) for l in self.labels],
            "p_max": self.p_max,
            "misclassified": self.misclassified,
        }


@dataclass(frozen=True)
class RfeTrace:
    initial: RfeStep
    steps: tuple = ()
    stop_reason: str = "target count"

    def counts(self) -> list[int]:
        return [self.initial.n_terms] + [s.n_terms for s in self.steps]

    def at(self, n_terms: int) -> RfeStep | None:
        for s in (self.initial, *self.steps):
            if s.n_terms == n_terms:
                return s
        return None


STOP_TARGET = "target count"
STOP_FLOOR = "p_max floor"
STOP_INFEASIBLE = "infeasible"


def _misclassified(model: WitnessModel, sep_rows: np.ndarray) -> int:
    return int(((sep_rows @ model.coefficients) < -TIE_TOL).sum())


def rfe(data: Dataset, cfg: TrainConfig, basis: FeatureBasis, target: np.ndarray, *,
        min_terms: int | None = None, p_floor: float | None = None, calibration: str = "exact",
        initial: WitnessModel | None = None, initial_raw: WitnessModel | None = None, seed: int = 0) -> RfeTrace:
    """Greedy backward elimination ranked by noise tolerance.

    Each round retrains once per retained non-identity feature with that feature
    masked out, and keeps the candidate with the highest p_max (ties: the
    feature with the smaller current |coefficient|, then label order). The loop
    stops at ``min_terms``, when p_max would fall below ``p_floor``, or when
    every candidate misclassifies a training separable state or loses the
    target.
    """
    sep_rows = data.features[data.labels == 1]
    if initial is None:
        initial, initial_raw = derive(data, cfg, basis, target, calibration=calibration, seed=seed)
    if initial.p_max is None:
        raise DetectionError("initial witness does not detect the target")
    start = RfeStep(None, initial, initial.p_max, _misclassified(initial, sep_rows))
    if start.misclassified:
        raise DetectionError("initial witness misclassifies training separable states")
    if min_terms is not None and initial.n_terms <= min_terms:
        return RfeTrace(start, (), STOP_TARGET)
    if p_floor is not None and initial.p_max < p_floor:
        return RfeTrace(start, (), STOP_FLOOR)
    steps = []
    current = initial
    warm = None if initial_raw is None else initial_raw.coefficients
    reason = STOP_INFEASIBLE
    while True:
        retained = [int(i) for i in np.flatnonzero(current.coefficients)]
        candidates = []
        for k in retained:
            if k == 0:
                continue
            mask = [i for i in retained if i != k]
            model, raw = derive(data, cfg, basis, target, calibration=calibration, mask=mask, init=warm, seed=seed)
            bad = _misclassified(model, sep_rows)
            p = model.p_max if (model.p_max is not None and bad == 0) else None
            candidates.append((k, model, raw, p, bad))
        feasible = [c for c in candidates if c[3] is not None]
        if not feasible:
            reason = STOP_INFEASIBLE
            break
        cur_abs = np.abs(current.coefficients)
        k, model, raw, p, bad = max(feasible, key=lambda c: (c[3], -cur_abs[c[0]], [-ord(ch) for ch in basis.labels[c[0]]]))
        if p_floor is not None and p < p_floor:
            reason = STOP_FLOOR
            break
        steps.append(RfeStep(basis.labels[k], model, p, bad))
        log.info("rfe: removed %s -> %d terms, p_max %.4f", basis.labels[k], model.n_terms, p)
        current = model
        warm = raw.coefficients
        if min_terms is not None and model.n_terms <= min_terms:
            reason = STOP_TARGET
            break
        if model.n_terms <= 1:
            reason = STOP_INFEASIBLE
            break
    return RfeTrace(start, tuple(steps), reason)
