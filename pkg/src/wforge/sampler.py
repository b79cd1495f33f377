"""Random state generators: Haar products, biseparable products, Werner mixtures and
Dirichlet-weighted (MA) mixed states.

Every generator takes a ``numpy.random.Generator``. Batch variants (``*_batch``)
return stacked arrays and are what the dataset builders use; the single-draw
functions return :class:`StateSample` objects.

Reproducibility across thread counts comes from :func:`stream`, which derives an
independent generator from ``(seed, *key)``; callers key one stream per block of
samples and never share a generator between blocks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qcore import (
    HERMITIAN_TOL,
    ParticleSpec,
    is_hermitian,
    partial_trace,
    permute_kets,
    permute_ops,
    projector,
)

PSD_FLOOR = -1e-9

# coset representatives of S3 / S2: the singleton particle ends up at position 0, 1 or 2
BISEP_PERMS = ((0, 1, 2), (1, 0, 2), (2, 1, 0))
GENERATOR_TAGS = ("haar-product", "bisep-pure", "bisep-mixed", "fullsep-mixed", "werner")


class UnsupportedSpecError(ValueError):
    pass


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the stream identified by ``(seed, *key)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *(int(k) for k in key)]))


@dataclass(frozen=True)
class DensityMatrix:
    spec: ParticleSpec
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        if mat.shape != (self.spec.dim, self.spec.dim):
            raise ValueError(f"matrix shape {mat.shape} does not match dimension {self.spec.dim}")
        object.__setattr__(self, "matrix", mat)

    def validate(self) -> "DensityMatrix":
        if not is_hermitian(self.matrix):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(self.matrix).real - 1) > HERMITIAN_TOL:
            raise ValueError("density matrix does not have unit trace")
        if np.linalg.eigvalsh(self.matrix).min() < PSD_FLOOR:
            raise ValueError("density matrix is not positive semidefinite")
        return self

    @classmethod
    def from_ket(cls, spec: ParticleSpec, psi: np.ndarray) -> "DensityMatrix":
        return cls(spec, projector(psi))

    @classmethod
    def maximally_mixed(cls, spec: ParticleSpec) -> "DensityMatrix":
        return cls(spec, np.eye(spec.dim, dtype=complex) / spec.dim)


@dataclass(frozen=True)
class StateSample:
    state: DensityMatrix
    label: int
    tag: str
    p: float | None = None
    perm: tuple | None = None

    def __post_init__(self):
        if self.label not in (1, -1):
            raise ValueError("label must be +1 or -1")
        if self.tag not in GENERATOR_TAGS:
            raise ValueError(f"unknown generator tag {self.tag!r}")
        if self.tag == "werner" and self.p is None:
            raise ValueError("werner samples carry their noise fraction")
        if self.label == -1 and self.tag != "werner":
            raise ValueError("only werner samples are labelled entangled")


@dataclass(frozen=True)
class MaConfig:
    """Symmetric Dirichlet concentration ``alpha`` over ``k`` Haar components."""

    alpha: float = 0.1
    k: int = 4

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if int(self.k) != self.k or self.k < 2:
            raise ValueError("k must be an integer >= 2")


# -- pure states ------------------------------------------------------------

def haar_pure(dim: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Haar-random unit vector(s): normalized complex Gaussian vectors."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    shape = (dim,) if size is None else (size, dim)
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


def _kron_kets(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("bi,bj->bij", a, b).reshape(a.shape[0], -1)


def fullsep_pure_batch(spec: ParticleSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """Kets of ``size`` product states, one Haar qudit per particle."""
    out = haar_pure(spec.d, rng, size)
    for _ in range(spec.n - 1):
        out = _kron_kets(out, haar_pure(spec.d, rng, size))
    return out


def _require_three(spec: ParticleSpec):
    if spec.n != 3:
        raise UnsupportedSpecError("biseparable sampling is defined for three particles")


def bisep_pure_batch(spec: ParticleSpec, rng: np.random.Generator, size: int):
    """Kets of Haar(d) x Haar(d^2) products with a uniformly random grouping.

    Returns ``(kets, perm_index)``; ``perm_index`` indexes :data:`BISEP_PERMS`.
    """
    _require_three(spec)
    kets = _kron_kets(haar_pure(spec.d, rng, size), haar_pure(spec.d**2, rng, size))
    choice = rng.integers(0, 3, size)
    for idx in (1, 2):
        sel = choice == idx
        kets[sel] = permute_kets(kets[sel], BISEP_PERMS[idx], spec.d, 3)
    return kets, choice


def sample_fully_separable_pure(spec: ParticleSpec, rng: np.random.Generator) -> StateSample:
    psi = fullsep_pure_batch(spec, rng, 1)[0]
    return StateSample(DensityMatrix.from_ket(spec, psi), 1, "haar-product")


def sample_biseparable_pure(spec: ParticleSpec, rng: np.random.Generator) -> StateSample:
    kets, choice = bisep_pure_batch(spec, rng, 1)
    perm = BISEP_PERMS[int(choice[0])]
    return StateSample(DensityMatrix.from_ket(spec, kets[0]), 1, "bisep-pure", perm=perm)


# -- Werner family ------------------------------------------------------------

def werner_matrix(target: np.ndarray, p: float) -> np.ndarray:
    """(1 - p)|psi><psi| + (p / D) I."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"noise fraction must lie in [0, 1], got {p}")
    target = np.asarray(target, dtype=complex)
    if abs(np.linalg.norm(target) - 1) > 1e-9:
        raise ValueError("target state is not normalized")
    dim = target.shape[0]
    return (1 - p) * projector(target) + (p / dim) * np.eye(dim)


def sample_werner(target: np.ndarray, p: float, spec: ParticleSpec) -> StateSample:
    if len(target) != spec.dim:
        raise ValueError("target dimension does not match spec")
    return StateSample(DensityMatrix(spec, werner_matrix(target, p)), -1, "werner", p=float(p))


# -- Dirichlet / MA ensembles -----------------------------------------------------

def dirichlet_weights(cfg: MaConfig, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Symmetric Dirichlet draw(s) from normalized Gamma(alpha, 1) variates."""
    shape = (cfg.k,) if size is None else (size, cfg.k)
    g = rng.standard_gamma(cfg.alpha, shape)
    total = g.sum(axis=-1, keepdims=True)
    # all-underflow for tiny alpha: fall back to the largest log-weight vertex
    bad = (total == 0).ravel()
    if bad.any():
        g = g.reshape(-1, cfg.k)
        total = total.reshape(-1, 1)
        g[bad] = np.eye(cfg.k)[rng.integers(0, cfg.k, bad.sum())]
        total[bad] = 1.0
        g = g.reshape(shape)
        total = total.reshape(shape[:-1] + (1,))
    return g / total


def mix_kets(weights: np.ndarray, kets: np.ndarray) -> np.ndarray:
    """sum_j w_j |psi_j><psi_j| for weights (B, K) and kets (B, K, D)."""
    return np.einsum("bk,bki,bkj->bij", weights, kets, kets.conj())


def ma_batch(dim: int, cfg: MaConfig, rng: np.random.Generator, size: int) -> np.ndarray:
    w = dirichlet_weights(cfg, rng, size)
    kets = haar_pure(dim, rng, size * cfg.k).reshape(size, cfg.k, dim)
    return mix_kets(w, kets)


def sample_ma_state(dim: int, cfg: MaConfig, rng: np.random.Generator) -> np.ndarray:
    return ma_batch(dim, cfg, rng, 1)[0]


def _kron_ops(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    B, da, _ = a.shape
    db = b.shape[1]
    return np.einsum("bij,bkl->bikjl", a, b).reshape(B, da * db, da * db)


def fullsep_mixed_batch(spec: ParticleSpec, cfg: MaConfig, rng: np.random.Generator, size: int) -> np.ndarray:
    _require_three(spec)
    out = ma_batch(spec.d, cfg, rng, size)
    for _ in range(2):
        out = _kron_ops(out, ma_batch(spec.d, cfg, rng, size))
    return out


def bisep_mixed_batch(spec: ParticleSpec, cfg: MaConfig, rng: np.random.Generator, size: int):
    """Haar or MA single particle (fair coin) times an MA pair, randomly regrouped.

    Returns ``(rhos, perm_index)``.
    """
    _require_three(spec)
    coin = rng.random(size) < 0.5
    pure_single = projector_batch(haar_pure(spec.d, rng, size))
    mixed_single = ma_batch(spec.d, cfg, rng, size)
    single = np.where(coin[:, None, None], pure_single, mixed_single)
    rhos = _kron_ops(single, ma_batch(spec.d**2, cfg, rng, size))
    choice = rng.integers(0, 3, size)
    for idx in (1, 2):
        sel = choice == idx
        rhos[sel] = permute_ops(rhos[sel], BISEP_PERMS[idx], spec.d, 3)
    return rhos, choice


def sample_mixed_fullsep(spec: ParticleSpec, cfg: MaConfig, rng: np.random.Generator) -> StateSample:
    return StateSample(DensityMatrix(spec, fullsep_mixed_batch(spec, cfg, rng, 1)[0]), 1, "fullsep-mixed")


def sample_mixed_bisep(spec: ParticleSpec, cfg: MaConfig, rng: np.random.Generator) -> StateSample:
    rhos, choice = bisep_mixed_batch(spec, cfg, rng, 1)
    return StateSample(DensityMatrix(spec, rhos[0]), 1, "bisep-mixed", perm=BISEP_PERMS[int(choice[0])])


def projector_batch(kets: np.ndarray) -> np.ndarray:
    return np.einsum("bi,bj->bij", kets, kets.conj())


# -- scalar diagnostics -------------------------------------------------------------

_YY = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))


def concurrence(rho: np.ndarray) -> float:
    """Wootters concurrence of a two-qubit density matrix."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError("concurrence is defined for two-qubit states only")
    rho_tilde = _YY @ rho.conj() @ _YY
    # eigenvalues of rho * rho_tilde are non-negative; clip roundoff
    ev = np.sqrt(np.clip(np.linalg.eigvals(rho @ rho_tilde).real, 0, None))
    ev = np.sort(ev)[::-1]
    return float(max(0.0, ev[0] - ev[1] - ev[2] - ev[3]))


def purity(rho: np.ndarray) -> float:
    rho = np.asarray(rho)
    return float(np.einsum("ij,ji->", rho, rho).real)


def purity_batch(rhos: np.ndarray) -> np.ndarray:
    return np.einsum("bij,bji->b", rhos, rhos).real


def reduced_state(rho: np.ndarray, keep, spec: ParticleSpec) -> np.ndarray:
    return partial_trace(rho, keep, [spec.d] * spec.n)
