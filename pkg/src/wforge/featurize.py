"""Feature basis enumeration and state -> feature-vector maps."""
from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field

import numpy as np

from .qcore import (
    IMAG_TOL,
    ParticleSpec,
    PauliString,
    hermitianize,
    legal_labels,
    materialize,
)


class SpecMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FeatureBasis:
    """Ordered Pauli strings and their cached Hermitian observables.

    For qubits the observable is the Pauli string itself; for d > 2 it is the
    hermitianized string M + M^dagger, one entry per {s, s^dagger} pair.
    Index 0 is always the all-identity string.
    """

    spec: ParticleSpec
    strings: tuple
    observables: np.ndarray = field(repr=False)
    _gemm: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.strings)

    @property
    def labels(self) -> list[str]:
        return [s.name for s in self.strings]

    @property
    def basis_id(self) -> str:
        text = f"{self.spec}|" + "|".join(self.labels)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def index(self, name) -> int:
        if not isinstance(name, str):
            name = PauliString(self.spec, tuple(name)).name
        try:
            return self.labels.index(name)
        except ValueError:
            # qudit strings may be addressed through either member of the pair
            alt = PauliString.from_names(self.spec, name).adjoint().name
            if alt in self.labels:
                return self.labels.index(alt)
            raise KeyError(f"{name!r} is not in the basis") from None

    def subset(self, indices) -> "FeatureBasis":
        indices = list(indices)
        return _make_basis(self.spec, tuple(self.strings[i] for i in indices), self.observables[indices])


def _make_basis(spec: ParticleSpec, strings: tuple, observables: np.ndarray) -> FeatureBasis:
    K, D, _ = observables.shape
    # Tr(rho O) = sum_ij rho_ij O_ji; split into real GEMM over [Re rho, Im rho]
    ot = observables.transpose(0, 2, 1).reshape(K, D * D)
    gemm = np.concatenate([ot.real.T, -ot.imag.T], axis=0)
    observables.setflags(write=False)
    gemm.setflags(write=False)
    return FeatureBasis(spec, strings, observables, np.ascontiguousarray(gemm))


def build_basis(spec: ParticleSpec) -> FeatureBasis:
    """Canonical feature basis: lexicographic in label codes, one entry per adjoint pair."""
    labels = legal_labels(spec.d)
    strings = []
    for combo in itertools.product(labels, repeat=spec.n):
        s = PauliString(spec, combo)
        if spec.d > 2:
            adj = s.adjoint()
            if adj.codes < s.codes:
                continue
        strings.append(s)
    if spec.d == 2:
        obs = np.stack([materialize(s) for s in strings])
    else:
        obs = np.stack([hermitianize(s) for s in strings])
    return _make_basis(spec, tuple(strings), obs)


def expected_basis_size(spec: ParticleSpec) -> int:
    if spec.d == 2:
        return 4**spec.n
    return ((2 * (spec.d + 1) + 1) ** spec.n - 1) // 2 + 1


def featurize_rhos(rhos: np.ndarray, basis: FeatureBasis) -> np.ndarray:
    """Feature rows Tr(rho O_k) for density matrices of shape (B, D, D) or (D, D)."""
    rhos = np.asarray(rhos)
    single = rhos.ndim == 2
    if single:
        rhos = rhos[None]
    D = basis.spec.dim
    if rhos.shape[1:] != (D, D):
        raise SpecMismatchError(f"state dimension {rhos.shape[1:]} does not match basis spec {basis.spec}")
    flat = rhos.reshape(rhos.shape[0], D * D)
    out = np.concatenate([flat.real, flat.imag], axis=1) @ basis._gemm
    return out[0] if single else out


def featurize_kets(kets: np.ndarray, basis: FeatureBasis, block: int = 8192) -> np.ndarray:
    """Feature rows <psi|O_k|psi> for kets of shape (B, D)."""
    kets = np.asarray(kets)
    out = np.empty((kets.shape[0], len(basis)))
    for lo in range(0, kets.shape[0], block):
        k = kets[lo : lo + block]
        out[lo : lo + block] = featurize_rhos(np.einsum("bi,bj->bij", k, k.conj()), basis)
    return out


def featurize(rho, basis: FeatureBasis) -> np.ndarray:
    """Feature vector of one state (a :class:`DensityMatrix` or a raw matrix).

    Checks the imaginary residue against the expectation tolerance.
    """
    spec = getattr(rho, "spec", None)
    if spec is not None and spec != basis.spec:
        raise SpecMismatchError(f"state spec {spec} does not match basis spec {basis.spec}")
    mat = np.asarray(getattr(rho, "matrix", rho), dtype=complex)
    if mat.shape != (basis.spec.dim, basis.spec.dim):
        raise SpecMismatchError("state dimension does not match basis")
    vals = np.einsum("ij,kji->k", mat, basis.observables)
    if np.abs(vals.imag).max() > IMAG_TOL:
        raise ValueError("non-real feature values; state is not Hermitian")
    return vals.real


def reconstruct(values: np.ndarray, basis: FeatureBasis) -> np.ndarray:
    """Invert qubit featurization: rho = sum_k x_k P_k / 2^n."""
    if basis.spec.d != 2:
        raise ValueError("reconstruction is implemented for qubit bases")
    return np.einsum("k,kij->ij", values, basis.observables) / basis.spec.dim
