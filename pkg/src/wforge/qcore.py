"""Dense operator algebra and generalized Pauli strings for N qudits of prime dimension d."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache, reduce

import numpy as np

HERMITIAN_TOL = 1e-10
IMAG_TOL = 1e-9
MAX_DIM = 4096


class InvalidDimensionError(ValueError):
    """Raised for non-prime local dimensions or composite dimensions that are too large."""


class LabelError(ValueError):
    """Raised when a Pauli label is illegal for the local dimension."""


def is_prime(d: int) -> bool:
    if d < 2:
        return False
    return all(d % k for k in range(2, int(d**0.5) + 1))


def _check_prime(d) -> int:
    if isinstance(d, bool) or not isinstance(d, (int, np.integer)):
        raise InvalidDimensionError(f"local dimension must be an integer, got {d!r}")
    d = int(d)
    if not is_prime(d):
        raise InvalidDimensionError(f"local dimension must be prime and >= 2, got {d}")
    return d


def is_hermitian(mat: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    mat = np.asarray(mat)
    return mat.ndim == 2 and mat.shape[0] == mat.shape[1] and np.allclose(mat, mat.conj().T, atol=tol, rtol=0)


def is_unitary(mat: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    mat = np.asarray(mat)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        return False
    return np.allclose(mat @ mat.conj().T, np.eye(mat.shape[0]), atol=tol, rtol=0)


@dataclass(frozen=True)
class ParticleSpec:
    """Local dimension ``d`` (prime) and particle count ``n``."""

    d: int
    n: int

    def __post_init__(self):
        object.__setattr__(self, "d", _check_prime(self.d))
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise InvalidDimensionError(f"particle count must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        if self.d**self.n > MAX_DIM:
            raise InvalidDimensionError(f"composite dimension {self.d}^{self.n} exceeds {MAX_DIM}")

    @property
    def dim(self) -> int:
        return self.d**self.n

    @classmethod
    def parse(cls, text: str) -> "ParticleSpec":
        """Parse ``"<d>x<n>"``, e.g. ``"2x3"`` for three qubits."""
        try:
            d, n = (int(part) for part in text.lower().split("x"))
        except ValueError as exc:
            raise InvalidDimensionError(f"cannot parse particle spec {text!r}; expected e.g. 2x3") from exc
        return cls(d, n)

    def __str__(self):
        return f"{self.d}x{self.n}"


@dataclass(frozen=True, order=True)
class PauliLabel:
    """Single-particle operator X^a Z^b (``dagger`` selects its adjoint).

    ``a == b == 0`` is the identity. For qubits (1, 1) denotes the Hermitian
    Y = i XZ; for d > 2 it denotes XZ with no phase.
    """

    a: int
    b: int
    dagger: bool = False

    @property
    def is_identity(self) -> bool:
        return self.a == 0 and self.b == 0


def legal_labels(d: int) -> list[PauliLabel]:
    """All single-particle labels for dimension ``d`` ordered by label code.

    Code order is I, X, Z, XZ, XZ^2, ..., XZ^(d-1), then the adjoints in the
    same order (for qubits: I, X, Y, Z and no adjoints).
    """
    d = _check_prime(d)
    if d == 2:
        return [PauliLabel(0, 0), PauliLabel(1, 0), PauliLabel(1, 1), PauliLabel(0, 1)]
    base = [PauliLabel(1, 0), PauliLabel(0, 1)] + [PauliLabel(1, k) for k in range(1, d)]
    return [PauliLabel(0, 0)] + base + [PauliLabel(lab.a, lab.b, True) for lab in base]


@lru_cache(maxsize=None)
def _label_codes(d: int) -> dict:
    return {lab: i for i, lab in enumerate(legal_labels(d))}


def label_code(label: PauliLabel, d: int) -> int:
    try:
        return _label_codes(d)[label]
    except KeyError:
        raise LabelError(f"{label} is not a legal label for d={d}") from None


def label_name(label: PauliLabel, d: int) -> str:
    label_code(label, d)
    if label.is_identity:
        return "I"
    if d == 2:
        return {(1, 0): "X", (1, 1): "Y", (0, 1): "Z"}[(label.a, label.b)]
    if label.b == 0:
        base = "X"
    elif label.a == 0:
        base = "Z"
    elif d == 3:
        base = {1: "Y", 2: "V"}[label.b]
    else:
        base = "XZ" if label.b == 1 else f"XZ{label.b}"
    return base + ("†" if label.dagger else "")


def parse_label(name: str, d: int) -> PauliLabel:
    """Inverse of :func:`label_name`; accepts ``+`` or ``^`` as an ASCII adjoint marker."""
    key = name.replace("+", "†").replace("^", "†")
    for lab in legal_labels(d):
        if label_name(lab, d) == key:
            return lab
    raise LabelError(f"unknown label {name!r} for d={d}")


def adjoint_label(label: PauliLabel, d: int) -> PauliLabel:
    if d == 2 or label.is_identity:
        return label
    return PauliLabel(label.a, label.b, not label.dagger)


def gen_pauli_X(d: int) -> np.ndarray:
    """Cyclic shift X|j> = |j+1 mod d>."""
    d = _check_prime(d)
    return np.roll(np.eye(d, dtype=complex), 1, axis=0)


def gen_pauli_Z(d: int) -> np.ndarray:
    """Clock matrix diag(1, w, ..., w^(d-1)) with w = exp(2 pi i / d)."""
    d = _check_prime(d)
    phases = np.exp(2j * np.pi * np.arange(d) / d)
    # snap roundoff so that e.g. the qubit clock is exactly diag(1, -1)
    phases.real[np.abs(phases.real) < 1e-15] = 0.0
    phases.imag[np.abs(phases.imag) < 1e-15] = 0.0
    return np.diag(phases)


@lru_cache(maxsize=None)
def _label_matrix(label: PauliLabel, d: int) -> np.ndarray:
    label_code(label, d)
    mat = np.linalg.matrix_power(gen_pauli_X(d), label.a) @ np.linalg.matrix_power(gen_pauli_Z(d), label.b)
    if d == 2 and label.a == 1 and label.b == 1:
        mat = 1j * mat
    if label.dagger:
        mat = mat.conj().T
    mat.setflags(write=False)
    return mat


def label_matrix(label: PauliLabel, d: int) -> np.ndarray:
    return _label_matrix(label, d).copy()


@dataclass(frozen=True)
class PauliString:
    spec: ParticleSpec
    labels: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        if len(labels) != self.spec.n:
            raise LabelError(f"expected {self.spec.n} labels, got {len(labels)}")
        for lab in labels:
            label_code(lab, self.spec.d)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_names(cls, spec: ParticleSpec, names) -> "PauliString":
        """Build from single-particle names: ``"XYY"`` for qubits, ``"X⊗Z†"`` (or ``"X,Z+"``) for qudits."""
        if isinstance(names, str):
            if spec.d == 2:
                names = list(names)
            else:
                names = names.replace(",", "⊗").split("⊗")
        return cls(spec, tuple(parse_label(nm, spec.d) for nm in names))

    @property
    def codes(self) -> tuple:
        return tuple(label_code(lab, self.spec.d) for lab in self.labels)

    @property
    def is_identity(self) -> bool:
        return all(lab.is_identity for lab in self.labels)

    def adjoint(self) -> "PauliString":
        return PauliString(self.spec, tuple(adjoint_label(lab, self.spec.d) for lab in self.labels))

    @property
    def name(self) -> str:
        names = [label_name(lab, self.spec.d) for lab in self.labels]
        if self.spec.d == 2:
            return "".join(names)
        return "⊗".join(names)

    def __str__(self):
        return self.name


def kron_all(mats) -> np.ndarray:
    return reduce(np.kron, mats)


def materialize(string: PauliString) -> np.ndarray:
    """Kronecker product of the single-particle operators, first particle most significant."""
    d = string.spec.d
    return kron_all([_label_matrix(lab, d) for lab in string.labels])


def hermitianize(string: PauliString) -> np.ndarray:
    """Return M + M^dagger for M = materialize(string)."""
    mat = materialize(string)
    return mat + mat.conj().T


def expectation(rho: np.ndarray, obs: np.ndarray) -> float:
    """Tr(rho obs) for Hermitian ``obs``; raises if the result is not real."""
    rho = np.asarray(rho)
    obs = np.asarray(obs)
    if rho.shape != obs.shape or rho.ndim != 2:
        raise ValueError(f"dimension mismatch: state {rho.shape} vs observable {obs.shape}")
    if not is_hermitian(obs):
        raise ValueError("observable is not Hermitian")
    val = np.einsum("ij,ji->", rho, obs)
    if abs(val.imag) > IMAG_TOL:
        raise ValueError(f"expectation has imaginary part {val.imag:.3g}")
    return float(val.real)


def ket(bits: str, d: int = 2) -> np.ndarray:
    """Computational basis ket, e.g. ``ket("010")``."""
    vec = np.zeros(d ** len(bits), dtype=complex)
    vec[int(bits, d)] = 1.0
    return vec


def projector(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def partial_trace(rho: np.ndarray, keep, dims) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep`` (indices into ``dims``)."""
    dims = list(dims)
    n = len(dims)
    keep = sorted(keep)
    traced = [i for i in range(n) if i not in keep]
    t = np.asarray(rho).reshape(dims + dims)
    perm = keep + traced + [n + i for i in keep] + [n + i for i in traced]
    t = t.transpose(perm)
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    dt = int(np.prod([dims[i] for i in traced])) if traced else 1
    return np.einsum("ajbj->ab", t.reshape(dk, dt, dk, dt))


def partial_transpose(rho: np.ndarray, sys: int, dims) -> np.ndarray:
    dims = list(dims)
    n = len(dims)
    t = np.asarray(rho).reshape(dims + dims)
    axes = list(range(2 * n))
    axes[sys], axes[n + sys] = axes[n + sys], axes[sys]
    return t.transpose(axes).reshape(np.asarray(rho).shape)


def permute_kets(kets: np.ndarray, perm, d: int, n: int) -> np.ndarray:
    """Relabel subsystems of kets with shape (..., d**n): output particle ``i`` is input particle ``perm[i]``."""
    kets = np.asarray(kets)
    lead = kets.shape[:-1]
    k = len(lead)
    t = kets.reshape(lead + (d,) * n)
    axes = list(range(k)) + [k + p for p in perm]
    return t.transpose(axes).reshape(kets.shape)


def permute_ops(ops: np.ndarray, perm, d: int, n: int) -> np.ndarray:
    """Operator version of :func:`permute_kets` for shape (..., D, D)."""
    ops = np.asarray(ops)
    lead = ops.shape[:-2]
    k = len(lead)
    t = ops.reshape(lead + (d,) * (2 * n))
    axes = list(range(k)) + [k + p for p in perm] + [k + n + p for p in perm]
    return t.transpose(axes).reshape(ops.shape)
