import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wforge.featurize import (
    SpecMismatchError,
    build_basis,
    expected_basis_size,
    featurize,
    featurize_kets,
    featurize_rhos,
    reconstruct,
)
from wforge.qcore import ParticleSpec, PauliString, ket, legal_labels, materialize, projector
from wforge.sampler import DensityMatrix, haar_pure, werner_matrix


def _pair_count_oracle(d, n):
    """Enumerate every string and count distinct {s, s^dagger} classes directly on matrices."""
    spec = ParticleSpec(d, n)
    seen = []
    for combo in itertools.product(legal_labels(d), repeat=n):
        m = materialize(PauliString(spec, combo))
        if not any(np.allclose(m, o) or np.allclose(m, o.conj().T) for o in seen):
            seen.append(m)
    return len(seen)


@pytest.mark.parametrize("d, n, size", [(2, 1, 4), (2, 2, 16), (2, 3, 64), (3, 1, 5), (3, 2, 41), (5, 1, 7)])
def test_basis_sizes(d, n, size):
    basis = build_basis(ParticleSpec(d, n))
    assert len(basis) == size == expected_basis_size(ParticleSpec(d, n))
    assert basis.strings[0].is_identity


def test_qutrit_pair_count_matches_enumeration_oracle():
    assert _pair_count_oracle(3, 2) == 41


def test_basis_has_no_conjugate_pairs():
    basis = build_basis(ParticleSpec(3, 2))
    codes = {s.codes for s in basis.strings}
    for s in basis.strings:
        adj = s.adjoint()
        if adj.codes != s.codes:
            assert adj.codes not in codes
            assert s.codes < adj.codes


def test_qubit_basis_has_no_daggers_and_ordering():
    basis = build_basis(ParticleSpec(2, 2))
    assert basis.labels[:5] == ["II", "IX", "IY", "IZ", "XI"]
    assert all("†" not in lab for lab in basis.labels)


def test_basis_is_deterministic():
    a, b = build_basis(ParticleSpec(3, 2)), build_basis(ParticleSpec(3, 2))
    assert a.labels == b.labels and a.basis_id == b.basis_id
    assert a.index("X⊗X†") == a.index("X†⊗X")


def test_oversized_spec_rejected():
    with pytest.raises(ValueError):
        build_basis(ParticleSpec(3, 8))


def test_maximally_mixed_features():
    basis = build_basis(ParticleSpec(2, 2))
    x = featurize(np.eye(4) / 4, basis)
    assert x[0] == 1 and np.abs(x[1:]).max() < 1e-15
    q = build_basis(ParticleSpec(3, 2))
    xq = featurize(np.eye(9) / 9, q)
    assert xq[0] == pytest.approx(2) and np.abs(xq[1:]).max() < 1e-12


def test_bell_features():
    basis = build_basis(ParticleSpec(2, 2))
    phi = (ket("00") + ket("11")) / np.sqrt(2)
    x = featurize(DensityMatrix.from_ket(ParticleSpec(2, 2), phi), basis)
    nz = {basis.labels[i]: round(v, 12) for i, v in enumerate(x) if abs(v) > 1e-12}
    assert nz == {"II": 1, "XX": 1, "YY": -1, "ZZ": 1}


def test_ghz_stabilizer_features():
    basis = build_basis(ParticleSpec(2, 3))
    ghz = (ket("000") + ket("111")) / np.sqrt(2)
    x = featurize(projector(ghz), basis)
    assert x[basis.index("XXX")] == pytest.approx(1)
    for lab in ("XYY", "YXY", "YYX"):
        assert x[basis.index(lab)] == pytest.approx(-1)


def test_spec_mismatch():
    basis = build_basis(ParticleSpec(2, 2))
    with pytest.raises(SpecMismatchError):
        featurize(np.eye(8) / 8, basis)
    with pytest.raises(SpecMismatchError):
        featurize(DensityMatrix.maximally_mixed(ParticleSpec(2, 3)), basis)
    with pytest.raises(SpecMismatchError):
        featurize_rhos(np.eye(9)[None] / 9, basis)


@pytest.mark.parametrize("spec", [ParticleSpec(2, 2), ParticleSpec(3, 2), ParticleSpec(2, 3)])
def test_batch_paths_agree_with_single(spec):
    basis = build_basis(spec)
    kets = haar_pure(spec.dim, np.random.default_rng(0), 20)
    a = featurize_kets(kets, basis, block=7)
    b = np.stack([featurize(projector(k), basis) for k in kets])
    np.testing.assert_allclose(a, b, atol=1e-12)
    assert np.abs(a).max() <= (1 if spec.d == 2 else 2) + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.integers(0, 10**6))
def test_linearity(alpha, seed):
    basis = build_basis(ParticleSpec(3, 2))
    k = haar_pure(9, np.random.default_rng(seed), 2)
    r1, r2 = projector(k[0]), projector(k[1])
    lhs = featurize(alpha * r1 + (1 - alpha) * r2, basis)
    rhs = alpha * featurize(r1, basis) + (1 - alpha) * featurize(r2, basis)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1))
def test_werner_features_affine_in_p(p):
    basis = build_basis(ParticleSpec(2, 3))
    w = (ket("001") + ket("010") + ket("100")) / np.sqrt(3)
    lhs = featurize(werner_matrix(w, p), basis)
    rhs = (1 - p) * featurize(projector(w), basis) + p * featurize(np.eye(8) / 8, basis)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_qubit_reconstruction(n):
    spec = ParticleSpec(2, n)
    basis = build_basis(spec)
    rng = np.random.default_rng(n)
    for _ in range(100):
        k = haar_pure(spec.dim, rng, 3)
        w = rng.dirichlet(np.ones(3))
        rho = sum(wi * projector(ki) for wi, ki in zip(w, k))
        np.testing.assert_allclose(reconstruct(featurize(rho, basis), basis), rho, atol=1e-9)


def test_reconstruct_rejects_qudits():
    with pytest.raises(ValueError):
        reconstruct(np.zeros(41), build_basis(ParticleSpec(3, 2)))


def test_non_hermitian_state_rejected():
    basis = build_basis(ParticleSpec(2, 1))
    with pytest.raises(ValueError):
        featurize(np.array([[0.5, 1.0], [0.0, 0.5]]), basis)
