import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wforge.qcore import (
    InvalidDimensionError,
    LabelError,
    ParticleSpec,
    PauliLabel,
    PauliString,
    expectation,
    gen_pauli_X,
    gen_pauli_Z,
    hermitianize,
    is_hermitian,
    is_unitary,
    ket,
    legal_labels,
    materialize,
    parse_label,
    partial_trace,
    partial_transpose,
    permute_kets,
    permute_ops,
    projector,
)

PHI_PLUS = (ket("00") + ket("11")) / np.sqrt(2)


def test_pauli_x_qubit():
    np.testing.assert_array_equal(gen_pauli_X(2), [[0, 1], [1, 0]])


def test_pauli_x_qutrit_rows():
    np.testing.assert_array_equal(gen_pauli_X(3).real, [[0, 0, 1], [1, 0, 0], [0, 1, 0]])


@pytest.mark.parametrize("d", [2, 3, 5, 7])
def test_shift_and_clock_have_order_d(d):
    X, Z = gen_pauli_X(d), gen_pauli_Z(d)
    np.testing.assert_allclose(np.linalg.matrix_power(X, d), np.eye(d), atol=1e-12)
    np.testing.assert_allclose(np.linalg.matrix_power(Z, d), np.eye(d), atol=1e-12)
    assert is_unitary(X) and is_unitary(Z)


def test_clock_values():
    np.testing.assert_allclose(gen_pauli_Z(2), np.diag([1, -1]), atol=1e-15)
    w = np.exp(2j * np.pi / 3)
    np.testing.assert_allclose(np.diag(gen_pauli_Z(3)), [1, w, w**2], atol=1e-15)
    assert abs(np.trace(gen_pauli_Z(3))) < 1e-12


@pytest.mark.parametrize("d", [2, 3, 5])
def test_weyl_commutation(d):
    # with X|j> = |j+1> and Z|j> = w^j |j>:  Z X = w X Z
    X, Z = gen_pauli_X(d), gen_pauli_Z(d)
    w = np.exp(2j * np.pi / d)
    np.testing.assert_allclose(Z @ X, w * X @ Z, atol=1e-12)


@pytest.mark.parametrize("d", [0, 1, 4, 6, 9, 2.0, True])
def test_rejects_non_prime(d):
    with pytest.raises(InvalidDimensionError):
        gen_pauli_X(d)
    with pytest.raises(InvalidDimensionError):
        ParticleSpec(d, 1)


def test_rejects_oversized_composite():
    with pytest.raises(InvalidDimensionError):
        ParticleSpec(2, 13)
    assert ParticleSpec(2, 12).dim == 4096


def test_spec_parse_round_trip():
    spec = ParticleSpec.parse("3x2")
    assert (spec.d, spec.n, spec.dim) == (3, 2, 9)
    assert str(spec) == "3x2"
    with pytest.raises(InvalidDimensionError):
        ParticleSpec.parse("three")


def test_label_sets():
    assert len(legal_labels(2)) == 4
    for d in (3, 5, 7):
        labs = legal_labels(d)
        assert len(labs) == 2 * (d + 1) + 1
        assert len(set(labs)) == len(labs)
    assert not any(lab.dagger for lab in legal_labels(2))


def test_qubit_dagger_forbidden():
    with pytest.raises(LabelError):
        PauliString(ParticleSpec(2, 1), (PauliLabel(1, 0, True),))


def test_qutrit_display_names():
    spec = ParticleSpec(3, 1)
    names = [PauliString(spec, (lab,)).name for lab in legal_labels(3)]
    assert names == ["I", "X", "Z", "Y", "V", "X†", "Z†", "Y†", "V†"]
    assert parse_label("V^", 3) == PauliLabel(1, 2, True)


def test_materialize_examples():
    zz = materialize(PauliString.from_names(ParticleSpec(2, 2), "ZZ"))
    np.testing.assert_array_equal(zz, np.diag([1, -1, -1, 1]))
    y = materialize(PauliString.from_names(ParticleSpec(2, 1), "Y"))
    np.testing.assert_allclose(y, [[0, -1j], [1j, 0]])
    xz = materialize(PauliString.from_names(ParticleSpec(3, 2), "X⊗Z"))
    assert xz.shape == (9, 9)
    assert abs(np.trace(xz)) < 1e-12


def test_wrong_length_string():
    with pytest.raises(LabelError):
        PauliString.from_names(ParticleSpec(2, 2), "XYZ")


def test_hermitianize_examples():
    for spec in (ParticleSpec(2, 2), ParticleSpec(3, 2)):
        ident = PauliString(spec, (PauliLabel(0, 0),) * spec.n)
        np.testing.assert_allclose(hermitianize(ident), 2 * np.eye(spec.dim))
    xx = PauliString.from_names(ParticleSpec(2, 2), "XX")
    np.testing.assert_allclose(hermitianize(xx), 2 * materialize(xx))
    q = PauliString.from_names(ParticleSpec(3, 2), "X⊗X")
    X = gen_pauli_X(3)
    expected = np.kron(X, X) + np.kron(X.conj().T, X.conj().T)
    h = hermitianize(q)
    np.testing.assert_allclose(h, expected, atol=1e-14)
    assert is_hermitian(h) and abs(np.trace(h)) < 1e-12


def _all_strings(spec):
    for combo in itertools.product(legal_labels(spec.d), repeat=spec.n):
        yield PauliString(spec, combo)


@pytest.mark.parametrize("spec", [ParticleSpec(2, 2), ParticleSpec(3, 2), ParticleSpec(2, 3), ParticleSpec(5, 1)])
def test_every_string_unitary_and_traceless(spec):
    for s in _all_strings(spec):
        m = materialize(s)
        assert is_unitary(m)
        if not s.is_identity:
            assert abs(np.trace(m)) < 1e-9
        h = hermitianize(s)
        assert np.abs(h - h.conj().T).max() < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([2, 3]), st.data())
def test_kron_associativity(d, data):
    labs = legal_labels(d)
    picks = [data.draw(st.sampled_from(labs)) for _ in range(3)]
    s = PauliString(ParticleSpec(d, 3), tuple(picks))
    singles = [materialize(PauliString(ParticleSpec(d, 1), (p,))) for p in picks]
    np.testing.assert_array_equal(materialize(s), np.kron(np.kron(singles[0], singles[1]), singles[2]))


def test_expectation_examples():
    spec = ParticleSpec(2, 2)
    xx = materialize(PauliString.from_names(spec, "XX"))
    zz = materialize(PauliString.from_names(spec, "ZZ"))
    yy = materialize(PauliString.from_names(spec, "YY"))
    assert expectation(np.eye(4) / 4, xx) == pytest.approx(0, abs=1e-15)
    rho = projector(PHI_PLUS)
    assert expectation(rho, zz) == pytest.approx(1)
    assert expectation(rho, yy) == pytest.approx(-1)


def test_expectation_errors():
    with pytest.raises(ValueError):
        expectation(np.eye(4) / 4, np.eye(2))
    with pytest.raises(ValueError):
        expectation(np.eye(2) / 2, np.array([[0, 1], [0, 0]]))


def test_partial_trace_and_transpose_of_bell():
    rho = projector(PHI_PLUS)
    np.testing.assert_allclose(partial_trace(rho, [0], [2, 2]), np.eye(2) / 2, atol=1e-15)
    ev = np.linalg.eigvalsh(partial_transpose(rho, 1, [2, 2]))
    assert ev.min() == pytest.approx(-0.5)


def test_permutations_consistent():
    rng = np.random.default_rng(0)
    psi = rng.standard_normal(27) + 1j * rng.standard_normal(27)
    for perm in [(1, 0, 2), (2, 1, 0), (1, 2, 0)]:
        out = permute_kets(psi, perm, 3, 3)
        np.testing.assert_allclose(permute_ops(projector(psi), perm, 3, 3), projector(out), atol=1e-12)
    a, b, c = ket("0"), ket("1"), (ket("0") + ket("1")) / np.sqrt(2)
    swapped = permute_kets(np.kron(np.kron(a, b), c), (2, 1, 0), 2, 3)
    np.testing.assert_allclose(swapped, np.kron(np.kron(c, b), a))
