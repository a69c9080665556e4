import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import C_NS_SAT, H_01, H_018
from wiretap_lab.errors import ValidationError
from wiretap_lab.prob import (
    Channel,
    JointPmf,
    Pmf,
    binary_convolve,
    binary_entropy,
    conditional_entropy,
    entropy,
    joint_from,
    mutual_information,
)


def bsc(p):
    return Channel([[1 - p, p], [p, 1 - p]])


class TestPmf:
    def test_rejects_negative(self):
        with pytest.raises(ValidationError):
            Pmf([1.2, -0.2])

    def test_rejects_mass_off(self):
        with pytest.raises(ValidationError):
            Pmf([0.5, 0.49])

    def test_accepts_tiny_rounding(self):
        assert Pmf([0.5, 0.5 + 1e-11]).support_size == 2

    def test_no_silent_renormalization(self):
        with pytest.raises(ValidationError):
            Pmf([2.0, 2.0])
        assert np.allclose(Pmf.normalized([2.0, 2.0]).probs, [0.5, 0.5])

    def test_immutable(self):
        p = Pmf([0.25, 0.75])
        with pytest.raises(ValueError):
            p.probs[0] = 1.0

    def test_empty(self):
        with pytest.raises(ValidationError):
            Pmf([])


class TestEntropy:
    def test_point_mass(self):
        assert entropy(Pmf([1.0, 0.0])) == 0.0

    def test_fair_bit(self):
        assert entropy(Pmf.uniform(2)) == pytest.approx(1.0, abs=1e-15)

    def test_skewed(self):
        assert entropy(Pmf([0.1, 0.9])) == pytest.approx(H_01, abs=1e-12)

    def test_invalid(self):
        with pytest.raises(ValidationError):
            entropy([0.3, 0.3])

    def test_tiny_masses_floor(self):
        assert entropy(Pmf([1 - 1e-17, 1e-17])) == 0.0


class TestBinary:
    def test_endpoints(self):
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0
        assert binary_entropy(0.5) == 1.0

    def test_reference(self):
        assert binary_entropy(0.18) == pytest.approx(H_018, abs=1e-12)

    def test_domain(self):
        for p in (-0.1, 1.5, float("nan")):
            with pytest.raises(ValidationError):
                binary_entropy(p)

    def test_convolve(self):
        assert binary_convolve(0.1, 0.1) == pytest.approx(0.18, abs=1e-15)
        assert binary_convolve(0.3, 0.0) == pytest.approx(0.3)
        assert binary_convolve(0.3, 0.5) == pytest.approx(0.5)
        with pytest.raises(ValidationError):
            binary_convolve(0.1, 2.0)

    @given(st.floats(0, 1))
    def test_symmetric(self, p):
        assert binary_entropy(p) == pytest.approx(binary_entropy(1 - p), abs=1e-12)

    @given(st.floats(0, 1))
    def test_matches_entropy(self, p):
        assert abs(binary_entropy(p) - entropy(Pmf([p, 1 - p]))) <= 1e-12

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_convolve_commutes_in_range(self, a, b):
        c = binary_convolve(a, b)
        assert c == pytest.approx(binary_convolve(b, a), abs=1e-15)
        assert -1e-15 <= c <= 1 + 1e-15


class TestJoint:
    def test_identity_channel(self):
        j = joint_from(Pmf.uniform(2), Channel.identity(2))
        assert np.allclose(j.probs, np.diag([0.5, 0.5]))

    def test_constant_output(self):
        j = joint_from(Pmf([0.2, 0.8]), Channel([[0, 1], [0, 1]]))
        assert np.allclose(j.marginal(1), [0, 1])
        assert np.allclose(j.probs, np.outer([0.2, 0.8], [0, 1]))

    def test_bsc_table(self):
        j = joint_from(Pmf.uniform(2), bsc(0.1))
        assert np.allclose(j.probs, [[0.45, 0.05], [0.05, 0.45]], atol=1e-15)
        assert np.allclose(j.marginal(0), [0.5, 0.5])

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            joint_from(Pmf.uniform(3), bsc(0.1))

    def test_named_axes_and_order(self):
        p = np.arange(1, 9, dtype=float).reshape(2, 2, 2)
        j = JointPmf(p / p.sum(), names=("a", "b", "c"))
        assert np.allclose(j.marginal(["c", "a"]), j.marginal(["a", "c"]).T)
        with pytest.raises(ValidationError):
            j.marginal("d")
        with pytest.raises(ValidationError):
            j.marginal([0, 0])


class TestInformation:
    def test_conditional_entropy_bsc(self):
        j = joint_from(Pmf.uniform(2), bsc(0.1))
        assert conditional_entropy(j, 0, 1) == pytest.approx(H_01, abs=1e-12)

    def test_function_of_given(self):
        j = joint_from(Pmf([0.3, 0.7]), Channel.identity(2))
        assert conditional_entropy(j, 1, 0) == 0.0

    def test_independent(self):
        j = JointPmf(np.outer([0.3, 0.7], [0.6, 0.4]))
        assert conditional_entropy(j, 0, 1) == pytest.approx(entropy(Pmf([0.3, 0.7])))
        assert mutual_information(j, 0, 1) == pytest.approx(0.0, abs=1e-15)

    def test_copy_of_uniform4(self):
        j = joint_from(Pmf.uniform(4), Channel.identity(4))
        assert mutual_information(j, 0, 1) == pytest.approx(2.0)

    def test_bsc_capacity(self):
        j = joint_from(Pmf.uniform(2), bsc(0.1))
        assert mutual_information(j, 0, 1) == pytest.approx(C_NS_SAT, abs=1e-12)

    def test_overlapping_axes(self):
        j = joint_from(Pmf.uniform(2), bsc(0.1))
        with pytest.raises(ValidationError):
            mutual_information(j, 0, 0)
        with pytest.raises(ValidationError):
            conditional_entropy(j, [0, 1], 1)


def joint_tables(max_axes=3):
    shapes = st.lists(st.integers(1, 3), min_size=3, max_size=max_axes)
    return shapes.flatmap(
        lambda s: arrays(np.float64, tuple(s), elements=st.floats(0, 1))
    ).filter(lambda a: a.sum() > 1e-3).map(lambda a: JointPmf(a / a.sum()))


class TestProperties:
    @settings(max_examples=150, deadline=None)
    @given(joint_tables())
    def test_nonneg_symmetric_chain(self, j):
        i_ab = mutual_information(j, 0, 1)
        assert i_ab >= 0
        assert i_ab == pytest.approx(mutual_information(j, 1, 0), abs=1e-10)
        assert j.entropy([0, 1]) == pytest.approx(
            j.entropy(0) + conditional_entropy(j, 1, 0), abs=1e-10
        )

    @settings(max_examples=150, deadline=None)
    @given(joint_tables())
    def test_conditioning_reduces_entropy(self, j):
        assert conditional_entropy(j, 0, [1, 2]) <= conditional_entropy(j, 0, 1) + 1e-10

    @settings(max_examples=150, deadline=None)
    @given(joint_tables())
    def test_conditional_mi_identity(self, j):
        lhs = mutual_information(j, 0, 1, 2)
        rhs = conditional_entropy(j, 0, 2) - conditional_entropy(j, 0, [1, 2])
        assert lhs == pytest.approx(max(0.0, rhs), abs=1e-10)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.integers(2, 4), st.integers(2, 4), st.integers(2, 4))
    def test_data_processing(self, seed, na, nb, nc):
        r = np.random.default_rng(seed)
        pa = r.dirichlet(np.ones(na))
        ab = r.dirichlet(np.ones(nb), size=na)
        bc = r.dirichlet(np.ones(nc), size=nb)
        j = JointPmf(np.einsum("a,ab,bc->abc", pa, ab, bc))
        assert mutual_information(j, 0, 2) <= mutual_information(j, 0, 1) + 1e-10
