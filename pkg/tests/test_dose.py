import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from antifragility import (
    AffineFamily,
    DipFamily,
    SystemModel,
    TabulatedFamily,
    dump_model,
    flux_decompose,
    load_model,
    matrix_at,
)
from antifragility.errors import DoseOutOfDomain, ModelValidationError, NotMetzlerAtDose, ParseError
from oracles import inf_norm

DIP_FILE = """{
  "n": 2,
  "family": {"type": "dip", "a": 100.0, "b": 1.0, "d": -1.0, "k": 1.0},
  "c": [1.0, 1.0],
  "x0": [1.0, 1.0],
  "dose_domain": [0.0, 5.0]
}"""


def _model_json(**over):
    obj = json.loads(DIP_FILE)
    obj.update(over)
    return json.dumps(obj)


class TestMatrixAt:
    def test_dip_matches_closed_matrix(self):
        fam = DipFamily(a=1, b=1, d=-1, k=1)
        np.testing.assert_array_equal(matrix_at(fam, 1.0).entries, [[0, 1], [1, -2]])

    def test_affine_constant(self):
        A0 = np.array([[-1.0, 0.5], [0.2, -0.3]])
        fam = AffineFamily(A0, np.zeros((2, 2)), (0, 3))
        for u in (0.0, 1.3, 3.0):
            np.testing.assert_array_equal(fam.matrix_at(u).entries, A0)

    def test_tabulated_hits_table(self):
        mats = [np.array([[-1.0, 1.0], [1.0, -1.0]]) * s for s in (1, 2, 3)]
        fam = TabulatedFamily([0.0, 0.5, 2.0], mats)
        for u, M in zip((0.0, 0.5, 2.0), mats):
            np.testing.assert_array_equal(fam.matrix_at(u).entries, M)
        np.testing.assert_allclose(fam.matrix_at(1.25).entries, 2.5 * mats[0])

    def test_out_of_domain(self):
        fam = DipFamily(a=1, b=1, d=-1, k=1, dose_domain=(0, 2))
        with pytest.raises(DoseOutOfDomain):
            fam.matrix_at(2.5)

    def test_affine_feasible_interval(self):
        A0 = np.array([[-1.0, 1.0], [1.0, -1.0]])
        A1 = np.array([[0.0, -0.5], [0.25, 0.0]])
        fam = AffineFamily(A0, A1, (0.0, 2.0))
        assert fam.feasible_interval() == (-4.0, 2.0)
        with pytest.raises(ModelValidationError, match="Metzler only for u in"):
            AffineFamily(A0, A1, (0.0, 2.5))

    def test_not_metzler_at_dose(self):
        # bypass the load-time check to reach the per-dose one
        fam = AffineFamily(np.array([[-1.0, 1.0], [1.0, -1.0]]), np.zeros((2, 2)), (0.0, 1.0))
        object.__setattr__(fam, "A1", np.array([[0.0, -2.0], [0.0, 0.0]]))
        with pytest.raises(NotMetzlerAtDose) as info:
            fam.matrix_at(1.0)
        assert info.value.dose == 1.0

    def test_dip_growth_is_dose_independent(self):
        fam = DipFamily(a=5.0, b=0.3, d=-0.9, k=2.0)
        for u in np.linspace(0, 10, 11):
            np.testing.assert_allclose(flux_decompose(fam.matrix_at(u)).growth, [0.3, -0.9], atol=1e-14)

    @given(st.floats(0, 3), st.floats(0, 3))
    @settings(max_examples=100, deadline=None)
    def test_lipschitz_tabulated(self, u, v):
        rng = np.random.default_rng(7)
        mats = []
        for _ in range(4):
            M = rng.uniform(0, 1, (3, 3))
            np.fill_diagonal(M, rng.uniform(-2, 0, 3))
            mats.append(M)
        fam = TabulatedFamily([0.0, 1.0, 1.5, 3.0], mats)
        diff = inf_norm(fam.matrix_at(u).entries - fam.matrix_at(v).entries)
        assert diff <= fam.lipschitz() * abs(u - v) + 1e-12

    @given(st.floats(0, 5), st.floats(0, 5))
    @settings(max_examples=100, deadline=None)
    def test_lipschitz_affine(self, u, v):
        A0 = np.array([[-1.0, 2.0], [0.5, -3.0]])
        A1 = np.array([[-0.4, 0.1], [0.3, 0.2]])
        fam = AffineFamily(A0, A1, (0.0, 5.0))
        diff = inf_norm(fam.matrix_at(u).entries - fam.matrix_at(v).entries)
        assert diff <= fam.lipschitz() * abs(u - v) * (1 + 1e-12) + 1e-15


class TestLoadModel:
    def test_dip_file(self):
        m = load_model(DIP_FILE)
        assert m.n == 2
        assert isinstance(m.family, DipFamily)
        assert m.family.a == 100.0
        assert m.dose_domain == (0.0, 5.0)

    def test_bytes_input(self):
        assert load_model(DIP_FILE.encode()).n == 2

    def test_c_must_be_positive(self):
        with pytest.raises(ModelValidationError, match="c must be entrywise positive"):
            load_model(_model_json(c=[1, 0]))

    def test_x0_must_be_positive(self):
        with pytest.raises(ModelValidationError, match="x0 must be entrywise positive"):
            load_model(_model_json(x0=[1, -1]))

    def test_non_square_affine(self):
        text = json.dumps({
            "n": 2,
            "family": {"type": "affine", "A0": [[-1, 1, 0], [1, -1, 0]], "A1": [[0, 0], [0, 0]]},
            "c": [1, 1], "x0": [1, 1], "dose_domain": [0, 1],
        })
        with pytest.raises(ModelValidationError, match="square"):
            load_model(text)

    def test_n_mismatch(self):
        with pytest.raises(ModelValidationError, match="declared n=3"):
            load_model(_model_json(n=3))

    def test_parse_error_has_position(self):
        with pytest.raises(ParseError) as info:
            load_model('{"n": 2,\n  "family": }')
        assert info.value.line == 2

    def test_unknown_family(self):
        with pytest.raises(ModelValidationError, match="unknown family type"):
            load_model(_model_json(family={"type": "hill"}))

    def test_missing_field(self):
        obj = json.loads(DIP_FILE)
        del obj["x0"]
        with pytest.raises(ModelValidationError, match="'x0'"):
            load_model(json.dumps(obj))

    def test_dip_domain_must_be_nonnegative(self):
        with pytest.raises(ModelValidationError):
            load_model(_model_json(dose_domain=[-1.0, 2.0]))

    def test_tabulated_doses_increasing(self):
        text = json.dumps({
            "n": 1,
            "family": {"type": "tabulated", "doses": [1.0, 0.5], "matrices": [[[-1]], [[-2]]]},
            "c": [1], "x0": [1], "dose_domain": [0.5, 1.0],
        })
        with pytest.raises(ModelValidationError, match="strictly increasing"):
            load_model(text)

    @pytest.mark.parametrize(
        "model",
        [
            SystemModel(DipFamily(a=2.5, b=0.1, d=-0.3, k=0.75, dose_domain=(0.0, 4.0)), [1.0, 2.0], [0.5, 0.25]),
            SystemModel(AffineFamily([[-1.0, 0.3], [0.2, -0.5]], [[0.1, 0.0], [0.05, -0.2]], (0.0, 2.0)), [1, 1], [1, 3]),
            SystemModel(TabulatedFamily([0.0, 1.0], [[[-1.0]], [[-0.1]]]), [2.0], [1.0]),
        ],
    )
    def test_round_trip(self, model):
        assert load_model(dump_model(model)) == model
