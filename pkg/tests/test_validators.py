"""
Тесты валидаторов входных массивов
"""
import inspect

import numpy as np
import pytest

from daisi_assimilation.api.errors import DimensionMismatchError, DomainError, NumericalError
from daisi_assimilation.utils import validators
from daisi_assimilation.utils.validators import as_matrix, check_finite, validate_time


class TestValidateTime:
    @pytest.mark.parametrize("t", [0.0, 0.5, 1.0])
    def test_accepts_closed_interval(self, t):
        assert validate_time(t) == t

    @pytest.mark.parametrize("t", [-1e-9, 1.5, float("nan")])
    def test_rejects_outside(self, t):
        with pytest.raises(DomainError):
            validate_time(t)


class TestAsMatrix:
    def test_scalar_and_vector(self):
        assert as_matrix(2.0).shape == (1, 1)
        assert as_matrix([1.0, 2.0, 3.0]).shape == (1, 3)

    def test_dimension_checked(self):
        with pytest.raises(DimensionMismatchError):
            as_matrix(np.zeros((4, 2)), "z", 3)

    def test_rank_three(self):
        with pytest.raises(DimensionMismatchError):
            as_matrix(np.zeros((2, 2, 2)))


class TestCheckFinite:
    def test_names_first_bad_row(self):
        x = np.zeros((4, 2))
        x[2, 1] = np.inf
        with pytest.raises(NumericalError) as exc_info:
            check_finite(x, step=7)
        assert exc_info.value.details == {"step": 7, "row": 2}

    def test_finite_passes(self):
        check_finite(np.ones((3, 3)))


def test_module_surface():
    functions = {name for name, fn in inspect.getmembers(validators, inspect.isfunction)
                 if fn.__module__ == validators.__name__}
    assert functions == {"validate_time", "as_matrix", "check_finite"}
