import numpy as np
import pytest

from npmlmix import (
    IdentityLocation,
    MixingMeasure,
    ModelSpec,
    PkExp,
    TimeDesign,
)


@pytest.fixture
def pk_spec():
    """Two-parameter decay model with four measuring windows."""
    design = TimeDesign(((0.0, 0.5), (0.5, 1.0), (1.0, 1.5), (1.5, 2.0)))
    return ModelSpec(p=2, n=4, sigma=0.2, f=PkExp(), time_design=design)


@pytest.fixture
def location_spec():
    """Scalar location model with two measuring windows."""
    design = TimeDesign(((0.0, 1.0), (1.0, 2.0)))
    return ModelSpec(p=1, n=2, sigma=0.5, f=IdentityLocation(), time_design=design)


@pytest.fixture
def two_point_pk_truth():
    return MixingMeasure(np.array([[1.0, 0.3], [2.0, 0.8]]), [0.5, 0.5])


@pytest.fixture
def two_point_location_truth():
    return MixingMeasure(np.array([[0.7], [1.8]]), [0.5, 0.5])
