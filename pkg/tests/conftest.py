import numpy as np
import pytest

import abstain_lab as al


@pytest.fixture
def two_atom_spec():
    return al.make_two_atom_spec(lam=0.5)


@pytest.fixture
def threshold_spec():
    """1-D instance: uniform atoms, informative left half, clean labels there."""
    return al.make_threshold_discrete_spec(
        n_atoms=100, alpha=0.5, lambda_bar=0.5, f_star_threshold=0.45
    )


@pytest.fixture
def threshold_classes():
    classes = al.enumerate_threshold_selectors(0.0, 1.0, 101, "both")
    return classes, classes


@pytest.fixture
def gaussian_process():
    return al.make_gaussian_mixture_spec(
        centers_informative=[[-2.0, -1.5], [-2.0, 1.5]],
        centers_uninformative=[[2.0, -1.5], [2.0, 1.5]],
        stddev=0.5,
        alpha=0.5,
        lambda_const=0.5,
        boundary=(np.array([0.0, 1.0]), 0.0),
    )
