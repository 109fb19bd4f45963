"""Shared fixtures.

``FunctionalStdf`` stands in for an empirical estimator whose every L_k equals
L(x) + c M(x) with M homogeneous of order 1 - rho, i.e. the second-order
expansion without noise or higher-order terms.
"""
import numpy as np
import pytest

from stdfbias.model.models import BPII
from stdfbias.model.sampler import Sample
from stdfbias.tools.dataset import ranks


class FunctionalStdf:
    def __init__(self, L, c=0.0, rho=-1.0, n=1000, d=2):
        self.L = L
        self.c = c
        self.rho = rho
        self.n = n
        self.d = d

    def M(self, x):
        x = np.asarray(x, dtype=float)
        return float(np.sum(x ** 2)) ** ((1.0 - self.rho) / 2.0)

    def __call__(self, k, x):
        return float(self.L(x)) + self.c * self.M(x)

    def path(self, x, ks):
        return np.full(len(ks), self(1, x))


@pytest.fixture(scope='session')
def functional_stdf():
    return FunctionalStdf


@pytest.fixture
def three_points():
    return Sample(np.array([[0.1, 0.9], [0.5, 0.2], [0.8, 0.4]]))


@pytest.fixture
def three_ranks(three_points):
    return ranks(three_points)


@pytest.fixture(scope='module')
def bpii_truth():
    return BPII(3.0).true_stdf
