"""Shared fixtures: memoized profile solves and gauge projectors.

Profile solves and spectral assemblies are the expensive steps shared by
half the suite; the session-scoped factories below cache them per
parameter combination so each one is computed once.
"""

import numpy as np
import pytest

from wmlab import geometry, profile, spectral


def make_target(d=3, eps=0.0, terms=None):
    basis = geometry.PerturbationBasis(terms) if terms else geometry.DEFAULT_BASIS
    return geometry.WarpedTarget(d=d, epsilon=eps, basis=basis)


@pytest.fixture(scope="session")
def profiles():
    cache = {}

    def get(d=3, eps=0.0, method="shooting"):
        key = (d, float(eps), method)
        if key not in cache:
            target = make_target(d, eps)
            if method == "shooting":
                cache[key] = profile.solve_profile(target)
            elif method == "collocation":
                cache[key] = profile.newton_collocation(target)
            else:
                raise ValueError(method)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def spectra(profiles):
    cache = {}

    def get(d=3, eps=0.0, nodes=128):
        key = (d, float(eps), nodes)
        if key not in cache:
            sol = profiles(d, eps, "collocation")
            cache[key] = spectral.eigen(spectral.assemble(sol, nodes))
        return cache[key]

    return get


@pytest.fixture(scope="session")
def projectors(spectra):
    cache = {}

    def get(d=3, eps=0.0, nodes=128):
        key = (d, float(eps), nodes)
        if key not in cache:
            cache[key] = spectral.unstable_projection(spectra(d, eps, nodes))
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(0)
