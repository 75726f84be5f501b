"""Shared fixtures: small geometries, phantoms, and simulated datasets."""

import numpy as np
import pytest

from dectsplit import phantom, physics, projector


@pytest.fixture(scope="session")
def geom64():
    return projector.ScanGeometry.uniform(64, 90, 93)


@pytest.fixture(scope="session")
def geom32():
    return projector.ScanGeometry.uniform(32, 45, 47)


@pytest.fixture(scope="session")
def materials():
    return phantom.load_materials()


@pytest.fixture(scope="session")
def mono_specs():
    """Single-line spectra at 100 and 60 keV."""
    return (physics.Spectrum.monochromatic(100.0, 1e5),
            physics.Spectrum.monochromatic(60.0, 1e5))


@pytest.fixture(scope="session")
def tube_specs():
    return phantom.default_spectra()


@pytest.fixture(scope="session")
def water_disc64(geom64, materials):
    spec = phantom.PhantomSpec(
        (phantom.Disc(0.0, 0.0, 2.2, materials["water"]),),
        materials["vacuum"], geom64)
    return phantom.rasterize(spec)


@pytest.fixture(scope="session")
def noiseless_mono_dataset(geom64, water_disc64, mono_specs):
    """Noiseless monochromatic measurements of the single water disc."""
    spec_h, spec_l = mono_specs
    sim = phantom.simulate(water_disc64, geom64, spec_h, spec_l, 1e5,
                           seed=1, noiseless=True)
    return sim


@pytest.fixture(scope="session")
def noisy_sim18_dataset(geom64, tube_specs):
    spec_h, spec_l = tube_specs
    truth = phantom.rasterize(phantom.builtin_phantom("sim18", geom64))
    sim = phantom.simulate(truth, geom64, spec_h, spec_l, 1e5, seed=3)
    return {"sim": sim, "truth": truth}


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
