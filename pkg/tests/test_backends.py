"""Agreement between the compiled kernels and the pure-numpy fallback."""

import os
import subprocess
import sys

import numpy as np
import pytest

from dectsplit import kernels

SCRIPT = """
import sys
import numpy as np
import dectsplit.kernels as kernels
assert kernels.BACKEND == "numpy", kernels.BACKEND
from dectsplit import phantom, physics, projector

geom = projector.ScanGeometry.uniform(24, 16, 35)
rng = np.random.default_rng(99)
img = rng.standard_normal((24, 24))
sino = rng.standard_normal((16, 35))
out = {
    "fwd": projector.forward_project(img, geom),
    "adj": projector.back_project(sino, geom),
    "fbp": projector.fbp(sino, geom),
}
spec_h = physics.Spectrum.monochromatic(100.0, 1e5)
spec_l = physics.Spectrum.monochromatic(60.0, 1e5)
a_c = rng.uniform(0.0, 2.0, 50)
a_p = rng.uniform(0.0, 1e5, 50)
out["poly"] = physics.forward_f_batch(a_c, a_p, spec_h)
m_h = out["poly"].copy()
m_l = physics.forward_f_batch(a_c, a_p, spec_l)
w = np.full(50, 1e5)
dec_c, dec_p, flags, evals = kernels.lm_decompose(
    m_h, m_l, w, w, np.zeros(50), np.zeros(50), 0.0, 0.0,
    spec_h.counts, spec_h.fkn, spec_h.fp,
    spec_l.counts, spec_l.fkn, spec_l.fp,
    a_c + 0.1, a_p + 10.0, True, 1e-3, 50, 1e-10, 1e-9)
out["dec_c"] = dec_c
out["dec_p"] = dec_p
np.savez(sys.argv[1], **out)
"""


@pytest.mark.skipif(kernels.BACKEND != "numba",
                    reason="compiled backend unavailable")
def test_numpy_fallback_matches_compiled(tmp_path):
    dump = tmp_path / "numpy_backend.npz"
    env = dict(os.environ, DECTSPLIT_NO_NUMBA="1")
    subprocess.run([sys.executable, "-c", SCRIPT, str(dump)],
                   check=True, env=env)
    ref = np.load(dump)

    from dectsplit import phantom, physics, projector

    geom = projector.ScanGeometry.uniform(24, 16, 35)
    rng = np.random.default_rng(99)
    img = rng.standard_normal((24, 24))
    sino = rng.standard_normal((16, 35))
    np.testing.assert_allclose(projector.forward_project(img, geom),
                               ref["fwd"], atol=1e-10)
    np.testing.assert_allclose(projector.back_project(sino, geom),
                               ref["adj"], atol=1e-10)
    np.testing.assert_allclose(projector.fbp(sino, geom),
                               ref["fbp"], atol=1e-10)
    spec_h = physics.Spectrum.monochromatic(100.0, 1e5)
    spec_l = physics.Spectrum.monochromatic(60.0, 1e5)
    a_c = rng.uniform(0.0, 2.0, 50)
    a_p = rng.uniform(0.0, 1e5, 50)
    np.testing.assert_allclose(physics.forward_f_batch(a_c, a_p, spec_h),
                               ref["poly"], rtol=1e-12)
    m_h = physics.forward_f_batch(a_c, a_p, spec_h)
    m_l = physics.forward_f_batch(a_c, a_p, spec_l)
    w = np.full(50, 1e5)
    dec_c, dec_p, _, _ = kernels.lm_decompose(
        m_h, m_l, w, w, np.zeros(50), np.zeros(50), 0.0, 0.0,
        spec_h.counts, spec_h.fkn, spec_h.fp,
        spec_l.counts, spec_l.fkn, spec_l.fp,
        a_c + 0.1, a_p + 10.0, True, 1e-3, 50, 1e-10, 1e-9)
    np.testing.assert_allclose(dec_c, ref["dec_c"], rtol=1e-8)
    np.testing.assert_allclose(dec_p, ref["dec_p"], rtol=1e-8, atol=1e-4)
