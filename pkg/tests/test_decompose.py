"""Per-ray dual-energy decomposition: CDM and UDM modes."""

import numpy as np
import pytest

from dectsplit import decompose
from dectsplit.physics import Spectrum, forward_f, klein_nishina, pe_basis


def mono_pair(e_h=100.0, e_l=60.0):
    return Spectrum.monochromatic(e_h, 1e5), Spectrum.monochromatic(e_l, 1e5)


def mono_forward(a_c, a_p, energy):
    return klein_nishina(energy) * a_c + pe_basis(energy) * a_p


class TestCdm:
    def test_monochromatic_pair_recovered_exactly(self):
        spec_h, spec_l = mono_pair()
        truth = (1.3, 2.4e4)
        m = (mono_forward(*truth, 100.0), mono_forward(*truth, 60.0))
        a_c, a_p, ok = decompose.decompose_ray_cdm(m, (1e5, 1e5), spec_h, spec_l)
        assert ok
        assert a_c == pytest.approx(truth[0], rel=1e-8)
        assert a_p == pytest.approx(truth[1], rel=1e-8)

    def test_solution_stays_nonnegative(self, rng):
        spec_h, spec_l = mono_pair()
        # data consistent with a_p = 0, perturbed toward negative solutions
        for _ in range(20):
            eps = rng.uniform(0.0, 0.1)
            m = (mono_forward(1.0, 0.0, 100.0) - eps,
                 mono_forward(1.0, 0.0, 60.0) + eps)
            a_c, a_p, _ = decompose.decompose_ray_cdm(m, (1e5, 1e5),
                                                      spec_h, spec_l)
            assert a_c >= 0.0
            assert a_p >= 0.0

    def test_polychromatic_roundtrip(self, tube_specs, rng):
        spec_h, spec_l = tube_specs
        for _ in range(10):
            truth = (rng.uniform(0.5, 3.0), rng.uniform(1e4, 3e5))
            m = (forward_f(truth, spec_h), forward_f(truth, spec_l))
            a_c, a_p, ok = decompose.decompose_ray_cdm(m, (1e5, 1e5),
                                                       spec_h, spec_l)
            assert ok
            assert a_c == pytest.approx(truth[0], rel=1e-5)
            assert a_p == pytest.approx(truth[1], rel=1e-5)

    def test_zero_ray_maps_to_zero(self, tube_specs):
        spec_h, spec_l = tube_specs
        a_c, a_p, ok = decompose.decompose_ray_cdm((0.0, 0.0), (1e5, 1e5),
                                                   spec_h, spec_l)
        assert ok
        assert a_c == pytest.approx(0.0, abs=1e-8)
        assert a_p == pytest.approx(0.0, abs=1e-3)


class TestUdm:
    def test_monochromatic_ridge_closed_form(self, rng):
        spec_h, spec_l = mono_pair()
        kh, ph = klein_nishina(100.0), pe_basis(100.0)
        kl, pl = klein_nishina(60.0), pe_basis(60.0)
        for _ in range(10):
            mh, ml = rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)
            wh, wl = rng.uniform(1e3, 1e5), rng.uniform(1e3, 1e5)
            anchors = (rng.uniform(0.0, 2.0), rng.uniform(0.0, 1e5))
            rho = (rng.uniform(1e-4, 1e-1), rng.uniform(1e-8, 1e-4))
            hess = np.array([
                [wh * kh ** 2 + wl * kl ** 2 + rho[0],
                 wh * kh * ph + wl * kl * pl],
                [wh * kh * ph + wl * kl * pl,
                 wh * ph ** 2 + wl * pl ** 2 + rho[1]]])
            b = np.array([wh * kh * mh + wl * kl * ml + rho[0] * anchors[0],
                          wh * ph * mh + wl * pl * ml + rho[1] * anchors[1]])
            expected = np.linalg.solve(hess, b)
            a_c, a_p, ok = decompose.decompose_ray_udm(
                (mh, ml), (wh, wl), anchors, rho, spec_h, spec_l)
            assert ok
            assert a_c == pytest.approx(expected[0], rel=1e-6)
            assert a_p == pytest.approx(expected[1], rel=1e-6)

    def test_zero_weights_return_anchors(self, tube_specs):
        spec_h, spec_l = tube_specs
        anchors = (1.7, 8.2e4)
        a_c, a_p, ok = decompose.decompose_ray_udm(
            (5.0, 5.0), (0.0, 0.0), anchors, (1e-3, 1e-3), spec_h, spec_l)
        assert ok
        assert a_c == anchors[0]
        assert a_p == anchors[1]

    def test_can_go_negative(self):
        spec_h, spec_l = mono_pair()
        # data that demands a negative photoelectric integral
        truth = (1.0, -5e3)
        m = (mono_forward(*truth, 100.0), mono_forward(*truth, 60.0))
        a_c, a_p, _ = decompose.decompose_ray_udm(
            m, (1e5, 1e5), (0.0, 0.0), (1e-8, 1e-12), spec_h, spec_l)
        assert a_p < 0.0


class TestBatch:
    def test_batch_matches_serial_bitwise(self, tube_specs, rng):
        spec_h, spec_l = tube_specs
        nr = 24
        truth_c = rng.uniform(0.2, 2.5, nr)
        truth_p = rng.uniform(5e3, 2e5, nr)
        m_h = np.array([forward_f((c, p), spec_h)
                        for c, p in zip(truth_c, truth_p)])
        m_l = np.array([forward_f((c, p), spec_l)
                        for c, p in zip(truth_c, truth_p)])
        w = np.full(nr, 1e5)
        batch_c, batch_p, _ = decompose.decompose_batch(
            m_h, m_l, w, w, spec_h, spec_l, mode="cdm")
        for i in range(nr):
            a_c, a_p, _ = decompose.decompose_ray_cdm(
                (m_h[i], m_l[i]), (1e5, 1e5), spec_h, spec_l)
            assert batch_c[i] == a_c
            assert batch_p[i] == a_p

    def test_decompose_all_preserves_layout(self, tube_specs):
        spec_h, spec_l = tube_specs
        sino = np.full((6, 9), 0.8)
        w = np.full((6, 9), 1e5)
        a_c, a_p, report = decompose.decompose_all(sino, 1.1 * sino, w, w,
                                                   spec_h, spec_l)
        assert a_c.shape == (6, 9)
        assert a_p.shape == (6, 9)
        assert report.n_rays == 54

    def test_report_collects_failures(self, tube_specs):
        spec_h, spec_l = tube_specs
        m = np.array([0.9])
        w = np.array([1e5])
        # a single LM iteration cannot converge from the crude starting point
        _, _, report = decompose.decompose_batch(m, 1.2 * m, w, w,
                                                 spec_h, spec_l, mode="cdm",
                                                 max_iters=1)
        assert report.n_failed == 1
        assert report.lines() == ["0\tmax-iterations"]

    def test_length_mismatch_rejected(self, tube_specs):
        spec_h, spec_l = tube_specs
        with pytest.raises(ValueError):
            decompose.decompose_batch(np.zeros(3), np.zeros(3), np.zeros(2),
                                      np.zeros(3), spec_h, spec_l)

    def test_unknown_mode_rejected(self, tube_specs):
        spec_h, spec_l = tube_specs
        z = np.zeros(1)
        with pytest.raises(ValueError):
            decompose.decompose_batch(z, z, z, z, *tube_specs, mode="mdm")
