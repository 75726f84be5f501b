"""Projection-domain dual-energy decomposition (per-ray 2-variable LM).

Two modes:
  * CDM  - constrained (nonnegative) weighted least squares against the
           measured pair; used for initialization and the CDM+FBP baseline.
  * UDM  - unconstrained, with quadratic penalties anchoring each ray to
           the current reconstruction; the ADMM decomposition step.

All rays are independent, so the batch solver is embarrassingly parallel and
deterministic under any thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .physics import Spectrum

LM_LAMBDA0 = 1e-3
LM_MAX_ITERS = 50
LM_STEP_TOL = 1e-10
LM_GRAD_TOL = 1e-9


@dataclass
class DecompositionReport:
    """Aggregate of per-ray solver failures for one batch."""

    n_rays: int
    failed: np.ndarray  # indices of rays that hit the iteration cap

    @property
    def n_failed(self):
        return int(self.failed.size)

    def lines(self):
        return [f"{int(i)}\tmax-iterations" for i in self.failed]


def _cdm_init(m_h, spec_h):
    """Compton-only starting point scaled by the spectrum-mean Klein-Nishina."""
    mean_fkn = float(np.dot(spec_h.counts, spec_h.fkn) / spec_h.total)
    return m_h / mean_fkn, np.zeros_like(m_h)


def decompose_batch(m_h, m_l, w_h, w_l, spec_h, spec_l, mode="cdm",
                    anchors_c=None, anchors_p=None, rho_c=0.0, rho_p=0.0,
                    init_c=None, init_p=None, max_iters=LM_MAX_ITERS,
                    counters=None):
    """Solve the per-ray decomposition for flat measurement arrays.

    Returns (a_c, a_p, report). In UDM mode the per-ray objective includes
    the rho-weighted anchor penalties and iterates start at the anchors;
    in CDM mode iterates are projected onto the nonnegative quadrant.
    """
    m_h = np.ascontiguousarray(m_h, dtype=float).ravel()
    m_l = np.ascontiguousarray(m_l, dtype=float).ravel()
    nr = m_h.size
    w_h = np.ascontiguousarray(w_h, dtype=float).ravel()
    w_l = np.ascontiguousarray(w_l, dtype=float).ravel()
    if not (m_l.size == w_h.size == w_l.size == nr):
        raise ValueError("measurement/weight arrays must have equal length")
    if mode == "cdm":
        nonneg = True
        anchors_c = np.zeros(nr)
        anchors_p = np.zeros(nr)
        rho_c = rho_p = 0.0
        if init_c is None:
            init_c, init_p = _cdm_init(m_h, spec_h)
    elif mode == "udm":
        nonneg = False
        anchors_c = np.ascontiguousarray(anchors_c, dtype=float).ravel()
        anchors_p = np.ascontiguousarray(anchors_p, dtype=float).ravel()
        if anchors_c.size != nr or anchors_p.size != nr:
            raise ValueError("anchors must match the measurement length")
        if init_c is None:
            init_c, init_p = anchors_c, anchors_p
    else:
        raise ValueError(f"unknown mode {mode!r}")
    init_c = np.ascontiguousarray(init_c, dtype=float).ravel()
    init_p = np.ascontiguousarray(init_p, dtype=float).ravel()

    a_c, a_p, flags, n_evals = kernels.lm_decompose(
        m_h, m_l, w_h, w_l, anchors_c, anchors_p, float(rho_c), float(rho_p),
        spec_h.counts, spec_h.fkn, spec_h.fp,
        spec_l.counts, spec_l.fkn, spec_l.fp,
        init_c, init_p, nonneg, LM_LAMBDA0, int(max_iters),
        LM_STEP_TOL, LM_GRAD_TOL)
    if counters is not None and nr > 0:
        counters.add_fwd_model(n_evals / nr)
    report = DecompositionReport(nr, np.flatnonzero(flags != 0))
    return a_c, a_p, report


def decompose_ray_cdm(m, w, spec_h, spec_l, max_iters=LM_MAX_ITERS):
    """Constrained decomposition of a single (m_h, m_l) pair; returns (a_c, a_p)."""
    m_h, m_l = m
    w_h, w_l = w
    a_c, a_p, report = decompose_batch(
        np.array([m_h]), np.array([m_l]), np.array([w_h]), np.array([w_l]),
        spec_h, spec_l, mode="cdm", max_iters=max_iters)
    return float(a_c[0]), float(a_p[0]), report.n_failed == 0


def decompose_ray_udm(m, w, anchors, rho, spec_h, spec_l, max_iters=LM_MAX_ITERS):
    """Penalized unconstrained decomposition of a single ray."""
    m_h, m_l = m
    w_h, w_l = w
    r_c, r_p = anchors
    rho_c, rho_p = rho
    a_c, a_p, report = decompose_batch(
        np.array([m_h]), np.array([m_l]), np.array([w_h]), np.array([w_l]),
        spec_h, spec_l, mode="udm",
        anchors_c=np.array([r_c]), anchors_p=np.array([r_p]),
        rho_c=rho_c, rho_p=rho_p, max_iters=max_iters)
    return float(a_c[0]), float(a_p[0]), report.n_failed == 0


def decompose_all(sino_h, sino_l, w_h, w_l, spec_h, spec_l, mode="cdm",
                  anchors_c=None, anchors_p=None, rho_c=0.0, rho_p=0.0,
                  max_iters=LM_MAX_ITERS, counters=None):
    """Decompose full sinograms; preserves the 2-D (angle, detector) layout."""
    shape = np.asarray(sino_h).shape
    a_c, a_p, report = decompose_batch(
        sino_h, sino_l, w_h, w_l, spec_h, spec_l, mode=mode,
        anchors_c=None if anchors_c is None else np.asarray(anchors_c),
        anchors_p=None if anchors_p is None else np.asarray(anchors_p),
        rho_c=rho_c, rho_p=rho_p, max_iters=max_iters, counters=counters)
    return a_c.reshape(shape), a_p.reshape(shape), report
