"""CG/PCG solvers for the stacked tomographic subproblem and its PSF preconditioner.

The reconstruction step solves least squares for the stacked operator
A = [R; D; I] (projection, forward differences, identity), i.e. the normal
system (R^T R + D^T D + I) x = rhs. The solvers track R x and the normal
image incrementally so callers can warm-start without re-applying operators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import projector
from .projector import ScanGeometry, OpCounters


class CgBreakdownError(RuntimeError):
    """Nonpositive curvature encountered; the operator is not SPD as assumed."""


def diff_forward(img):
    """Horizontal and vertical forward differences, replicate boundary.

    Returns a (2, n, n) stack; the last column/row of each channel is zero,
    which keeps constant images in the nullspace of D.
    """
    d = np.zeros((2,) + img.shape)
    d[0, :, :-1] = img[:, 1:] - img[:, :-1]
    d[1, :-1, :] = img[1:, :] - img[:-1, :]
    return d


def diff_adjoint(d):
    """Exact transpose of diff_forward (negative divergence)."""
    img = np.zeros(d.shape[1:])
    img[:, 1:] += d[0, :, :-1]
    img[:, :-1] -= d[0, :, :-1]
    img[1:, :] += d[1, :-1, :]
    img[:-1, :] -= d[1, :-1, :]
    return img


@dataclass
class StackedSystem:
    """Matrix-free A = [R; D; I] with optional blocks dropped (for tests)."""

    geom: ScanGeometry
    counters: OpCounters | None = None
    use_projection: bool = True
    use_diff: bool = True

    def apply_r(self, img):
        return projector.forward_project(img, self.geom, self.counters)

    def apply_rt(self, sino):
        return projector.back_project(sino, self.geom, self.counters)

    def normal_parts(self, img):
        """Return (normal image, R img); R img is None when the block is off."""
        out = np.array(img, dtype=float, copy=True)
        rp = None
        if self.use_diff:
            out += diff_adjoint(diff_forward(img))
        if self.use_projection:
            rp = self.apply_r(img)
            out += self.apply_rt(rp)
        return out, rp

    def normal_apply(self, img):
        """(R^T R + D^T D + I) img."""
        return self.normal_parts(img)[0]


@dataclass(frozen=True)
class Preconditioner:
    """Frequency-domain gains approximating the inverse of the normal operator."""

    gains: np.ndarray

    def apply(self, img):
        return np.fft.ifft2(np.fft.fft2(img) * self.gains).real


def normal_psf(sys):
    """Normal-operator response to a one-hot image at the center pixel."""
    n = sys.geom.image_side
    center = n // 2
    onehot = np.zeros((n, n))
    onehot[center, center] = 1.0
    return sys.normal_apply(onehot)


def build_preconditioner(sys, clamp=1e-4):
    """Inverse-filter preconditioner from the system PSF at the center pixel.

    The PSF's 2-D spectrum magnitude is inverted with a relative clamp so
    the gains stay finite, real and nonnegative (hence M is symmetric PSD).
    """
    n = sys.geom.image_side
    center = n // 2
    psf = normal_psf(sys)
    spectrum = np.abs(np.fft.fft2(np.roll(psf, (-center, -center), axis=(0, 1))))
    peak = spectrum.max()
    if peak <= 0.0:
        raise ValueError("degenerate system: PSF has empty spectrum")
    gains = 1.0 / np.maximum(spectrum, clamp * peak)
    return Preconditioner(gains)


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    residuals: list = field(default_factory=list)
    nx: np.ndarray | None = None  # normal operator applied to x
    rx: np.ndarray | None = None  # R applied to x


def pcg_solve(sys, rhs, x0=None, max_iters=100, tol=1e-8,
              prec=None, nx0=None, rx0=None):
    """(Preconditioned) CG on the normal equations of the stacked system.

    ``nx0``/``rx0`` may carry cached normal_apply(x0) and R x0 from a previous
    solve; both are maintained incrementally so a warm-started solve performs
    exactly one operator application per iteration.
    """
    rhs = np.asarray(rhs, dtype=float)
    if x0 is None:
        x = np.zeros_like(rhs)
        nx = np.zeros_like(rhs)
        rx = (np.zeros((sys.geom.n_angles, sys.geom.detector_count))
              if sys.use_projection else None)
    else:
        x = np.array(x0, dtype=float, copy=True)
        if nx0 is None:
            nx, rx = sys.normal_parts(x)
        else:
            nx = np.array(nx0, dtype=float, copy=True)
            rx = None if rx0 is None else np.array(rx0, dtype=float, copy=True)

    r = rhs - nx
    rhs_norm = float(np.linalg.norm(rhs))
    stop = tol * rhs_norm
    residuals = [float(np.linalg.norm(r))]
    z = prec.apply(r) if prec is not None else r
    p = z.copy()
    rz = float(np.vdot(r, z))
    it = 0
    while it < max_iters and residuals[-1] > stop:
        np_img, rp = sys.normal_parts(p)
        curv = float(np.vdot(p, np_img))
        if curv <= 0.0:
            raise CgBreakdownError(f"nonpositive curvature {curv:g}; adjoint mismatch?")
        alpha = rz / curv
        x = x + alpha * p
        nx = nx + alpha * np_img
        if rx is not None and rp is not None:
            rx = rx + alpha * rp
        r = r - alpha * np_img
        residuals.append(float(np.linalg.norm(r)))
        z = prec.apply(r) if prec is not None else r
        rz_new = float(np.vdot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
    return SolveResult(x, it, residuals, nx=nx, rx=rx)


def cg_solve(sys, rhs, x0=None, max_iters=100, tol=1e-8, nx0=None, rx0=None):
    """Plain CG; identical contract to pcg_solve with no preconditioner."""
    return pcg_solve(sys, rhs, x0=x0, max_iters=max_iters, tol=tol,
                     prec=None, nx0=nx0, rx0=rx0)
