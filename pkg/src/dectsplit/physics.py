"""Energy-dependent basis functions, X-ray spectra and the nonlinear forward model.

The attenuation of a ray is modeled as mu(E) = x_c * f_kn(E) + x_p * pe(E),
with f_kn the Klein-Nishina energy dependence of Compton scattering and
pe(E) = E^-3 the photoelectric energy dependence. A polychromatic measurement
is the negative log of the spectrum-weighted transmitted fraction.

Units: energies keV, Compton line integrals dimensionless (cm^-1 * cm),
photoelectric line integrals keV^3.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import kernels

#: Electron rest energy in keV, fixed for cross-platform determinism.
ELECTRON_REST_KEV = 510.975


class SaturationError(ValueError):
    """All energy bins underflowed to zero transmission.

    ``max_projection`` carries the largest representable log projection for
    the spectrum that produced the overflow.
    """

    def __init__(self, max_projection):
        super().__init__(f"attenuation overflow; projection saturates at {max_projection:g}")
        self.max_projection = max_projection


def klein_nishina(energy_kev):
    """Klein-Nishina energy dependence of the Compton cross-section.

    Positive, continuous and strictly decreasing on the diagnostic range;
    tends to 4/3 as the energy goes to zero.
    """
    e = np.asarray(energy_kev, dtype=float)
    if np.any(e <= 0.0):
        raise ValueError("energy must be positive")
    a = e / ELECTRON_REST_KEV
    l = np.log1p(2.0 * a)
    f = ((1.0 + a) / a ** 2 * (2.0 * (1.0 + a) / (1.0 + 2.0 * a) - l / a)
         + l / (2.0 * a) - (1.0 + 3.0 * a) / (1.0 + 2.0 * a) ** 2)
    return float(f) if np.isscalar(energy_kev) else f


def pe_basis(energy_kev):
    """Photoelectric energy dependence, E^-3 (units keV^-3)."""
    e = np.asarray(energy_kev, dtype=float)
    if np.any(e <= 0.0):
        raise ValueError("energy must be positive")
    f = e ** -3.0
    return float(f) if np.isscalar(energy_kev) else f


@dataclass(frozen=True)
class Spectrum:
    """Discretized photon-count table S(E) over keV bin centers."""

    energies: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        c = np.asarray(self.counts, dtype=float)
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "counts", c)
        if e.ndim != 1 or e.size == 0 or e.shape != c.shape:
            raise ValueError("energies/counts must be equal-length 1-D arrays")
        if np.any(e <= 0.0) or np.any(np.diff(e) <= 0.0):
            raise ValueError("energies must be strictly increasing and positive")
        if np.any(c < 0.0) or not c.sum() > 0.0:
            raise ValueError("counts must be nonnegative with positive total")

    @property
    def total(self):
        return float(self.counts.sum())

    @cached_property
    def fkn(self):
        return klein_nishina(self.energies)

    @cached_property
    def fp(self):
        return pe_basis(self.energies)

    @classmethod
    def monochromatic(cls, energy_kev, count=1.0):
        return cls(np.array([float(energy_kev)]), np.array([float(count)]))


def triangle_spectrum(kvp, peak_fraction=2.0 / 3.0, e_min=10.0, scale=1.0e5):
    """Truncated-triangle spectrum on 1-keV bins from e_min to the tube voltage."""
    energies = np.arange(e_min, kvp + 1.0)
    peak = e_min + peak_fraction * (kvp - e_min)
    counts = np.where(
        energies <= peak,
        (energies - e_min) / (peak - e_min),
        (kvp - energies) / (kvp - peak),
    )
    counts = np.clip(counts, 0.0, None)
    # keep the endpoint bins marginally populated so no bin is dead
    counts = np.maximum(counts, 1e-3) * scale
    return Spectrum(energies, counts)


def load_spectrum(path):
    """Read a spectrum from a text table: ``energy_keV<TAB>count`` per line."""
    energies = []
    counts = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        e, c = line.split()
        energies.append(float(e))
        counts.append(float(c))
    return Spectrum(np.array(energies), np.array(counts))


def save_spectrum(spectrum, path, comment=""):
    lines = [f"# {comment}" if comment else "# spectrum table",
             f"# electron rest energy constant: {ELECTRON_REST_KEV} keV",
             "# energy_keV<TAB>count"]
    for e, c in zip(spectrum.energies, spectrum.counts):
        lines.append(f"{e:.6g}\t{c:.10g}")
    Path(path).write_text("\n".join(lines) + "\n")


def forward_f(pair, spectrum):
    """Log projection for one ray: -ln sum S exp(-fkn*a_c - pe*a_p) + ln sum S."""
    a_c, a_p = pair
    if not (np.isfinite(a_c) and np.isfinite(a_p)):
        raise ValueError("line integrals must be finite")
    t = float(np.sum(spectrum.counts * np.exp(-spectrum.fkn * a_c - spectrum.fp * a_p)))
    if t <= 0.0:
        raise SaturationError(np.log(spectrum.total) + kernels.SATURATED_LOG)
    return float(np.log(spectrum.total) - np.log(t))


def forward_f_jacobian(pair, spectrum):
    """Partials (dm/da_c, dm/da_p); spectrum-weighted means of fkn and pe."""
    a_c, a_p = pair
    if not (np.isfinite(a_c) and np.isfinite(a_p)):
        raise ValueError("line integrals must be finite")
    w = spectrum.counts * np.exp(-spectrum.fkn * a_c - spectrum.fp * a_p)
    t = float(w.sum())
    if t <= 0.0:
        raise SaturationError(np.log(spectrum.total) + kernels.SATURATED_LOG)
    return float(np.dot(w, spectrum.fkn) / t), float(np.dot(w, spectrum.fp) / t)


def forward_f_batch(a_c, a_p, spectrum):
    """Vectorized forward model over flat arrays of line integrals.

    Saturated rays come back clamped at ln(total) + SATURATED_LOG rather
    than raising.
    """
    a_c = np.ascontiguousarray(a_c, dtype=float).ravel()
    a_p = np.ascontiguousarray(a_p, dtype=float).ravel()
    return kernels.poly_forward(a_c, a_p, spectrum.counts, spectrum.fkn, spectrum.fp)


def forward_f_grad_batch(a_c, a_p, spectrum):
    """Vectorized (m, dm/da_c, dm/da_p) over flat arrays."""
    a_c = np.ascontiguousarray(a_c, dtype=float).ravel()
    a_p = np.ascontiguousarray(a_p, dtype=float).ravel()
    return kernels.poly_forward_grad(a_c, a_p, spectrum.counts, spectrum.fkn, spectrum.fp)
