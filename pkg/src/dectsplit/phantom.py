"""Synthetic phantoms and dual-spectrum measurement simulation.

Phantoms are lists of discs over a background material, rasterized by
pixel-center membership. Measurements follow the polychromatic forward model
with independent Poisson draws per ray and spectrum; sampling uses a
counter-free single-stream Philox generator in a fixed draw order, so results
are bit-reproducible for a given seed under any thread count.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import physics, projector
from .projector import ScanGeometry

#: Poisson sampler identity; bump when the sampling scheme changes.
POISSON_SAMPLER_VERSION = "inv-gauss-v1"

#: Mean threshold between inversion sampling and the clamped Gaussian branch.
POISSON_GAUSS_CUTOFF = 50.0


@dataclass(frozen=True)
class Material:
    name: str
    x_c: float  # cm^-1
    x_p: float  # keV^3 cm^-1

    def __post_init__(self):
        if self.x_c < 0.0 or self.x_p < 0.0:
            raise ValueError("material coefficients must be nonnegative")


@dataclass(frozen=True)
class Disc:
    cx: float  # cm
    cy: float  # cm
    radius: float  # cm
    material: Material


@dataclass(frozen=True)
class PhantomSpec:
    shapes: tuple
    background: Material
    geom: ScanGeometry


def load_materials(path=None):
    """Material table: ``name x_c x_p`` per line; defaults to the shipped file."""
    if path is None:
        text = resources.files("dectsplit.data").joinpath("materials.txt").read_text()
    else:
        text = Path(path).read_text()
    table = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, xc, xp = line.split()
        table[name] = Material(name, float(xc), float(xp))
    return table


def default_spectra():
    """The shipped 95/130 kVp spectra as (high, low) = (130, 95)."""
    files = resources.files("dectsplit.data")
    with resources.as_file(files.joinpath("spectrum_130kvp.txt")) as p:
        high = physics.load_spectrum(p)
    with resources.as_file(files.joinpath("spectrum_95kvp.txt")) as p:
        low = physics.load_spectrum(p)
    return high, low


def _pixel_grid(geom):
    idx = (np.arange(geom.image_side) - 0.5 * (geom.image_side - 1)) * geom.pixel_pitch
    return np.meshgrid(idx, -idx)  # (x, y), row 0 at the top


def rasterize(spec):
    """Paint materials by pixel-center membership; later shapes overwrite earlier."""
    geom = spec.geom
    x, y = _pixel_grid(geom)
    xc = np.full((geom.image_side,) * 2, spec.background.x_c)
    xp = np.full((geom.image_side,) * 2, spec.background.x_p)
    for d in spec.shapes:
        inside = (x - d.cx) ** 2 + (y - d.cy) ** 2 <= d.radius ** 2
        xc[inside] = d.material.x_c
        xp[inside] = d.material.x_p
    return xc, xp


def builtin_phantom(name, geom, materials=None):
    """Built-in phantom layouts: ``sim18`` and ``clutter``."""
    mats = materials if materials is not None else load_materials()
    half = 0.5 * geom.image_side * geom.pixel_pitch
    if name == "sim18":
        # water ring with aluminum at the center and six lighter materials around
        ring = Disc(0.0, 0.0, 0.90 * half, mats["water"])
        shapes = [ring, Disc(0.0, 0.0, 0.18 * half, mats["aluminum"])]
        satellites = ["polyethylene", "pmma", "graphite", "nylon", "ethanol", "delrin"]
        for k, mat in enumerate(satellites):
            ang = 2.0 * np.pi * k / 6.0
            shapes.append(Disc(0.55 * half * np.cos(ang), 0.55 * half * np.sin(ang),
                               0.14 * half, mats[mat]))
        return PhantomSpec(tuple(shapes), mats["vacuum"], geom)
    if name == "clutter":
        shapes = [
            Disc(0.0, 0.0, 0.92 * half, mats["water"]),
            Disc(-0.35 * half, 0.25 * half, 0.38 * half, mats["polyethylene"]),
            Disc(0.30 * half, 0.30 * half, 0.30 * half, mats["pmma"]),
            Disc(0.15 * half, -0.35 * half, 0.34 * half, mats["ethanol"]),
            Disc(-0.25 * half, -0.30 * half, 0.22 * half, mats["delrin"]),
            Disc(-0.40 * half, 0.45 * half, 0.07 * half, mats["iron"]),
            Disc(0.42 * half, -0.18 * half, 0.06 * half, mats["iron"]),
        ]
        return PhantomSpec(tuple(shapes), mats["vacuum"], geom)
    raise ValueError(f"unknown builtin phantom {name!r}")


def load_phantom_spec(path, geom, materials=None):
    """Phantom file: one ``disc cx cy r material`` per line (cm units)."""
    mats = materials if materials is not None else load_materials()
    shapes = []
    background = mats["vacuum"]
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "background":
            background = mats[parts[1]]
        elif parts[0] == "disc":
            cx, cy, r = map(float, parts[1:4])
            shapes.append(Disc(cx, cy, r, mats[parts[4]]))
        else:
            raise ValueError(f"unknown phantom directive {parts[0]!r}")
    return PhantomSpec(tuple(shapes), background, geom)


def _sample_poisson(lam, rng):
    """Versioned Poisson sampler: inversion below the cutoff, clamped Gaussian above."""
    lam = np.asarray(lam, dtype=float)
    out = np.zeros(lam.shape, dtype=np.int64)
    small = lam < POISSON_GAUSS_CUTOFF
    # draw order fixed: uniforms for the inversion branch, then normals
    u = rng.random(lam.shape)
    z = rng.standard_normal(lam.shape)
    if small.any():
        ls = lam[small]
        us = u[small]
        k = np.zeros(ls.shape, dtype=np.int64)
        p = np.exp(-ls)
        cdf = p.copy()
        pending = us > cdf
        # mean < 50 makes a few hundred terms astronomically safe
        for _ in range(512):
            if not pending.any():
                break
            k[pending] += 1
            p[pending] *= ls[pending] / k[pending]
            cdf[pending] += p[pending]
            pending = pending & (us > cdf)
        out[small] = k
    big = ~small
    if big.any():
        draw = np.rint(lam[big] + np.sqrt(lam[big]) * z[big])
        out[big] = np.maximum(draw, 0.0).astype(np.int64)
    return out


def simulate(basis_image, geom, spec_h, spec_l, photons_per_ray, seed=0,
             noiseless=False, counters=None):
    """Simulate dual-spectrum log projections with Poisson noise.

    Returns a dict with noisy measurements ``m_h``/``m_l``, their noiseless
    counterparts, photon-count weights and starved-ray flags. Weights are the
    drawn counts; rays with a zero draw are flagged and weighted zero.
    """
    if photons_per_ray <= 0:
        raise ValueError("photons_per_ray must be positive")
    x_c, x_p = basis_image
    a_c = projector.forward_project(x_c, geom, counters)
    a_p = projector.forward_project(x_p, geom, counters)
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    out = {"a_c": a_c, "a_p": a_p, "seed": int(seed),
           "sampler": POISSON_SAMPLER_VERSION}
    for tag, spec in (("h", spec_h), ("l", spec_l)):
        m0 = physics.forward_f_batch(a_c, a_p, spec).reshape(a_c.shape)
        if counters is not None:
            counters.add_fwd_model(1.0)
        out[f"m0_{tag}"] = m0
        if noiseless:
            out[f"m_{tag}"] = m0.copy()
            out[f"w_{tag}"] = np.full(m0.shape, float(photons_per_ray))
            out[f"flags_{tag}"] = np.zeros(m0.shape, dtype=bool)
        else:
            lam = photons_per_ray * np.exp(-m0)
            counts = _sample_poisson(lam, rng)
            starved = counts == 0
            safe = np.maximum(counts, 1)
            out[f"m_{tag}"] = np.log(photons_per_ray) - np.log(safe.astype(float))
            out[f"w_{tag}"] = np.where(starved, 0.0, counts.astype(float))
            out[f"flags_{tag}"] = starved
    return out
