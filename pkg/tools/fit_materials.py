#!/usr/bin/env python3
"""Generate src/dectsplit/data/materials.txt.

Fits Compton/photoelectric coefficients (x_c in cm^-1, x_p in keV^3 cm^-1)
to published mass-attenuation tables: mu(E) = x_c * f_kn(E) + x_p * E^-3,
least squares over the 30-130 keV rows. Compound tables are mixed from the
elemental ones by mass fraction. Run from the repo root:

    python3 tools/fit_materials.py
"""

from pathlib import Path

import numpy as np

from dectsplit.physics import klein_nishina

ENERGIES = np.array([30.0, 40.0, 50.0, 60.0, 80.0, 100.0])

# mass attenuation mu/rho [cm^2/g] at ENERGIES, from standard published
# photon cross-section tables
ELEMENTS = {
    "H": [0.3570, 0.3458, 0.3355, 0.3260, 0.3091, 0.2944],
    "C": [0.2562, 0.2076, 0.1871, 0.1753, 0.1610, 0.1514],
    "N": [0.2869, 0.2245, 0.1982, 0.1829, 0.1658, 0.1555],
    "O": [0.3779, 0.2585, 0.2132, 0.1907, 0.1678, 0.1551],
}

TABULATED = {
    # name: (density g/cm^3, mu/rho rows)
    "water": (1.000, [0.3756, 0.2683, 0.2269, 0.2059, 0.1837, 0.1707]),
    "aluminum": (2.699, [1.1280, 0.5685, 0.3681, 0.2778, 0.2018, 0.1704]),
    "iron": (7.874, [8.1760, 3.6290, 1.9580, 1.2050, 0.5952, 0.3717]),
    "pmma": (1.190, [0.3032, 0.2350, 0.2074, 0.1924, 0.1751, 0.1641]),
    "polyethylene": (0.940, [0.3607, 0.2714, 0.2396, 0.2224, 0.2028, 0.1903]),
    "graphite": (1.700, [0.2562, 0.2076, 0.1871, 0.1753, 0.1610, 0.1514]),
}

# compounds mixed from elemental tables: name -> (density, {element: mass fraction})
MIXTURES = {
    "nylon": (1.140, {"C": 72 / 113, "H": 11 / 113, "N": 14 / 113, "O": 16 / 113}),
    "ethanol": (0.789, {"C": 24 / 46, "H": 6 / 46, "O": 16 / 46}),
    "delrin": (1.410, {"C": 12 / 30, "H": 2 / 30, "O": 16 / 30}),
}


def fit(mu):
    basis = np.column_stack([klein_nishina(ENERGIES), ENERGIES ** -3.0])
    coef, *_ = np.linalg.lstsq(basis, mu, rcond=None)
    resid = basis @ coef - mu
    return coef, float(np.linalg.norm(resid) / np.linalg.norm(mu))


def main():
    rows = []
    for name, (rho, table) in TABULATED.items():
        mu = rho * np.asarray(table)
        (xc, xp), rel = fit(mu)
        rows.append((name, xc, xp, rel))
    for name, (rho, fractions) in MIXTURES.items():
        mu_rho = sum(f * np.asarray(ELEMENTS[el]) for el, f in fractions.items())
        (xc, xp), rel = fit(rho * mu_rho)
        rows.append((name, xc, xp, rel))
    rows.append(("vacuum", 0.0, 0.0, 0.0))

    out = Path(__file__).resolve().parent.parent / "src/dectsplit/data/materials.txt"
    lines = ["# material basis coefficients fitted over 30-130 keV",
             "# name x_c[cm^-1] x_p[keV^3 cm^-1]"]
    for name, xc, xp, rel in rows:
        lines.append(f"{name} {xc:.6g} {max(xp, 0.0):.6g}")
        print(f"{name:14s} x_c={xc:10.5f}  x_p={xp:12.1f}  fit-resid={rel:.3%}")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
