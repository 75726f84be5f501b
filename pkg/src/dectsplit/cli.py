"""Command-line driver: simulate measurements, reconstruct, evaluate, export.

A dataset directory (``--out``) ties the subcommands together: ``simulate``
populates it, ``recon`` reads the measurement files back and writes images
and telemetry next to them, ``metrics`` compares image files, and
``precond-dump`` exports the circulant preconditioner for inspection.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import admm, decompose, fileio, kernels, linsolve, physics, phantom, projector
from .metrics import error_metric

#: Ratio between the photoelectric and Compton TV weights: the photoelectric
#: basis carries roughly 3e4-fold larger pixel values, so a single --lambda
#: is interpreted in Compton units and scaled up for the other basis.
PE_LAMBDA_RATIO = 3.0e4

METHODS = ("cdm-fbp", "admm-lm", "admm-cg", "admm-pcg")


def parse_geometry(text):
    """desk | paper | WxH:A:D (square images only, W must equal H)."""
    if text == "desk":
        return projector.ScanGeometry.desk()
    if text == "paper":
        return projector.ScanGeometry.paper()
    try:
        size, n_angles, n_det = text.split(":")
        width, height = size.lower().split("x")
        if int(width) != int(height):
            raise ValueError("only square images are supported")
        return projector.ScanGeometry.uniform(int(width), int(n_angles), int(n_det))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad geometry {text!r}: {exc}") from exc


def _resolve_threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get("DECT_THREADS")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise SystemExit(f"DECT_THREADS must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dectsplit",
        description="Dual-energy CT basis-material reconstruction")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--out", required=out_required, help="dataset directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: DECT_THREADS or all cores)")

    p_sim = sub.add_parser("simulate", help="simulate dual-spectrum measurements")
    p_sim.add_argument("--geometry", type=parse_geometry, default="desk")
    p_sim.add_argument("--phantom", default="sim18",
                       help="sim18 | clutter | path to a phantom spec file")
    p_sim.add_argument("--photons", type=float, default=1e5)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--noiseless", action="store_true",
                       help="skip Poisson sampling; weights become the photon budget")
    p_sim.add_argument("--mono", default=None, metavar="EH,EL",
                       help="replace the tube spectra with monochromatic lines (keV)")
    common(p_sim)

    p_rec = sub.add_parser("recon", help="reconstruct basis images")
    p_rec.add_argument("--method", choices=METHODS, required=True)
    p_rec.add_argument("--cg-iters", type=int, default=5, dest="cg_iters")
    p_rec.add_argument("--lm-iters", type=int, default=10, dest="lm_iters")
    p_rec.add_argument("--lambda", type=float, default=1e-5, dest="lam",
                       help="TV weight in Compton units; the photoelectric "
                            f"weight is this times {PE_LAMBDA_RATIO:g}")
    p_rec.add_argument("--rho0", type=float, default=1e-3)
    p_rec.add_argument("--max-iters", type=int, default=100, dest="max_iters")
    p_rec.add_argument("--tol", type=float, default=1e-4)
    p_rec.add_argument("--fail-threshold", type=float, default=1.0,
                       help="fraction of rays allowed to stop on the LM "
                            "iteration cap in the final decomposition pass "
                            "(the outer loop revisits every ray, so the "
                            "default accepts all)")
    common(p_rec)

    p_met = sub.add_parser("metrics", help="normalized l2 error between images")
    p_met.add_argument("image", help="reconstructed image (.raw)")
    p_met.add_argument("reference", help="reference image (.raw)")
    p_met.add_argument("--roi", default=None,
                       help="raw image mask; nonzero pixels define the ROI")
    p_met.add_argument("--threads", type=int, default=None, help=argparse.SUPPRESS)

    p_pre = sub.add_parser("precond-dump",
                           help="export preconditioner gains and PSF")
    p_pre.add_argument("--geometry", type=parse_geometry, default="desk")
    common(p_pre)
    return parser


def _load_spectra(out):
    spec_h = physics.load_spectrum(out / "spectrum_h.txt")
    spec_l = physics.load_spectrum(out / "spectrum_l.txt")
    return spec_h, spec_l


def _geometry_from_dataset(out):
    sino, header = fileio.read_raw(out / "sino_m_h.raw")
    angles = fileio.read_angles(out / header["angles_file"])
    img, img_header = fileio.read_raw(out / "phantom_c.raw")
    return projector.ScanGeometry(
        image_side=img_header["rows"], pixel_pitch=img_header["pitch_cm"],
        angles=angles, detector_count=header["cols"],
        detector_pitch=header["pitch_cm"])


def cmd_simulate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    geom = args.geometry
    if args.phantom in ("sim18", "clutter"):
        spec = phantom.builtin_phantom(args.phantom, geom)
    else:
        spec = phantom.load_phantom_spec(args.phantom, geom)
    x_c, x_p = phantom.rasterize(spec)
    if args.mono:
        try:
            e_h, e_l = (float(v) for v in args.mono.split(","))
        except ValueError as exc:
            raise SystemExit(f"--mono expects EH,EL in keV, got {args.mono!r}") from exc
        spec_h = physics.Spectrum.monochromatic(e_h, args.photons)
        spec_l = physics.Spectrum.monochromatic(e_l, args.photons)
    else:
        spec_h, spec_l = phantom.default_spectra()
    sim = phantom.simulate((x_c, x_p), geom, spec_h, spec_l, args.photons,
                           seed=args.seed, noiseless=args.noiseless)

    fileio.write_angles(out / "angles.txt", geom.angles)
    pitch = geom.pixel_pitch
    fileio.write_raw(out / "phantom_c.raw", x_c, "image", pitch)
    fileio.write_raw(out / "phantom_p.raw", x_p, "image", pitch)
    for tag in ("h", "l"):
        for stem, key in ((f"sino_m0_{tag}", f"m0_{tag}"),
                          (f"sino_m_{tag}", f"m_{tag}"),
                          (f"weights_{tag}", f"w_{tag}")):
            fileio.write_raw(out / f"{stem}.raw", sim[key], "sinogram",
                             geom.detector_pitch, angles_file="angles.txt")
    physics.save_spectrum(spec_h, out / "spectrum_h.txt", comment="high spectrum")
    physics.save_spectrum(spec_l, out / "spectrum_l.txt", comment="low spectrum")

    starved = int(sim["flags_h"].sum() + sim["flags_l"].sum())
    manifest = [
        f"phantom {args.phantom}",
        f"image_side {geom.image_side}",
        f"n_angles {geom.n_angles}",
        f"detector_count {geom.detector_count}",
        f"pixel_pitch_cm {geom.pixel_pitch:.9g}",
        f"detector_pitch_cm {geom.detector_pitch:.9g}",
        f"photons {args.photons:.9g}",
        f"seed {args.seed}",
        f"noiseless {int(args.noiseless)}",
        f"spectra {'mono:' + args.mono if args.mono else 'default'}",
        f"poisson_sampler {phantom.POISSON_SAMPLER_VERSION}",
        f"starved_rays {starved}",
    ]
    (out / "manifest.txt").write_text("\n".join(manifest) + "\n")
    print(f"wrote dataset to {out} ({geom.image_side}x{geom.image_side}, "
          f"{geom.n_angles}x{geom.detector_count} rays, {starved} starved)")
    return 0


def _pgm_preview(path, image):
    fileio.write_pgm16(path, image)


def cmd_recon(args):
    out = Path(args.out)
    for required in ("sino_m_h.raw", "sino_m_l.raw", "weights_h.raw",
                     "weights_l.raw", "spectrum_h.txt", "spectrum_l.txt"):
        if not (out / required).exists():
            raise SystemExit(f"missing input {out / required}; run simulate first")
    geom = _geometry_from_dataset(out)
    spec_h, spec_l = _load_spectra(out)
    m_h, _ = fileio.read_raw(out / "sino_m_h.raw")
    m_l, _ = fileio.read_raw(out / "sino_m_l.raw")
    w_h, _ = fileio.read_raw(out / "weights_h.raw")
    w_l, _ = fileio.read_raw(out / "weights_l.raw")
    reference = None
    if (out / "phantom_c.raw").exists():
        reference = (fileio.read_raw(out / "phantom_c.raw")[0],
                     fileio.read_raw(out / "phantom_p.raw")[0])

    counters = projector.OpCounters()
    failed_fraction = 0.0
    if args.method == "cdm-fbp":
        a_c, a_p, report = decompose.decompose_all(
            m_h, m_l, w_h, w_l, spec_h, spec_l, mode="cdm", counters=counters)
        x_c = projector.fbp(a_c, geom, counters)
        x_p = projector.fbp(a_p, geom, counters)
        records = []
        failed_fraction = report.n_failed / report.n_rays
    else:
        config = admm.AdmmConfig(
            lam_c=args.lam, lam_p=args.lam * PE_LAMBDA_RATIO,
            rho0=args.rho0, cg_iters=args.cg_iters, lm_iters=args.lm_iters,
            max_iters=args.max_iters, tol=args.tol,
            precondition=args.method == "admm-pcg",
            method="baseline-lm" if args.method == "admm-lm" else "proposed")
        (x_c, x_p), records = admm.run(
            config, (m_h, m_l), (w_h, w_l), spec_h, spec_l, geom,
            reference=reference, counters=counters)
        if records and geom.n_rays > 0:
            failed_fraction = records[-1].ray_failures / geom.n_rays

    fileio.write_raw(out / "x_c.raw", x_c, "image", geom.pixel_pitch)
    fileio.write_raw(out / "x_p.raw", x_p, "image", geom.pixel_pitch)
    _pgm_preview(out / "x_c.pgm", x_c)
    _pgm_preview(out / "x_p.pgm", x_p)
    if records:
        admm.write_telemetry(records, out / "telemetry.csv")
    if reference is not None:
        print(f"e(x_c) = {error_metric(x_c, reference[0]):.2f} dB, "
              f"e(x_p) = {error_metric(x_p, reference[1]):.2f} dB")
    snap = counters.snapshot()
    print(f"{args.method}: {len(records) if records else 0} iterations, "
          f"nR={snap['n_forward']} nRt={snap['n_backward']} "
          f"nf={snap['n_fwd_model']:.1f}")
    if failed_fraction > args.fail_threshold:
        print(f"unconverged rays: {failed_fraction:.1%} exceeds "
              f"threshold {args.fail_threshold:.1%}", file=sys.stderr)
        return 1
    return 0


def cmd_metrics(args):
    image, _ = fileio.read_raw(args.image)
    reference, _ = fileio.read_raw(args.reference)
    roi = None
    if args.roi is not None:
        roi_img, _ = fileio.read_raw(args.roi)
        roi = roi_img != 0.0
    value = error_metric(image, reference, roi=roi)
    print(f"{'-inf' if value == float('-inf') else f'{value:.4f}'} dB")
    return 0


def cmd_precond_dump(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    geom = args.geometry
    sys_op = linsolve.StackedSystem(geom)
    psf = linsolve.normal_psf(sys_op)
    prec = linsolve.build_preconditioner(sys_op)
    fileio.write_raw(out / "psf.raw", psf, "psf", geom.pixel_pitch)
    fileio.write_raw(out / "gains.raw", prec.gains, "gains", geom.pixel_pitch)
    _pgm_preview(out / "psf.pgm", psf)
    _pgm_preview(out / "gains.pgm", prec.gains)
    print(f"wrote psf.raw and gains.raw to {out}")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command != "metrics":
        kernels.set_num_threads(_resolve_threads(args))
    handlers = {"simulate": cmd_simulate, "recon": cmd_recon,
                "metrics": cmd_metrics, "precond-dump": cmd_precond_dump}
    try:
        return handlers[args.command](args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
