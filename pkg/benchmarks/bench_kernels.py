"""Timing comparison of the compiled kernels against the numpy fallback.

Runs each hot kernel through the active backend (numba when available) and
through the pure-numpy implementation, and prints per-call times plus the
speedup. Invoke as a script:

    python3 benchmarks/bench_kernels.py --size 128 --repeats 5
"""

import argparse
import time

import numpy as np

from dectsplit import kernels, physics
from dectsplit.kernels import numpy_impl
from dectsplit.projector import ScanGeometry


def best_of(fn, repeats):
    """Best wall time over several calls, in milliseconds."""
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return min(times)


def build_cases(size, n_rays):
    geom = ScanGeometry.uniform(size, size + size // 2, int(1.45 * size) | 1)
    cos_t, sin_t = geom._trig
    rng = np.random.default_rng(0)
    img = rng.standard_normal((size, size))
    sino = rng.standard_normal((geom.n_angles, geom.detector_count))
    spec_h = physics.triangle_spectrum(130.0)
    spec_l = physics.triangle_spectrum(95.0)
    a_c = rng.uniform(0.0, 2.0, n_rays)
    a_p = rng.uniform(0.0, 2e5, n_rays)
    m_h = physics.forward_f_batch(a_c, a_p, spec_h)
    m_l = physics.forward_f_batch(a_c, a_p, spec_l)
    w = np.full(n_rays, 1e5)
    zeros = np.zeros(n_rays)

    proj_args = (img, cos_t, sin_t, geom.detector_count,
                 geom.detector_pitch, geom.pixel_pitch)
    back_args = (sino, size, cos_t, sin_t,
                 geom.detector_pitch, geom.pixel_pitch)
    poly_args = (a_c, a_p, spec_h.counts, spec_h.fkn, spec_h.fp)
    lm_args = (m_h, m_l, w, w, zeros, zeros, 0.0, 0.0,
               spec_h.counts, spec_h.fkn, spec_h.fp,
               spec_l.counts, spec_l.fkn, spec_l.fp,
               a_c + 0.1, a_p + 10.0, True, 1e-3, 20, 1e-10, 1e-9)
    return [("forward_project", "forward_project", proj_args),
            ("back_project", "back_project", back_args),
            ("poly_forward", "poly_forward", poly_args),
            ("lm_decompose", "lm_decompose", lm_args)]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--size", type=int, default=128,
                        help="image side in pixels (default 128)")
    parser.add_argument("--rays", type=int, default=20000,
                        help="ray count for the per-ray kernels")
    parser.add_argument("--repeats", type=int, default=5,
                        help="calls per kernel; best time is reported")
    args = parser.parse_args(argv)

    cases = build_cases(args.size, args.rays)
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':<18} {'active ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for label, name, call_args in cases:
        fast = getattr(kernels, name)
        slow = getattr(numpy_impl, name)
        fast(*call_args)  # trigger compilation outside the timed region
        t_fast = best_of(lambda: fast(*call_args), args.repeats)
        t_slow = best_of(lambda: slow(*call_args), args.repeats)
        print(f"{label:<18} {t_fast:>10.2f} {t_slow:>10.2f} "
              f"{t_slow / t_fast:>7.1f}x")


if __name__ == "__main__":
    main()
