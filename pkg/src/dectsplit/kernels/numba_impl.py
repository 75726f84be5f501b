"""Numba-compiled hot kernels (projection, polychromatic forward model, per-ray LM)."""

import numpy as np
from numba import njit, prange

# Log-projection cap used when every energy bin underflows to zero
# transmission; keeps the per-ray solvers finite instead of producing inf.
SATURATED_LOG = 746.0


@njit(cache=True, parallel=True)
def forward_project(img, cos_t, sin_t, det_count, det_pitch, pix_pitch):
    n = img.shape[0]
    n_ang = cos_t.shape[0]
    sino = np.zeros((n_ang, det_count))
    half_img = 0.5 * (n - 1)
    half_det = 0.5 * (det_count - 1)
    for a in prange(n_ang):
        c = cos_t[a]
        s = sin_t[a]
        m = max(abs(c), abs(s))
        # interpolation along the axis most transverse to the ray: the pixel
        # footprint on the detector is a hat of half-width pix_pitch*m and the
        # intersection length per interpolation step is pix_pitch/m
        wb = pix_pitch * m / det_pitch
        amp = pix_pitch / m
        for i in range(n):
            y = (half_img - i) * pix_pitch
            for j in range(n):
                v = img[i, j]
                if v == 0.0:
                    continue
                x = (j - half_img) * pix_pitch
                t = (x * c + y * s) / det_pitch + half_det
                k0 = int(np.ceil(t - wb))
                k1 = int(np.floor(t + wb))
                if k0 < 0:
                    k0 = 0
                if k1 > det_count - 1:
                    k1 = det_count - 1
                for k in range(k0, k1 + 1):
                    w = 1.0 - abs(t - k) / wb
                    if w > 0.0:
                        sino[a, k] += v * w * amp
    return sino


@njit(cache=True, parallel=True)
def back_project(sino, image_side, cos_t, sin_t, det_pitch, pix_pitch):
    n = image_side
    n_ang = cos_t.shape[0]
    det_count = sino.shape[1]
    img = np.zeros((n, n))
    half_img = 0.5 * (n - 1)
    half_det = 0.5 * (det_count - 1)
    for i in prange(n):
        y = (half_img - i) * pix_pitch
        for j in range(n):
            x = (j - half_img) * pix_pitch
            acc = 0.0
            for a in range(n_ang):
                c = cos_t[a]
                s = sin_t[a]
                m = max(abs(c), abs(s))
                wb = pix_pitch * m / det_pitch
                amp = pix_pitch / m
                t = (x * c + y * s) / det_pitch + half_det
                k0 = int(np.ceil(t - wb))
                k1 = int(np.floor(t + wb))
                if k0 < 0:
                    k0 = 0
                if k1 > det_count - 1:
                    k1 = det_count - 1
                for k in range(k0, k1 + 1):
                    w = 1.0 - abs(t - k) / wb
                    if w > 0.0:
                        acc += sino[a, k] * w * amp
            img[i, j] = acc
    return img


@njit(cache=True, parallel=True)
def interp_back_project(sino, image_side, cos_t, sin_t, det_pitch, pix_pitch):
    """Interpolating backprojection for FBP: unit weight sum at every position.

    Unlike the exact transpose above, this samples each filtered row by
    linear interpolation between the two neighboring bins, which avoids the
    detector-phase modulation of the narrow adjoint footprint.
    """
    n = image_side
    n_ang = cos_t.shape[0]
    det_count = sino.shape[1]
    img = np.zeros((n, n))
    half_img = 0.5 * (n - 1)
    half_det = 0.5 * (det_count - 1)
    for i in prange(n):
        y = (half_img - i) * pix_pitch
        for j in range(n):
            x = (j - half_img) * pix_pitch
            acc = 0.0
            for a in range(n_ang):
                t = (x * cos_t[a] + y * sin_t[a]) / det_pitch + half_det
                k0 = int(np.floor(t))
                w = t - k0
                if 0 <= k0 < det_count:
                    acc += sino[a, k0] * (1.0 - w)
                if 0 <= k0 + 1 < det_count:
                    acc += sino[a, k0 + 1] * w
            img[i, j] = acc
    return img


@njit(cache=True, inline="always")
def _ray_poly(ac, ap, counts, fkn, fp, total, log_total):
    """Log projection and its two partials for one ray under one spectrum."""
    t = 0.0
    tc = 0.0
    tp = 0.0
    for b in range(counts.shape[0]):
        e = counts[b] * np.exp(-fkn[b] * ac - fp[b] * ap)
        t += e
        tc += e * fkn[b]
        tp += e * fp[b]
    if t <= 0.0:
        return log_total + SATURATED_LOG, 0.0, 0.0
    return log_total - np.log(t), tc / t, tp / t


@njit(cache=True, parallel=True)
def poly_forward(a_c, a_p, counts, fkn, fp):
    m = np.empty(a_c.shape[0])
    total = counts.sum()
    log_total = np.log(total)
    for r in prange(a_c.shape[0]):
        v, _, _ = _ray_poly(a_c[r], a_p[r], counts, fkn, fp, total, log_total)
        m[r] = v
    return m


@njit(cache=True, parallel=True)
def poly_forward_grad(a_c, a_p, counts, fkn, fp):
    nr = a_c.shape[0]
    m = np.empty(nr)
    gc = np.empty(nr)
    gp = np.empty(nr)
    total = counts.sum()
    log_total = np.log(total)
    for r in prange(nr):
        v, dc, dp = _ray_poly(a_c[r], a_p[r], counts, fkn, fp, total, log_total)
        m[r] = v
        gc[r] = dc
        gp[r] = dp
    return m, gc, gp


@njit(cache=True, inline="always")
def _ray_objective(ac, ap, mh, ml, wh, wl, rc, rp, rho_c, rho_p,
                   ch, kh, ph, th, lth, cl, kl, pl, tl, ltl):
    fh, _, _ = _ray_poly(ac, ap, ch, kh, ph, th, lth)
    fl, _, _ = _ray_poly(ac, ap, cl, kl, pl, tl, ltl)
    eh = fh - mh
    el = fl - ml
    dc = ac - rc
    dp = ap - rp
    return 0.5 * (wh * eh * eh + wl * el * el + rho_c * dc * dc + rho_p * dp * dp)


@njit(cache=True, parallel=True)
def lm_decompose(m_h, m_l, w_h, w_l, anchor_c, anchor_p, rho_c, rho_p,
                 counts_h, fkn_h, fp_h, counts_l, fkn_l, fp_l,
                 init_c, init_p, nonneg, lam0, max_iter, step_tol, grad_tol):
    nr = m_h.shape[0]
    out_c = np.empty(nr)
    out_p = np.empty(nr)
    flags = np.zeros(nr, dtype=np.int8)
    evals = np.zeros(nr)
    th = counts_h.sum()
    tl = counts_l.sum()
    lth = np.log(th)
    ltl = np.log(tl)
    for r in prange(nr):
        ac = init_c[r]
        ap = init_p[r]
        if nonneg:
            ac = max(ac, 0.0)
            ap = max(ap, 0.0)
        mh = m_h[r]
        ml = m_l[r]
        wh = w_h[r]
        wl = w_l[r]
        rc = anchor_c[r]
        rp = anchor_p[r]
        lam = lam0
        n_eval = 0.0
        flag = np.int8(1)
        fresh = True
        # carried between trials while the point is unchanged
        obj_cur = 0.0
        g0 = 0.0
        g1 = 0.0
        h00 = 0.0
        h01 = 0.0
        h11 = 0.0
        for _ in range(max_iter):
            if fresh:
                fh, ghc, ghp = _ray_poly(ac, ap, counts_h, fkn_h, fp_h, th, lth)
                fl, glc, glp = _ray_poly(ac, ap, counts_l, fkn_l, fp_l, tl, ltl)
                n_eval += 2.0
                eh = fh - mh
                el = fl - ml
                dc = ac - rc
                dp = ap - rp
                obj_cur = 0.5 * (wh * eh * eh + wl * el * el
                                 + rho_c * dc * dc + rho_p * dp * dp)
                g0 = wh * eh * ghc + wl * el * glc + rho_c * dc
                g1 = wh * eh * ghp + wl * el * glp + rho_p * dp
                h00 = wh * ghc * ghc + wl * glc * glc + rho_c
                h11 = wh * ghp * ghp + wl * glp * glp + rho_p
                h01 = wh * ghc * ghp + wl * glc * glp
                fresh = False
            if np.sqrt(g0 * g0 + g1 * g1) <= grad_tol * (1.0 + obj_cur):
                flag = np.int8(0)
                break
            d00 = h00 + lam * max(h00, 1e-30)
            d11 = h11 + lam * max(h11, 1e-30)
            det = d00 * d11 - h01 * h01
            if det <= 0.0:
                lam *= 10.0
                continue
            sc = (-g0 * d11 + g1 * h01) / det
            sp = (-g1 * d00 + g0 * h01) / det
            nc = ac + sc
            npp = ap + sp
            if nonneg:
                nc = max(nc, 0.0)
                npp = max(npp, 0.0)
            obj_new = _ray_objective(nc, npp, mh, ml, wh, wl, rc, rp,
                                     rho_c, rho_p, counts_h, fkn_h, fp_h, th, lth,
                                     counts_l, fkn_l, fp_l, tl, ltl)
            n_eval += 2.0
            if obj_new <= obj_cur:
                step = np.sqrt((nc - ac) ** 2 + (npp - ap) ** 2)
                ac = nc
                ap = npp
                lam = max(lam / 10.0, 1e-12)
                fresh = True
                if step < step_tol:
                    flag = np.int8(0)
                    break
            else:
                lam *= 10.0
                if lam > 1e14:
                    break
        if nonneg:
            # never return anything worse than the trivial zero decomposition
            obj_zero = _ray_objective(0.0, 0.0, mh, ml, wh, wl, rc, rp,
                                      rho_c, rho_p, counts_h, fkn_h, fp_h, th, lth,
                                      counts_l, fkn_l, fp_l, tl, ltl)
            obj_fin = _ray_objective(ac, ap, mh, ml, wh, wl, rc, rp,
                                     rho_c, rho_p, counts_h, fkn_h, fp_h, th, lth,
                                     counts_l, fkn_l, fp_l, tl, ltl)
            n_eval += 4.0
            if obj_zero < obj_fin:
                ac = 0.0
                ap = 0.0
        out_c[r] = ac
        out_p[r] = ap
        flags[r] = flag
        evals[r] = n_eval
    return out_c, out_p, flags, evals.sum()
