"""Pure-numpy fallback for the hot kernels; same signatures as numba_impl."""

import numpy as np

SATURATED_LOG = 746.0


def forward_project(img, cos_t, sin_t, det_count, det_pitch, pix_pitch):
    n = img.shape[0]
    n_ang = cos_t.shape[0]
    sino = np.zeros((n_ang, det_count))
    half_img = 0.5 * (n - 1)
    half_det = 0.5 * (det_count - 1)
    idx = np.arange(n) - half_img
    xg = idx[None, :] * pix_pitch          # column coordinate
    yg = -idx[:, None] * pix_pitch         # row coordinate, y axis up
    vals = img.ravel()
    for a in range(n_ang):
        m = max(abs(cos_t[a]), abs(sin_t[a]))
        # hat footprint of half-width pix_pitch*m on the detector, path
        # length pix_pitch/m per interpolation step
        wb = pix_pitch * m / det_pitch
        amp = pix_pitch / m
        t = ((xg * cos_t[a] + yg * sin_t[a]) / det_pitch + half_det).ravel()
        k_lo = np.ceil(t - wb).astype(np.int64)
        for o in range(int(np.ceil(2.0 * wb)) + 1):
            k = k_lo + o
            w = 1.0 - np.abs(t - k) / wb
            ok = (w > 0.0) & (k >= 0) & (k < det_count)
            np.add.at(sino[a], k[ok], vals[ok] * w[ok] * amp)
    return sino


def back_project(sino, image_side, cos_t, sin_t, det_pitch, pix_pitch):
    n = image_side
    det_count = sino.shape[1]
    half_img = 0.5 * (n - 1)
    half_det = 0.5 * (det_count - 1)
    idx = np.arange(n) - half_img
    xg = idx[None, :] * pix_pitch
    yg = -idx[:, None] * pix_pitch
    img = np.zeros((n, n))
    for a in range(cos_t.shape[0]):
        m = max(abs(cos_t[a]), abs(sin_t[a]))
        wb = pix_pitch * m / det_pitch
        amp = pix_pitch / m
        t = (xg * cos_t[a] + yg * sin_t[a]) / det_pitch + half_det
        k_lo = np.ceil(t - wb).astype(np.int64)
        row = sino[a]
        for o in range(int(np.ceil(2.0 * wb)) + 1):
            k = k_lo + o
            w = 1.0 - np.abs(t - k) / wb
            ok = (w > 0.0) & (k >= 0) & (k < det_count)
            img += np.where(ok, row[np.clip(k, 0, det_count - 1)] * w, 0.0) * amp
    return img


def interp_back_project(sino, image_side, cos_t, sin_t, det_pitch, pix_pitch):
    """Interpolating backprojection for FBP: unit weight sum at every position."""
    n = image_side
    det_count = sino.shape[1]
    half_img = 0.5 * (n - 1)
    half_det = 0.5 * (det_count - 1)
    idx = np.arange(n) - half_img
    xg = idx[None, :] * pix_pitch
    yg = -idx[:, None] * pix_pitch
    img = np.zeros((n, n))
    for a in range(cos_t.shape[0]):
        t = (xg * cos_t[a] + yg * sin_t[a]) / det_pitch + half_det
        k0 = np.floor(t).astype(np.int64)
        w = t - k0
        lo_ok = (k0 >= 0) & (k0 < det_count)
        hi_ok = (k0 + 1 >= 0) & (k0 + 1 < det_count)
        row = sino[a]
        img += np.where(lo_ok, row[np.clip(k0, 0, det_count - 1)] * (1.0 - w), 0.0)
        img += np.where(hi_ok, row[np.clip(k0 + 1, 0, det_count - 1)] * w, 0.0)
    return img


def _poly_batch(ac, ap, counts, fkn, fp, log_total):
    e = counts[None, :] * np.exp(-np.outer(ac, fkn) - np.outer(ap, fp))
    t = e.sum(axis=1)
    ok = t > 0.0
    safe = np.where(ok, t, 1.0)
    m = np.where(ok, log_total - np.log(safe), log_total + SATURATED_LOG)
    gc = np.where(ok, (e @ fkn) / safe, 0.0)
    gp = np.where(ok, (e @ fp) / safe, 0.0)
    return m, gc, gp


def poly_forward(a_c, a_p, counts, fkn, fp):
    m, _, _ = _poly_batch(a_c, a_p, counts, fkn, fp, np.log(counts.sum()))
    return m


def poly_forward_grad(a_c, a_p, counts, fkn, fp):
    return _poly_batch(a_c, a_p, counts, fkn, fp, np.log(counts.sum()))


def _objective(ac, ap, mh, ml, wh, wl, rc, rp, rho_c, rho_p, sh, sl):
    fh, _, _ = _poly_batch(ac, ap, *sh)
    fl, _, _ = _poly_batch(ac, ap, *sl)
    return 0.5 * (wh * (fh - mh) ** 2 + wl * (fl - ml) ** 2
                  + rho_c * (ac - rc) ** 2 + rho_p * (ap - rp) ** 2)


def lm_decompose(m_h, m_l, w_h, w_l, anchor_c, anchor_p, rho_c, rho_p,
                 counts_h, fkn_h, fp_h, counts_l, fkn_l, fp_l,
                 init_c, init_p, nonneg, lam0, max_iter, step_tol, grad_tol):
    nr = m_h.shape[0]
    sh = (counts_h, fkn_h, fp_h, np.log(counts_h.sum()))
    sl = (counts_l, fkn_l, fp_l, np.log(counts_l.sum()))
    ac = init_c.astype(float).copy()
    ap = init_p.astype(float).copy()
    if nonneg:
        np.maximum(ac, 0.0, out=ac)
        np.maximum(ap, 0.0, out=ap)
    lam = np.full(nr, lam0)
    flags = np.ones(nr, dtype=np.int8)
    active = np.ones(nr, dtype=bool)
    fresh = np.ones(nr, dtype=bool)
    evals = np.zeros(nr)
    obj_cur = np.zeros(nr)
    g0 = np.zeros(nr)
    g1 = np.zeros(nr)
    h00 = np.zeros(nr)
    h01 = np.zeros(nr)
    h11 = np.zeros(nr)
    for _ in range(max_iter):
        if not active.any():
            break
        upd = active & fresh
        if upd.any():
            fh, ghc, ghp = _poly_batch(ac[upd], ap[upd], *sh)
            fl, glc, glp = _poly_batch(ac[upd], ap[upd], *sl)
            evals[upd] += 2.0
            eh = fh - m_h[upd]
            el = fl - m_l[upd]
            dc = ac[upd] - anchor_c[upd]
            dp = ap[upd] - anchor_p[upd]
            wh = w_h[upd]
            wl = w_l[upd]
            obj_cur[upd] = 0.5 * (wh * eh ** 2 + wl * el ** 2
                                  + rho_c * dc ** 2 + rho_p * dp ** 2)
            g0[upd] = wh * eh * ghc + wl * el * glc + rho_c * dc
            g1[upd] = wh * eh * ghp + wl * el * glp + rho_p * dp
            h00[upd] = wh * ghc ** 2 + wl * glc ** 2 + rho_c
            h11[upd] = wh * ghp ** 2 + wl * glp ** 2 + rho_p
            h01[upd] = wh * ghc * ghp + wl * glc * glp
            fresh[upd] = False
        done = active & (np.hypot(g0, g1) <= grad_tol * (1.0 + obj_cur))
        flags[done] = 0
        active &= ~done
        if not active.any():
            break
        d00 = h00 + lam * np.maximum(h00, 1e-30)
        d11 = h11 + lam * np.maximum(h11, 1e-30)
        det = d00 * d11 - h01 ** 2
        bad = active & (det <= 0.0)
        lam[bad] *= 10.0
        trial = active & (det > 0.0)
        if not trial.any():
            continue
        dt = det[trial]
        sc = (-g0[trial] * d11[trial] + g1[trial] * h01[trial]) / dt
        sp = (-g1[trial] * d00[trial] + g0[trial] * h01[trial]) / dt
        nc = ac[trial] + sc
        npp = ap[trial] + sp
        if nonneg:
            np.maximum(nc, 0.0, out=nc)
            np.maximum(npp, 0.0, out=npp)
        obj_new = _objective(nc, npp, m_h[trial], m_l[trial], w_h[trial], w_l[trial],
                             anchor_c[trial], anchor_p[trial], rho_c, rho_p, sh, sl)
        evals[trial] += 2.0
        acc = obj_new <= obj_cur[trial]
        t_idx = np.flatnonzero(trial)
        acc_idx = t_idx[acc]
        rej_idx = t_idx[~acc]
        step = np.hypot(nc[acc] - ac[acc_idx], npp[acc] - ap[acc_idx])
        ac[acc_idx] = nc[acc]
        ap[acc_idx] = npp[acc]
        lam[acc_idx] = np.maximum(lam[acc_idx] / 10.0, 1e-12)
        fresh[acc_idx] = True
        small = acc_idx[step < step_tol]
        flags[small] = 0
        active[small] = False
        lam[rej_idx] *= 10.0
        stuck = rej_idx[lam[rej_idx] > 1e14]
        active[stuck] = False
    if nonneg:
        zero = np.zeros(nr)
        obj_zero = _objective(zero, zero, m_h, m_l, w_h, w_l,
                              anchor_c, anchor_p, rho_c, rho_p, sh, sl)
        obj_fin = _objective(ac, ap, m_h, m_l, w_h, w_l,
                             anchor_c, anchor_p, rho_c, rho_p, sh, sl)
        evals += 4.0
        worse = obj_zero < obj_fin
        ac[worse] = 0.0
        ap[worse] = 0.0
    return ac, ap, flags, float(evals.sum())
