# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: the message-passing iteration loop and the
weighted-Gram log-determinant batch used by the capacity L1 pair sum.

Both mirror the pure-numpy reference paths in detect.py / capacity.py;
parity is asserted by the test suite to 1e-9.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, M_PI, exp, fabs, log, sqrt

cnp.import_array()

ctypedef double complex dcomplex

DEF PHI_DECONV = 0
DEF PHI_FFT = 1
DEF PHI_GAUSS = 2

cdef double VAR_FLOOR = 1e-12
cdef double PHI_MASS_TOL = 1e-6


# ---------------------------------------------------------------- FFT helpers

cdef void _fft_inplace(dcomplex* a, int n, bint inverse) noexcept nogil:
    """Iterative radix-2 complex FFT (n a power of two); unscaled."""
    cdef int i, j, bit, length, half, k
    cdef dcomplex w, wl, t, u
    cdef double ang
    j = 0
    for i in range(1, n):
        bit = n >> 1
        while j & bit:
            j ^= bit
            bit >>= 1
        j |= bit
        if i < j:
            t = a[i]; a[i] = a[j]; a[j] = t
    length = 2
    while length <= n:
        ang = (2.0 if inverse else -2.0) * M_PI / length
        wl = cos_sin(ang)
        half = length >> 1
        i = 0
        while i < n:
            w = 1.0 + 0.0j
            for k in range(half):
                u = a[i + k]
                t = a[i + k + half] * w
                a[i + k] = u + t
                a[i + k + half] = u - t
                w = w * wl
            i += length
        length <<= 1


cdef extern from "math.h":
    double cos(double) nogil
    double sin(double) nogil


cdef inline dcomplex cos_sin(double ang) noexcept nogil:
    return cos(ang) + 1j * sin(ang)


cdef inline int _next_pow2(int x) noexcept nogil:
    cdef int p = 1
    while p < x:
        p <<= 1
    return p


# ------------------------------------------------------------- phi techniques

cdef void _full_convolution(double[:, ::1] q, double* out, int n) noexcept nogil:
    """out[0..n] = pmf of the sum of all n Bernoullis (product polynomial)."""
    cdef int i, j
    out[0] = 1.0
    for j in range(1, n + 1):
        out[j] = 0.0
    for i in range(n):
        out[i + 1] = out[i] * q[i, 1]
        for j in range(i, 0, -1):
            out[j] = out[j] * q[i, 0] + out[j - 1] * q[i, 1]
        out[0] = out[0] * q[i, 0]


cdef void _convolution_without(double[:, ::1] q, int skip, double* out, int n) noexcept nogil:
    """out[0..n-1] = pmf of the activity sum of all antennas except ``skip``."""
    cdef int i, j, used = 0
    out[0] = 1.0
    for j in range(1, n):
        out[j] = 0.0
    for i in range(n):
        if i == skip:
            continue
        out[used + 1] = out[used] * q[i, 1]
        for j in range(used, 0, -1):
            out[j] = out[j] * q[i, 0] + out[j - 1] * q[i, 1]
        out[0] = out[0] * q[i, 0]
        used += 1


cdef bint _phi_deconv(double[:, ::1] q, double[:, ::1] phi, double* phi0, int n) noexcept nogil:
    """Deflation of the full convolution; returns False on unstable masses."""
    cdef int i, j
    cdef double c, d, acc
    cdef bint ok = True
    _full_convolution(q, phi0, n)
    for i in range(n):
        c = q[i, 0]
        d = q[i, 1]
        if c >= d:
            acc = 0.0
            for j in range(n):
                acc = (phi0[j] - d * acc) / c
                phi[i, j] = acc
        else:
            acc = 0.0
            for j in range(n - 1, -1, -1):
                acc = (phi0[j + 1] - c * acc) / d
                phi[i, j] = acc
    for i in range(n):
        for j in range(n):
            if phi[i, j] < -PHI_MASS_TOL or phi[i, j] > 1.0 + PHI_MASS_TOL:
                ok = False
    return ok


cdef void _phi_fft(double[:, ::1] q, double[:, ::1] phi, dcomplex* qf,
                   dcomplex* prod, dcomplex* work, int n) noexcept nogil:
    """Transform-domain division with a small-bin guard, clamp + renormalize."""
    cdef int size = _next_pow2(n + 1)
    cdef int i, k
    cdef double mag, rowsum
    for i in range(n):
        for k in range(size):
            work[k] = 0.0
        work[0] = q[i, 0]
        work[1] = q[i, 1]
        _fft_inplace(work, size, False)
        for k in range(size):
            qf[i * size + k] = work[k]
    for k in range(size):
        prod[k] = 1.0 + 0.0j
    for i in range(n):
        for k in range(size):
            prod[k] = prod[k] * qf[i * size + k]
    for i in range(n):
        mag = INFINITY
        for k in range(size):
            if abs(qf[i * size + k]) < mag:
                mag = abs(qf[i * size + k])
        if mag < 1e-12:
            _convolution_without(q, i, &phi[i, 0], n)
        else:
            for k in range(size):
                work[k] = prod[k] / qf[i * size + k]
            _fft_inplace(work, size, True)
            for k in range(n):
                phi[i, k] = work[k].real / size
        rowsum = 0.0
        for k in range(n):
            if phi[i, k] < 0.0:
                phi[i, k] = 0.0
            rowsum += phi[i, k]
        for k in range(n):
            phi[i, k] /= rowsum


cdef int _update_u(double[:, ::1] q, double[:, ::1] u, double[:, ::1] phi,
                   double* phi0, dcomplex* qf, dcomplex* prod, dcomplex* work,
                   int n, int r, int method) noexcept nogil:
    """u_i from phi_i evaluated at R-1 / R; returns 1 when deconv fell back."""
    cdef int i
    cdef int fallback = 0
    cdef double t1, t2, mean, var, norm, a1, a0, tot
    if method == PHI_GAUSS:
        t1 = 0.0
        t2 = 0.0
        for i in range(n):
            t1 += q[i, 1]
            t2 += q[i, 0] * q[i, 1]
        for i in range(n):
            mean = t1 - q[i, 1]
            var = t2 - q[i, 0] * q[i, 1]
            if var < VAR_FLOOR:
                var = VAR_FLOOR
            norm = 1.0 / sqrt(2.0 * M_PI * var)
            a1 = norm * exp(-((r - 1) - mean) * ((r - 1) - mean) / (2.0 * var))
            a0 = norm * exp(-(r - mean) * (r - mean) / (2.0 * var))
            tot = a0 + a1
            if tot > 0.0:
                u[i, 0] = a0 / tot
                u[i, 1] = a1 / tot
            else:
                u[i, 0] = 0.5
                u[i, 1] = 0.5
        return 0
    if method == PHI_DECONV:
        if not _phi_deconv(q, phi, phi0, n):
            fallback = 1
            _phi_fft(q, phi, qf, prod, work, n)
    else:
        _phi_fft(q, phi, qf, prod, work, n)
    for i in range(n):
        a1 = phi[i, r - 1]
        a0 = phi[i, r] if r < n else 0.0
        tot = a0 + a1
        if tot > 0.0:
            u[i, 0] = a0 / tot
            u[i, 1] = a1 / tot
        else:
            u[i, 0] = 0.5
            u[i, 1] = 0.5
    return fallback


# -------------------------------------------------------------- LaMP schedule

def lamp_run(dcomplex[:, ::1] h, dcomplex[::1] y, double sigma2,
             dcomplex[::1] symbols, int r, int iters, double delta, int method):
    """Full message-passing run; returns (q, u, s_log, phi_fallbacks)."""
    cdef int m = h.shape[0]
    cdef int n = h.shape[1]
    cdef int k1 = symbols.shape[0]
    cdef int size = _next_pow2(n + 1)

    q_arr = np.empty((n, 2))
    u_arr = np.empty((n, 2))
    s_arr = np.empty((n, k1))
    p_arr = np.full((n, m, k1), 1.0 / k1)
    lv_arr = np.empty((m, n, k1))
    phi_arr = np.empty((n, n))
    phi0_arr = np.empty(n + 1)
    qf_arr = np.empty(n * size, dtype=np.complex128)
    prod_arr = np.empty(size, dtype=np.complex128)
    work_arr = np.empty(size, dtype=np.complex128)
    e_arr = np.empty((m, n), dtype=np.complex128)
    w2_arr = np.empty((m, n))
    lt_arr = np.empty(k1)
    sym2_arr = np.abs(np.asarray(symbols)) ** 2

    cdef double[:, ::1] q = q_arr
    cdef double[:, ::1] u = u_arr
    cdef double[:, ::1] s_log = s_arr
    cdef double[:, :, ::1] p = p_arr
    cdef double[:, :, ::1] lv = lv_arr
    cdef double[:, ::1] phi = phi_arr
    cdef double[::1] phi0 = phi0_arr
    cdef dcomplex[::1] qf = qf_arr
    cdef dcomplex[::1] prod = prod_arr
    cdef dcomplex[::1] work = work_arr
    cdef dcomplex[:, ::1] e = e_arr
    cdef double[:, ::1] w2 = w2_arr
    cdef double[::1] lt_buf = lt_arr
    cdef double[::1] sym2 = sym2_arr

    cdef int it, i, j, x, fallbacks = 0
    cdef dcomplex m1, hji, cand, resid, rowE
    cdef double m2, var, habs2, s2, tmax, lse, acc, rowW
    cdef double lu0, lu1, lq0, lq1, pnew, base

    for i in range(n):
        q[i, 0] = 1.0 - (<double> r) / n
        q[i, 1] = (<double> r) / n
    with nogil:
        fallbacks += _update_u(q, u, phi, &phi0[0], &qf[0], &prod[0], &work[0], n, r, method)

        for it in range(iters):
            # interference moments of the incoming p messages
            for j in range(m):
                rowE = 0.0
                rowW = 0.0
                for i in range(n):
                    m1 = 0.0
                    m2 = 0.0
                    for x in range(k1):
                        m1 = m1 + p[i, j, x] * symbols[x]
                        m2 = m2 + p[i, j, x] * sym2[x]
                    var = m2 - (m1.real * m1.real + m1.imag * m1.imag)
                    if var < 0.0:
                        var = 0.0
                    hji = h[j, i]
                    habs2 = hji.real * hji.real + hji.imag * hji.imag
                    e[j, i] = hji * m1
                    w2[j, i] = habs2 * var
                    rowE = rowE + e[j, i]
                    rowW = rowW + w2[j, i]
                # observation messages v (log-normalized) for this row
                for i in range(n):
                    resid = y[j] - (rowE - e[j, i])
                    s2 = sigma2 + rowW - w2[j, i]
                    if s2 < VAR_FLOOR:
                        s2 = VAR_FLOOR
                    hji = h[j, i]
                    tmax = -INFINITY
                    for x in range(k1):
                        cand = resid - hji * symbols[x]
                        lv[j, i, x] = -(cand.real * cand.real + cand.imag * cand.imag) / s2
                        if lv[j, i, x] > tmax:
                            tmax = lv[j, i, x]
                    acc = 0.0
                    for x in range(k1):
                        acc += exp(lv[j, i, x] - tmax)
                    lse = log(acc) + tmax
                    for x in range(k1):
                        lv[j, i, x] -= lse

            for i in range(n):
                for x in range(k1):
                    acc = 0.0
                    for j in range(m):
                        acc += lv[j, i, x]
                    s_log[i, x] = acc

            # variable-to-observation messages p with damping
            for i in range(n):
                lu0 = log(u[i, 0])
                lu1 = log(u[i, 1])
                for j in range(m):
                    tmax = -INFINITY
                    for x in range(k1):
                        base = lu0 if x == 0 else lu1
                        lt_buf[x] = base + s_log[i, x] - lv[j, i, x]
                        if lt_buf[x] > tmax:
                            tmax = lt_buf[x]
                    if tmax == -INFINITY:
                        for x in range(k1):
                            p[i, j, x] = delta * (1.0 / k1) + (1.0 - delta) * p[i, j, x]
                    else:
                        acc = 0.0
                        for x in range(k1):
                            acc += exp(lt_buf[x] - tmax)
                        for x in range(k1):
                            pnew = exp(lt_buf[x] - tmax) / acc
                            p[i, j, x] = delta * pnew + (1.0 - delta) * p[i, j, x]

            # activity beliefs q with damping, then constraint messages u
            for i in range(n):
                lq0 = s_log[i, 0]
                tmax = -INFINITY
                for x in range(1, k1):
                    if s_log[i, x] > tmax:
                        tmax = s_log[i, x]
                acc = 0.0
                for x in range(1, k1):
                    acc += exp(s_log[i, x] - tmax)
                lq1 = log(acc) + tmax
                tmax = lq0 if lq0 > lq1 else lq1
                acc = exp(lq0 - tmax) + exp(lq1 - tmax)
                q[i, 0] = delta * (exp(lq0 - tmax) / acc) + (1.0 - delta) * q[i, 0]
                q[i, 1] = delta * (exp(lq1 - tmax) / acc) + (1.0 - delta) * q[i, 1]
            fallbacks += _update_u(q, u, phi, &phi0[0], &qf[0], &prod[0], &work[0], n, r, method)

    return q_arr, u_arr, s_arr, fallbacks


# --------------------------------------------- capacity pair-sum determinants

DEF WBLOCK = 8


def weighted_gram_logdets(dcomplex[:, ::1] h, cnp.int8_t[:, ::1] wvecs,
                          double coeff, double ridge):
    """ln det(coeff * H diag(w) H^H + ridge I) for each weight row.

    Matrices are factorized WBLOCK at a time in a planes-last layout so
    the per-lane Cholesky recurrences, which are serial within one
    matrix, run as independent SIMD lanes across matrices.  Returns
    (status, logdets); status != 0 flags a non-positive-definite input.
    """
    cdef int m = h.shape[0]
    cdef int n = h.shape[1]
    cdef int count = wvecs.shape[0]
    cdef int padded = ((count + WBLOCK - 1) // WBLOCK) * WBLOCK
    out_arr = np.empty(count)
    cdef double[::1] out = out_arr
    wpad_arr = np.zeros((padded, n), dtype=np.float64)
    wpad_arr[:count] = np.asarray(wvecs, dtype=np.float64)
    cdef double[:, ::1] wpad = wpad_arr
    pre_re_arr = np.empty((n, m, m))
    pre_im_arr = np.empty((n, m, m))
    cdef double[:, :, ::1] pre_re = pre_re_arr
    cdef double[:, :, ::1] pre_im = pre_im_arr
    a_re_arr = np.empty((m, m, WBLOCK))
    a_im_arr = np.empty((m, m, WBLOCK))
    cdef double[:, :, ::1] a_re = a_re_arr
    cdef double[:, :, ::1] a_im = a_im_arr
    cdef double wc[WBLOCK]
    cdef double piv[WBLOCK]
    cdef double rinv[WBLOCK]
    cdef double ar[WBLOCK]
    cdef double ai[WBLOCK]
    cdef double ld[WBLOCK]
    cdef int base, b, c, i, j, k, u
    cdef double pr, pi
    cdef dcomplex z
    cdef int status = 0

    with nogil:
        # scaled column outer products, split into real/imaginary planes
        for c in range(n):
            for i in range(m):
                for j in range(i + 1):
                    z = coeff * h[i, c] * h[j, c].conjugate()
                    pre_re[c, i, j] = z.real
                    pre_im[c, i, j] = z.imag

        for base in range(0, padded, WBLOCK):
            for i in range(m):
                for j in range(i + 1):
                    for b in range(WBLOCK):
                        a_re[i, j, b] = ridge if i == j else 0.0
                        a_im[i, j, b] = 0.0
            for c in range(n):
                for b in range(WBLOCK):
                    wc[b] = wpad[base + b, c]
                for i in range(m):
                    for j in range(i + 1):
                        pr = pre_re[c, i, j]
                        pi = pre_im[c, i, j]
                        for b in range(WBLOCK):
                            a_re[i, j, b] += wc[b] * pr
                            a_im[i, j, b] += wc[b] * pi
            # lane-parallel lower Cholesky with log-determinant accumulation
            for b in range(WBLOCK):
                ld[b] = 0.0
            for k in range(m):
                for b in range(WBLOCK):
                    piv[b] = a_re[k, k, b]
                for j in range(k):
                    for b in range(WBLOCK):
                        piv[b] -= a_re[k, j, b] * a_re[k, j, b] + a_im[k, j, b] * a_im[k, j, b]
                for b in range(WBLOCK):
                    if piv[b] <= 0.0:
                        if base + b < count:
                            status = 1
                        piv[b] = 1.0  # poison the lane, keep the block running
                    ld[b] += log(piv[b])
                    rinv[b] = 1.0 / sqrt(piv[b])
                for i in range(k + 1, m):
                    for b in range(WBLOCK):
                        ar[b] = a_re[i, k, b]
                        ai[b] = a_im[i, k, b]
                    for j in range(k):
                        for b in range(WBLOCK):
                            ar[b] -= a_re[i, j, b] * a_re[k, j, b] + a_im[i, j, b] * a_im[k, j, b]
                            ai[b] -= a_im[i, j, b] * a_re[k, j, b] - a_re[i, j, b] * a_im[k, j, b]
                    for b in range(WBLOCK):
                        a_re[i, k, b] = ar[b] * rinv[b]
                        a_im[i, k, b] = ai[b] * rinv[b]
            for b in range(WBLOCK):
                u = base + b
                if u < count:
                    out[u] = ld[b]

    return status, out_arr
