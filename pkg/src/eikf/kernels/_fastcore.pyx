# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled predict kernel: fused mean + 4th-order covariance propagation.

Mirrors kernels.pycore.predict_window operation for operation; keep the two
in sync (tests compare them).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin, sqrt
from libc.string cimport memcpy, memset

cnp.import_array()


cdef void mat_mul(const double* a, const double* b, double* out,
                  int n, int m, int k) noexcept nogil:
    # out (n,k) = a (n,m) @ b (m,k); out must not alias a or b
    cdef int i, j, l
    cdef double acc
    for i in range(n):
        for j in range(k):
            acc = 0.0
            for l in range(m):
                acc += a[i * m + l] * b[l * k + j]
            out[i * k + j] = acc


cdef void mat_mul_bt(const double* a, const double* b, double* out,
                     int n, int m, int k) noexcept nogil:
    # out (n,k) = a (n,m) @ b^T with b (k,m)
    cdef int i, j, l
    cdef double acc
    for i in range(n):
        for j in range(k):
            acc = 0.0
            for l in range(m):
                acc += a[i * m + l] * b[j * m + l]
            out[i * k + j] = acc


cdef void skew3(const double* v, double* out) noexcept nogil:
    out[0] = 0.0;   out[1] = -v[2]; out[2] = v[1]
    out[3] = v[2];  out[4] = 0.0;   out[5] = -v[0]
    out[6] = -v[1]; out[7] = v[0];  out[8] = 0.0


cdef void so3_exp3(const double* w, double* out) noexcept nogil:
    cdef double angle = sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    cdef double s[9]
    cdef double s2[9]
    cdef double c1, c2
    cdef int i
    skew3(w, s)
    mat_mul(s, s, s2, 3, 3, 3)
    if angle < 1e-6:
        c1 = 1.0
        c2 = 0.5
    else:
        c1 = sin(angle) / angle
        c2 = (1.0 - cos(angle)) / (angle * angle)
    for i in range(9):
        out[i] = c1 * s[i] + c2 * s2[i]
    out[0] += 1.0
    out[4] += 1.0
    out[8] += 1.0


cdef double trace3(const double* a) noexcept nogil:
    return a[0] + a[4] + a[8]


cdef void sandwich3(const double* m, const double* p, double* out) noexcept nogil:
    # E[x^ M y^T] for E[x y^T] = p:
    # (trM trP - tr(M P)) I - trP M^T - trM P^T + M^T P^T + P^T M^T
    cdef double trm = trace3(m)
    cdef double trp = trace3(p)
    cdef double trmp = 0.0
    cdef double mt[9]
    cdef double pt[9]
    cdef double t1[9]
    cdef double t2[9]
    cdef int i, j
    for i in range(3):
        for j in range(3):
            trmp += m[i * 3 + j] * p[j * 3 + i]
            mt[j * 3 + i] = m[i * 3 + j]
            pt[j * 3 + i] = p[i * 3 + j]
    mat_mul(mt, pt, t1, 3, 3, 3)
    mat_mul(pt, mt, t2, 3, 3, 3)
    for i in range(9):
        out[i] = -trp * mt[i] - trm * pt[i] + t1[i] + t2[i]
    out[0] += trm * trp - trmp
    out[4] += trm * trp - trmp
    out[8] += trm * trp - trmp


cdef void bracket1_3(const double* a, double* out) noexcept nogil:
    cdef double tr = trace3(a)
    cdef int i
    for i in range(9):
        out[i] = a[i]
    out[0] -= tr
    out[4] -= tr
    out[8] -= tr


cdef void get_block(const double* m, int dim, int bi, int bj, double* out) noexcept nogil:
    cdef int i, j
    for i in range(3):
        for j in range(3):
            out[i * 3 + j] = m[(bi * 3 + i) * dim + (bj * 3 + j)]


cdef void add_block(double* m, int dim, int bi, int bj, const double* blk,
                    double scale) noexcept nogil:
    cdef int i, j
    for i in range(3):
        for j in range(3):
            m[(bi * 3 + i) * dim + (bj * 3 + j)] += scale * blk[i * 3 + j]


cdef void symmetrize(double* m, int n) noexcept nogil:
    cdef int i, j
    cdef double v
    for i in range(n):
        for j in range(i + 1, n):
            v = 0.5 * (m[i * n + j] + m[j * n + i])
            m[i * n + j] = v
            m[j * n + i] = v


cdef void sigma_nprime_c(const double* rot, const double* pos, const double* vel,
                         const double* cov15, double sg, double sa,
                         double* out) noexcept nogil:
    # Ad diag(sg^2 I + P_bg, 0, sa^2 I + P_ba) Ad^T
    cdef double ad[81]
    cdef double d[81]
    cdef double tmp[81]
    cdef double px[9]
    cdef double vx[9]
    cdef double pxr[9]
    cdef double vxr[9]
    cdef int i, j
    memset(ad, 0, sizeof(ad))
    memset(d, 0, sizeof(d))
    skew3(pos, px)
    skew3(vel, vx)
    mat_mul(px, rot, pxr, 3, 3, 3)
    mat_mul(vx, rot, vxr, 3, 3, 3)
    for i in range(3):
        for j in range(3):
            ad[i * 9 + j] = rot[i * 3 + j]
            ad[(3 + i) * 9 + (3 + j)] = rot[i * 3 + j]
            ad[(6 + i) * 9 + (6 + j)] = rot[i * 3 + j]
            ad[(3 + i) * 9 + j] = pxr[i * 3 + j]
            ad[(6 + i) * 9 + j] = vxr[i * 3 + j]
            d[i * 9 + j] = cov15[(9 + i) * 15 + (9 + j)]
            d[(6 + i) * 9 + (6 + j)] = cov15[(12 + i) * 15 + (12 + j)]
    for i in range(3):
        d[i * 9 + i] += sg * sg
        d[(6 + i) * 9 + (6 + i)] += sa * sa
    mat_mul(ad, d, tmp, 9, 9, 9)
    mat_mul_bt(tmp, ad, out, 9, 9, 9)
    symmetrize(out, 9)


cdef void sigma_fourth_c(const double* sig, const double* pxi, double* out) noexcept nogil:
    cdef double dmat[81]
    cdef double bmat[81]
    cdef double blk[9]
    cdef double blk2[9]
    cdef double term[9]
    cdef double acc[9]
    cdef double ds[81]
    cdef int i, j, k
    memset(dmat, 0, sizeof(dmat))
    memset(bmat, 0, sizeof(bmat))

    # D = E[ad^2]
    get_block(pxi, 9, 0, 0, blk)
    bracket1_3(blk, term)
    add_block(dmat, 9, 0, 0, term, 1.0)
    add_block(dmat, 9, 1, 1, term, 1.0)
    add_block(dmat, 9, 2, 2, term, 1.0)
    get_block(pxi, 9, 0, 1, blk)
    for i in range(3):
        for j in range(3):
            blk2[i * 3 + j] = blk[i * 3 + j] + blk[j * 3 + i]
    bracket1_3(blk2, term)
    add_block(dmat, 9, 1, 0, term, 1.0)
    get_block(pxi, 9, 0, 2, blk)
    for i in range(3):
        for j in range(3):
            blk2[i * 3 + j] = blk[i * 3 + j] + blk[j * 3 + i]
    bracket1_3(blk2, term)
    add_block(dmat, 9, 2, 0, term, 1.0)

    # B = E[ad n' n'^T ad^T], blockwise sandwich sums
    cdef double sb[9]
    cdef double pb[9]
    for i in range(3):
        for j in range(3):
            memset(acc, 0, sizeof(acc))
            get_block(sig, 9, 0, 0, sb)
            get_block(pxi, 9, j, i, pb)
            sandwich3(sb, pb, term)
            for k in range(9):
                acc[k] += term[k]
            if j != 0:
                get_block(sig, 9, 0, j, sb)
                get_block(pxi, 9, 0, i, pb)
                sandwich3(sb, pb, term)
                for k in range(9):
                    acc[k] += term[k]
            if i != 0:
                get_block(sig, 9, i, 0, sb)
                get_block(pxi, 9, j, 0, pb)
                sandwich3(sb, pb, term)
                for k in range(9):
                    acc[k] += term[k]
            if i != 0 and j != 0:
                get_block(sig, 9, i, j, sb)
                get_block(pxi, 9, 0, 0, pb)
                sandwich3(sb, pb, term)
                for k in range(9):
                    acc[k] += term[k]
            add_block(bmat, 9, i, j, acc, 1.0)

    mat_mul(dmat, sig, ds, 9, 9, 9)
    for i in range(9):
        for j in range(9):
            out[i * 9 + j] = (
                sig[i * 9 + j]
                + (ds[i * 9 + j] + ds[j * 9 + i]) / 6.0
                + bmat[i * 9 + j] / 4.0
            )
    symmetrize(out, 9)


cdef void drift_c(const double* gravity, double* a) noexcept nogil:
    cdef double gx[9]
    memset(a, 0, 81 * sizeof(double))
    skew3(gravity, gx)
    a[3 * 9 + 6] = 1.0
    a[4 * 9 + 7] = 1.0
    a[5 * 9 + 8] = 1.0
    cdef int i, j
    for i in range(3):
        for j in range(3):
            a[(6 + i) * 9 + j] = gx[i * 3 + j]


cdef void process_step(double* rot, double* pos, double* vel,
                       const double* bias_g, const double* bias_a,
                       double* cov, const double* omega, const double* acc_m,
                       double dt, const double* gravity,
                       double sg, double sa, double sbg, double sba) noexcept nogil:
    cdef double sig[81]
    cdef double sig4[81]
    cdef double a[81]
    cdef double a2[81]
    cdef double phi[81]
    cdef double qd[81]
    cdef double t1[81]
    cdef double t2[81]
    cdef double t3[81]
    cdef double tmp[81]
    cdef double tmp2[81]
    cdef double pxi[81]
    cdef double cross[54]
    cdef double newcross[54]
    cdef int i, j

    # covariance first, using the pre-step mean
    sigma_nprime_c(rot, pos, vel, cov, sg, sa, sig)
    for i in range(9):
        for j in range(9):
            pxi[i * 9 + j] = cov[i * 15 + j]
    sigma_fourth_c(sig, pxi, sig4)

    drift_c(gravity, a)
    mat_mul(a, a, a2, 9, 9, 9)
    memset(phi, 0, sizeof(phi))
    for i in range(9):
        phi[i * 9 + i] = 1.0
        for j in range(9):
            phi[i * 9 + j] += a[i * 9 + j] * dt + a2[i * 9 + j] * dt * dt / 2.0

    # Qd = dt S + dt^2/2 (AS + SA^T) + dt^3/3 (ASA^T + (A2 S + S A2^T)/2)
    #      + dt^4/4 * (A2 S A^T + A S A2^T)/2 + dt^5/5 * A2 S A2^T / 4
    mat_mul(a, sig4, t1, 9, 9, 9)        # A S
    mat_mul(a2, sig4, t2, 9, 9, 9)       # A2 S
    mat_mul_bt(t1, a, tmp, 9, 9, 9)      # A S A^T
    mat_mul_bt(t2, a, tmp2, 9, 9, 9)     # A2 S A^T
    mat_mul_bt(t2, a2, t3, 9, 9, 9)      # A2 S A2^T
    for i in range(9):
        for j in range(9):
            qd[i * 9 + j] = (
                dt * sig4[i * 9 + j]
                + dt * dt / 2.0 * (t1[i * 9 + j] + t1[j * 9 + i])
                + dt * dt * dt / 3.0
                * (tmp[i * 9 + j] + 0.5 * (t2[i * 9 + j] + t2[j * 9 + i]))
                + dt * dt * dt * dt / 4.0
                * 0.5 * (tmp2[i * 9 + j] + tmp2[j * 9 + i])
                + dt * dt * dt * dt * dt / 5.0 * 0.25 * t3[i * 9 + j]
            )
    symmetrize(qd, 9)

    # P_xi <- Phi P_xi Phi^T + Qd ; cross <- Phi P_cross ; bias random walk
    mat_mul(phi, pxi, t1, 9, 9, 9)
    mat_mul_bt(t1, phi, tmp, 9, 9, 9)
    for i in range(9):
        for j in range(6):
            cross[i * 6 + j] = cov[i * 15 + 9 + j]
    mat_mul(phi, cross, newcross, 9, 9, 6)
    for i in range(9):
        for j in range(9):
            cov[i * 15 + j] = tmp[i * 9 + j] + qd[i * 9 + j]
        for j in range(6):
            cov[i * 15 + 9 + j] = newcross[i * 6 + j]
            cov[(9 + j) * 15 + i] = newcross[i * 6 + j]
    for i in range(3):
        cov[(9 + i) * 15 + 9 + i] += sbg * sbg * dt
        cov[(12 + i) * 15 + 12 + i] += sba * sba * dt
    symmetrize(cov, 15)

    # mean: exact rotation increment, half-step rotation for the translation
    cdef double w[3]
    cdef double wh[3]
    cdef double dr[9]
    cdef double newrot[9]
    cdef double rmid[9]
    cdef double accw[3]
    for i in range(3):
        w[i] = (omega[i] - bias_g[i]) * dt
        wh[i] = 0.5 * w[i]
    so3_exp3(wh, dr)
    mat_mul(rot, dr, rmid, 3, 3, 3)
    so3_exp3(w, dr)
    mat_mul(rot, dr, newrot, 3, 3, 3)
    for i in range(3):
        accw[i] = gravity[i]
        for j in range(3):
            accw[i] += rmid[i * 3 + j] * (acc_m[j] - bias_a[j])
    for i in range(3):
        pos[i] += vel[i] * dt + 0.5 * accw[i] * dt * dt
        vel[i] += accw[i] * dt
    memcpy(rot, newrot, sizeof(newrot))


BACKEND = "compiled"


def predict_window(rot, pos, vel, bias_g, bias_a, cov, omegas, accs, dts,
                   gravity, double sigma_g, double sigma_a,
                   double sigma_bg, double sigma_ba):
    cdef cnp.ndarray[double, ndim=2] rot_c = np.ascontiguousarray(rot, dtype=np.float64).copy()
    cdef cnp.ndarray[double, ndim=1] pos_c = np.ascontiguousarray(pos, dtype=np.float64).copy()
    cdef cnp.ndarray[double, ndim=1] vel_c = np.ascontiguousarray(vel, dtype=np.float64).copy()
    cdef cnp.ndarray[double, ndim=1] bg = np.ascontiguousarray(bias_g, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] ba = np.ascontiguousarray(bias_a, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] cov_c = np.ascontiguousarray(cov, dtype=np.float64).copy()
    cdef cnp.ndarray[double, ndim=2] om = np.ascontiguousarray(omegas, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] ac = np.ascontiguousarray(accs, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] dt_arr = np.ascontiguousarray(dts, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] grav = np.ascontiguousarray(gravity, dtype=np.float64)
    cdef int n = dt_arr.shape[0]
    cdef int i
    with nogil:
        for i in range(n):
            process_step(
                &rot_c[0, 0], &pos_c[0], &vel_c[0], &bg[0], &ba[0],
                &cov_c[0, 0], &om[i, 0], &ac[i, 0], dt_arr[i], &grav[0],
                sigma_g, sigma_a, sigma_bg, sigma_ba,
            )
    return rot_c, pos_c, vel_c, cov_c
