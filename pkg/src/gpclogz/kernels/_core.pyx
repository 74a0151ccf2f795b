# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: probit target, Woodbury metric, HMC/RMHMC transitions, Gibbs sweeps.

Dense algebra goes through scipy's BLAS/LAPACK bindings on Fortran-ordered
buffers; random numbers come from numpy's own C distributions so the
bit generator state stays shared with the calling ``Generator``.
"""

import numpy as np

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp, log, log1p, sqrt, isfinite
from numpy.random cimport bitgen_t
from scipy.linalg.cython_blas cimport ddot, dsymv, dsyrk, dtrsm, dtrsv
from scipy.linalg.cython_lapack cimport dpotrf
cimport scipy.special.cython_special as csp

BACKEND = "cython"

cdef extern from "numpy/random/distributions.h":
    double random_standard_uniform(bitgen_t *bitgen_state) nogil
    double random_standard_normal(bitgen_t *bitgen_state) nogil
    double random_standard_exponential(bitgen_t *bitgen_state) nogil

cdef double LOG_2PI = log(2.0 * 3.141592653589793)
cdef double LOG_HALF = log(0.5)
cdef double SQRT2 = sqrt(2.0)
cdef double ASYMPTOTIC_THRESHOLD = -15.0
cdef double TAIL_SWITCH = 0.257


cdef inline double _erfcx(double v) noexcept nogil:
    return csp.erfcx(v)


cdef inline double _erfc(double v) noexcept nogil:
    return csp.erfc(v)


cdef inline double _log_ndtr(double z) noexcept nogil:
    if z < 0:
        return log(_erfcx(-z / SQRT2)) + LOG_HALF - 0.5 * z * z
    return log1p(-0.5 * _erfc(z / SQRT2))


cdef inline double _ratio_log(double z) noexcept nogil:
    if z < 0:
        return -0.5 * LOG_2PI - LOG_HALF - log(_erfcx(-z / SQRT2))
    return -0.5 * z * z - 0.5 * LOG_2PI - log1p(-0.5 * _erfc(z / SQRT2))


def log_ndtr(double z):
    return _log_ndtr(z)


def ratio_log(double z):
    return _ratio_log(z)


# ---------------------------------------------------------------- truncated normal

cdef inline double _std_tail(bitgen_t *bg, double a) noexcept nogil:
    """w ~ N(0, 1) conditioned on w >= a."""
    cdef double w, alpha, d
    if a < TAIL_SWITCH:
        while True:
            w = random_standard_normal(bg)
            if w >= a:
                return w
    alpha = 0.5 * (a + sqrt(a * a + 4.0))
    while True:
        w = a + random_standard_exponential(bg) / alpha
        d = w - alpha
        if random_standard_uniform(bg) <= exp(-0.5 * d * d):
            return w


cdef inline double _truncnorm(bitgen_t *bg, double mean, double sd, double sign) noexcept nogil:
    cdef double v = sign * mean + sd * _std_tail(bg, -sign * mean / sd)
    if v < 0.0:
        v = 0.0
    return sign * v


cdef inline double _slice(bitgen_t *bg, double cur, double mean, double var, double sign) noexcept nogil:
    cdef double d = cur - mean
    cdef double half = sqrt(2.0 * var * (0.5 * d * d / var + random_standard_exponential(bg)))
    cdef double lo = mean - half
    cdef double hi = mean + half
    if sign > 0:
        if lo < 0.0:
            lo = 0.0
    elif hi > 0.0:
        hi = 0.0
    return lo + (hi - lo) * random_standard_uniform(bg)


cdef bitgen_t *_bitgen(object rng) except NULL:
    return <bitgen_t *> PyCapsule_GetPointer(rng.bit_generator.capsule, "BitGenerator")


def truncnorm(mean, var, sign, rng):
    """Draw ``z ~ N(mean, var)`` restricted to ``sign * z >= 0``, elementwise."""
    m_b, v_b, s_b = np.broadcast_arrays(
        np.asarray(mean, dtype=float), np.asarray(var, dtype=float), np.asarray(sign, dtype=float)
    )
    shape = m_b.shape
    cdef double[::1] m = np.ascontiguousarray(m_b).ravel()
    cdef double[::1] v = np.ascontiguousarray(v_b).ravel()
    cdef double[::1] s = np.ascontiguousarray(s_b).ravel()
    out_arr = np.empty(m.shape[0])
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef bitgen_t *bg = _bitgen(rng)
    with rng.bit_generator.lock, nogil:
        for i in range(m.shape[0]):
            out[i] = _truncnorm(bg, m[i], sqrt(v[i]), s[i])
    return out_arr.reshape(shape)


def gibbs_sweeps(double[:, ::1] Z, double[:, ::1] P, double[::1] y, active, int n_sweeps, rng,
                 bint slice_move=False):
    """In-place systematic-scan Gibbs sweeps, one particle (row of Z) at a time."""
    cdef unsigned char[::1] act = np.ascontiguousarray(active, dtype=np.uint8)
    cdef Py_ssize_t R = Z.shape[0], n = Z.shape[1]
    cdef Py_ssize_t r, i, j
    cdef int sweep
    cdef double acc, var, m
    if P.shape[0] != n or P.shape[1] != n or y.shape[0] != n or act.shape[0] != n:
        raise ValueError("dimension mismatch in gibbs_sweeps")
    cdef bitgen_t *bg = _bitgen(rng)
    with rng.bit_generator.lock, nogil:
        for r in range(R):
            for sweep in range(n_sweeps):
                for i in range(n):
                    acc = 0.0
                    for j in range(n):
                        if j != i:
                            acc = acc + P[i, j] * Z[r, j]
                    var = 1.0 / P[i, i]
                    m = -acc * var
                    if not act[i]:
                        Z[r, i] = m + sqrt(var) * random_standard_normal(bg)
                    elif slice_move:
                        Z[r, i] = _slice(bg, Z[r, i], m, var, y[i])
                    else:
                        Z[r, i] = _truncnorm(bg, m, sqrt(var), y[i])


# ---------------------------------------------------------------- target and metric

cdef class Workspace:
    """Scratch buffers for one chain. Not shareable across threads."""

    cdef readonly int n
    # bound target
    cdef double[::1] y, mu
    cdef double[::1, :] LK, LS, A
    cdef double log_det_k, log_det_s, log_det_a_inv, beta, lik
    cdef bint prior
    # evaluation state
    cdef double L, log_det_g
    cdef double[::1] grad_l, dg, s, f, fq, w, tmp
    cdef double[::1, :] M, V, Ginv, LG
    # trajectory buffers
    cdef double[::1] x, x0, p, p0, gh, dhdp, dhdp_new

    def __init__(self, int n):
        self.n = n
        self.grad_l = np.empty(n)
        self.dg = np.empty(n)
        self.s = np.empty(n)
        self.f = np.empty(n)
        self.fq = np.empty(n)
        self.w = np.empty(n)
        self.tmp = np.empty(n)
        self.x = np.empty(n)
        self.x0 = np.empty(n)
        self.p = np.empty(n)
        self.p0 = np.empty(n)
        self.gh = np.empty(n)
        self.dhdp = np.empty(n)
        self.dhdp_new = np.empty(n)
        self.M = np.empty((n, n), order="F")
        self.V = np.empty((n, n), order="F")
        self.Ginv = np.empty((n, n), order="F")
        self.LG = np.empty((n, n), order="F")

    cdef _bind(self, target):
        packed = target.packed
        if packed[0].shape[0] != self.n:
            raise ValueError(f"workspace sized for N={self.n}, target has N={packed[0].shape[0]}")
        (self.y, self.LK, self.log_det_k, self.mu, self.LS, self.log_det_s,
         self.A, self.log_det_a_inv, self.beta, self.prior, self.lik) = packed

    cdef void _derivs(self, double *x) noexcept nogil:
        cdef int n = self.n, one = 1, i
        cdef double ll = 0.0, z, e, ff, ffq, b = self.beta, bl = self.beta * self.lik
        for i in range(n):
            z = self.y[i] * x[i]
            ll += _log_ndtr(z)
            if z > ASYMPTOTIC_THRESHOLD:
                e = exp(_ratio_log(z))
            else:
                e = -z - 1.0 / z + 2.0 / (z * z * z)
            self.grad_l[i] = self.y[i] * e
            self.f[i] = x[i]
        dtrsv(b"L", b"N", b"N", &n, &self.LK[0, 0], &n, &self.f[0], &one)
        ff = ddot(&n, &self.f[0], &one, &self.f[0], &one)
        dtrsv(b"L", b"T", b"N", &n, &self.LK[0, 0], &n, &self.f[0], &one)
        if self.prior:
            self.L = bl * ll - 0.5 * n * LOG_2PI - 0.5 * self.log_det_k - 0.5 * ff
            for i in range(n):
                self.grad_l[i] = bl * self.grad_l[i] - self.f[i]
            return
        for i in range(n):
            self.fq[i] = x[i] - self.mu[i]
        dtrsv(b"L", b"N", b"N", &n, &self.LS[0, 0], &n, &self.fq[0], &one)
        ffq = ddot(&n, &self.fq[0], &one, &self.fq[0], &one)
        dtrsv(b"L", b"T", b"N", &n, &self.LS[0, 0], &n, &self.fq[0], &one)
        self.L = (bl * ll - 0.5 * n * LOG_2PI
                  - b * (0.5 * self.log_det_k + 0.5 * ff)
                  - (1.0 - b) * (0.5 * self.log_det_s + 0.5 * ffq))
        for i in range(n):
            self.grad_l[i] = bl * self.grad_l[i] - b * self.f[i] - (1.0 - b) * self.fq[i]

    cdef int _metric(self, double *x) noexcept nogil:
        """Fill L, grad_l, Ginv, log_det_g, dg at x; nonzero on failure."""
        cdef int n = self.n, info = 0, i, j
        cdef double z, e, e2, lam, b = self.beta * self.lik, minus_one = -1.0, plus_one = 1.0, ld = 0.0
        for i in range(n):
            if not isfinite(x[i]):
                return -1
        self._derivs(x)
        for i in range(n):
            z = self.y[i] * x[i]
            e = exp(_ratio_log(z))
            e2 = e * e
            lam = b * (z * e + e2)
            self.dg[i] = b * (self.y[i] * (1.0 - x[i] * x[i]) * e - 3.0 * x[i] * e2
                              - 2.0 * self.y[i] * e2 * e)
            if not lam >= 0.0:
                return -2
            self.s[i] = sqrt(lam)
        for j in range(n):
            for i in range(n):
                self.M[i, j] = self.A[i, j] * self.s[i] * self.s[j]
                self.V[i, j] = self.s[i] * self.A[i, j]
                self.Ginv[i, j] = self.A[i, j]
            self.M[j, j] += 1.0
        dpotrf(b"L", &n, &self.M[0, 0], &n, &info)
        if info != 0:
            return info
        for i in range(n):
            ld += log(self.M[i, i])
        dtrsm(b"L", b"L", b"N", b"N", &n, &n, &plus_one, &self.M[0, 0], &n, &self.V[0, 0], &n)
        dsyrk(b"L", b"T", &n, &n, &minus_one, &self.V[0, 0], &n, &plus_one, &self.Ginv[0, 0], &n)
        for j in range(n):
            for i in range(j + 1, n):
                self.Ginv[j, i] = self.Ginv[i, j]
        self.log_det_g = self.log_det_a_inv + 2.0 * ld
        return 0

    cdef double _ham(self, double *p, double *grad) noexcept nogil:
        cdef int n = self.n, one = 1, i
        cdef double zero = 0.0, unit = 1.0, H
        dsymv(b"L", &n, &unit, &self.Ginv[0, 0], &n, p, &one, &zero, &self.w[0], &one)
        H = 0.5 * ddot(&n, p, &one, &self.w[0], &one) + 0.5 * self.log_det_g - self.L
        for i in range(n):
            grad[i] = (0.5 * self.dg[i] * self.Ginv[i, i]
                       - 0.5 * self.w[i] * self.w[i] * self.dg[i] - self.grad_l[i])
        return H

    cdef void _ginv_times(self, double *p, double *out) noexcept nogil:
        cdef int n = self.n, one = 1
        cdef double zero = 0.0, unit = 1.0
        dsymv(b"L", &n, &unit, &self.Ginv[0, 0], &n, p, &one, &zero, out, &one)

    cdef int _trajectory(self, double eps, int n_steps, int f_max, double *H) noexcept nogil:
        """Generalised leapfrog from (self.x, self.p); metric must be current at self.x."""
        cdef int n = self.n, l, it, i, info
        cdef double h = self._ham(&self.p[0], &self.gh[0])
        for l in range(n_steps):
            for i in range(n):
                self.p0[i] = self.p[i]
            for it in range(f_max):
                for i in range(n):
                    self.p[i] = self.p0[i] - 0.5 * eps * self.gh[i]
                h = self._ham(&self.p[0], &self.gh[0])
            self._ginv_times(&self.p[0], &self.dhdp[0])
            for i in range(n):
                self.dhdp_new[i] = self.dhdp[i]
                self.x0[i] = self.x[i]
            for it in range(f_max):
                for i in range(n):
                    self.x[i] = self.x0[i] + 0.5 * eps * (self.dhdp[i] + self.dhdp_new[i])
                info = self._metric(&self.x[0])
                if info != 0:
                    return info
                self._ginv_times(&self.p[0], &self.dhdp_new[0])
            h = self._ham(&self.p[0], &self.gh[0])
            for i in range(n):
                self.p[i] = self.p[i] - 0.5 * eps * self.gh[i]
            h = self._ham(&self.p[0], &self.gh[0])
            if not isfinite(h):
                return -3
        H[0] = h
        return 0

    cdef void _log_parts(self, double *x, double *out) noexcept nogil:
        """out = (sum log Phi, log N(x; 0, K), log N(x; mu, Sigma))."""
        cdef int n = self.n, one = 1, i
        cdef double ll = 0.0
        if self.lik != 0.0:
            for i in range(n):
                ll += _log_ndtr(self.y[i] * x[i])
        for i in range(n):
            self.f[i] = x[i]
        dtrsv(b"L", b"N", b"N", &n, &self.LK[0, 0], &n, &self.f[0], &one)
        out[0] = ll
        out[1] = -0.5 * n * LOG_2PI - 0.5 * self.log_det_k - 0.5 * ddot(&n, &self.f[0], &one, &self.f[0], &one)
        if self.prior:
            out[2] = out[1]
            return
        for i in range(n):
            self.fq[i] = x[i] - self.mu[i]
        dtrsv(b"L", b"N", b"N", &n, &self.LS[0, 0], &n, &self.fq[0], &one)
        out[2] = -0.5 * n * LOG_2PI - 0.5 * self.log_det_s - 0.5 * ddot(&n, &self.fq[0], &one, &self.fq[0], &one)

    # ------------------------------------------------------------ python API

    def log_parts(self, target, x):
        self._bind(target)
        cdef double[::1] xv = np.ascontiguousarray(x, dtype=float)
        cdef double out[3]
        self._log_parts(&xv[0], out)
        return out[0], out[1], out[2]


    def derivatives(self, target, x):
        self._bind(target)
        cdef double[::1] xv = np.array(x, dtype=float)
        self._derivs(&xv[0])
        return self.L, np.array(self.grad_l)

    def metric(self, target, x):
        self._bind(target)
        cdef double[::1] xv = np.array(x, dtype=float)
        cdef int info = self._metric(&xv[0])
        if info != 0:
            from ..linalg import NotPositiveDefinite
            raise NotPositiveDefinite(info)
        return self.L, np.array(self.grad_l), np.array(self.Ginv), self.log_det_g, np.array(self.dg)

    def leapfrog(self, target, x, p, double eps, int n_steps, mass_diag):
        self._bind(target)
        cdef double[::1] m = np.ascontiguousarray(mass_diag, dtype=float)
        cdef int i, l, n = self.n
        cdef double[::1] xin = np.ascontiguousarray(x, dtype=float)
        cdef double[::1] pin = np.ascontiguousarray(p, dtype=float)
        if xin.shape[0] != self.n or pin.shape[0] != self.n:
            raise ValueError("x and p must have length n")
        self.x[:] = xin
        self.p[:] = pin
        with nogil:
            self._derivs(&self.x[0])
            for l in range(n_steps):
                for i in range(n):
                    self.p[i] += 0.5 * eps * self.grad_l[i]
                    self.x[i] += eps * self.p[i] / m[i]
                self._derivs(&self.x[0])
                for i in range(n):
                    self.p[i] += 0.5 * eps * self.grad_l[i]
        return np.array(self.x), np.array(self.p)

    def hmc_step(self, target, x, noise, double u, double eps, int l_max, mass_diag):
        self._bind(target)
        cdef double[::1] m = np.ascontiguousarray(mass_diag, dtype=float)
        cdef double[::1] nz = np.ascontiguousarray(noise, dtype=float)
        cdef double[::1] xs = np.array(x, dtype=float)
        cdef int i, l, n = self.n
        cdef double h0 = 0.0, h1 = 0.0, L0
        cdef bint ok = True
        with nogil:
            self._derivs(&xs[0])
            L0 = self.L
            for i in range(n):
                self.x[i] = xs[i]
                self.p[i] = sqrt(m[i]) * nz[i]
                h0 += 0.5 * self.p[i] * self.p[i] / m[i]
            h0 -= L0
            for l in range(l_max):
                for i in range(n):
                    self.p[i] += 0.5 * eps * self.grad_l[i]
                    self.x[i] += eps * self.p[i] / m[i]
                self._derivs(&self.x[0])
                for i in range(n):
                    self.p[i] += 0.5 * eps * self.grad_l[i]
            for i in range(n):
                h1 += 0.5 * self.p[i] * self.p[i] / m[i]
                if not isfinite(self.x[i]):
                    ok = False
            h1 -= self.L
            ok = ok and isfinite(h1) and u < exp(h0 - h1)
        if ok:
            return np.array(self.x), True, self.L
        return np.asarray(xs), False, L0

    def generalized_leapfrog(self, target, x, p, double eps, int n_steps, int f_max):
        self._bind(target)
        cdef double H = 0.0
        cdef int info
        cdef double[::1] xin = np.ascontiguousarray(x, dtype=float)
        cdef double[::1] pin = np.ascontiguousarray(p, dtype=float)
        if xin.shape[0] != self.n or pin.shape[0] != self.n:
            raise ValueError("x and p must have length n")
        self.x[:] = xin
        self.p[:] = pin
        with nogil:
            info = self._metric(&self.x[0])
            if info == 0:
                info = self._trajectory(eps, n_steps, f_max, &H)
        if info != 0:
            from ..linalg import NotPositiveDefinite
            raise NotPositiveDefinite(info)
        return np.array(self.x), np.array(self.p), H

    def rmhmc_step(self, target, x, noise, double u, double eps, int l_max, int f_max):
        self._bind(target)
        cdef double[::1] nz = np.ascontiguousarray(noise, dtype=float)
        cdef double[::1] xs = np.array(x, dtype=float)
        cdef int n = self.n, one = 1, info, i, j
        cdef double h_old, h = 0.0, L0
        cdef bint ok
        with nogil:
            info = self._metric(&xs[0])
        if info != 0:
            from ..linalg import NotPositiveDefinite
            raise NotPositiveDefinite(info)
        with nogil:
            L0 = self.L
            # p ~ N(0, G): solve L^T p = noise with L L^T = G^-1
            for j in range(n):
                for i in range(n):
                    self.LG[i, j] = self.Ginv[i, j]
                self.x[j] = xs[j]
                self.p[j] = nz[j]
            dpotrf(b"L", &n, &self.LG[0, 0], &n, &info)
            if info == 0:
                dtrsv(b"L", b"T", b"N", &n, &self.LG[0, 0], &n, &self.p[0], &one)
                h_old = self._ham(&self.p[0], &self.gh[0])
                info = self._trajectory(eps, l_max, f_max, &h)
            ok = info == 0 and isfinite(h) and u < exp(h_old - h)
        if ok:
            return np.array(self.x), True, self.L
        return np.asarray(xs), False, L0
