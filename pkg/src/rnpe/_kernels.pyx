# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled HMC hot path: target log density, gradient and leapfrog loop.

Same interface and arithmetic as ``rnpe._kernels_py``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, tanh, fabs, isfinite, M_PI, INFINITY

cnp.import_array()

KIND_BNAF = 0
KIND_GAUSSIAN = 1

cdef double HALF_LOG_2PI = 0.5 * log(2.0 * M_PI)


cdef inline double _logaddexp(double a, double b) nogil:
    if a > b:
        return a + log1p(exp(b - a))
    return b + log1p(exp(a - b))


cdef class Target:
    cdef readonly int kind
    cdef readonly int dim
    cdef int block
    cdef bint use_error
    cdef double cutoff, logz, rho, sigma, tau
    cdef double log1m_rho, log_rho, log_sigma, log_pi_tau
    cdef double[:, ::1] w1, w2, diagw, prec
    cdef double[::1] b1, b2, mean, y
    cdef double[::1] pre, act, dact, dlact, u, gpre

    def __init__(self, int kind, dict arrays, y=None, double rho=0.5,
                 double sigma=0.01, double tau=0.25):
        self.kind = kind
        self.use_error = y is not None
        if kind == KIND_BNAF:
            self.w1 = np.ascontiguousarray(arrays["w1"], dtype=np.float64)
            self.b1 = np.ascontiguousarray(arrays["b1"], dtype=np.float64)
            self.w2 = np.ascontiguousarray(arrays["w2"], dtype=np.float64)
            self.b2 = np.ascontiguousarray(arrays["b2"], dtype=np.float64)
            self.diagw = np.exp(np.ascontiguousarray(arrays["ldiag"], dtype=np.float64))
            self.block = int(arrays["block"])
            self.cutoff = float(arrays["cutoff"])
            self.dim = self.b2.shape[0]
            n = self.dim * self.block
            self.pre = np.empty(n)
            self.act = np.empty(n)
            self.dact = np.empty(n)
            self.dlact = np.empty(n)
            self.gpre = np.empty(n)
            self.u = np.empty(self.dim)
        elif kind == KIND_GAUSSIAN:
            self.mean = np.ascontiguousarray(arrays["mean"], dtype=np.float64)
            self.prec = np.ascontiguousarray(arrays["prec"], dtype=np.float64)
            self.logz = float(arrays["logz"])
            self.dim = self.mean.shape[0]
            self.u = np.empty(self.dim)
        else:
            raise ValueError(f"unknown target kind {kind}")
        if self.use_error:
            self.y = np.ascontiguousarray(y, dtype=np.float64)
            if self.y.shape[0] != self.dim:
                raise ValueError("observation dimension does not match the target")
            self.rho, self.sigma, self.tau = rho, sigma, tau
            self.log1m_rho = log1p(-rho)
            self.log_rho = log(rho)
            self.log_sigma = log(sigma)
            self.log_pi_tau = log(M_PI * tau)

    cdef double _bnaf(self, double[::1] x, double[::1] g) noexcept nogil:
        # weights are block lower-triangular; loops skip the structural zeros.
        # The log-det uses sum_k diag_k * act'(pre_k), so only tanh and one
        # log per output coordinate are transcendental.
        cdef int d = self.dim, h = self.block, n = self.dim * self.block
        cdef int i, j, k
        cdef double c = self.cutoff, s, t, tc, sc, sgn, tot, logp = 0.0
        if c != 0.0 and isfinite(c):
            tc = tanh(c)
        else:
            tc = 1.0
        sc = 1.0 - tc * tc
        for i in range(n):
            s = self.b1[i]
            for j in range(i // h + 1):
                s = s + self.w1[i, j] * x[j]
            self.pre[i] = s
            if c == 0.0:
                self.act[i] = s
                self.dact[i] = 1.0
                self.dlact[i] = 0.0
            elif fabs(s) <= c:
                t = tanh(s)
                self.act[i] = t
                self.dact[i] = 1.0 - t * t
                self.dlact[i] = -2.0 * t
            else:
                sgn = 1.0 if s > 0 else -1.0
                self.act[i] = sgn * tc + sc * (s - sgn * c)
                self.dact[i] = sc
                self.dlact[i] = 0.0
        for j in range(d):
            s = self.b2[j]
            for i in range((j + 1) * h):
                s = s + self.w2[j, i] * self.act[i]
            self.u[j] = s
            logp = logp - 0.5 * s * s
        for j in range(d):
            tot = 0.0
            for k in range(h):
                t = self.diagw[j, k] * self.dact[j * h + k]
                self.gpre[j * h + k] = t
                tot = tot + t
            logp = logp + log(tot)
            for k in range(h):
                self.gpre[j * h + k] = self.gpre[j * h + k] / tot * self.dlact[j * h + k]
        for i in range(n):
            s = 0.0
            for j in range(i // h, d):
                s = s - self.w2[j, i] * self.u[j]
            self.gpre[i] = self.gpre[i] + s * self.dact[i]
        for j in range(d):
            s = 0.0
            for i in range(j * h, n):
                s = s + self.w1[i, j] * self.gpre[i]
            g[j] = s
        return logp - d * HALF_LOG_2PI

    cdef double _gaussian(self, double[::1] x, double[::1] g) noexcept nogil:
        cdef int d = self.dim, i, j
        cdef double s, q = 0.0
        for i in range(d):
            self.u[i] = x[i] - self.mean[i]
        for i in range(d):
            s = 0.0
            for j in range(d):
                s = s + self.prec[i, j] * self.u[j]
            g[i] = -s
            q = q + self.u[i] * s
        return self.logz - 0.5 * q

    cdef double _eval(self, double[::1] x, double[::1] g) noexcept nogil:
        cdef double lp, r, s2, ls, lc, qq, lse, ws, wc
        cdef int j
        if self.kind == 0:
            lp = self._bnaf(x, g)
        else:
            lp = self._gaussian(x, g)
        if self.use_error:
            s2 = self.sigma * self.sigma
            for j in range(self.dim):
                r = self.y[j] - x[j]
                ls = self.log1m_rho - self.log_sigma - HALF_LOG_2PI - 0.5 * r * r / s2
                qq = r / self.tau
                lc = self.log_rho - self.log_pi_tau - log1p(qq * qq)
                lse = _logaddexp(ls, lc)
                ws = exp(ls - lse)
                wc = exp(lc - lse)
                g[j] = g[j] + ws * r / s2 + wc * (2.0 * r / (self.tau * self.tau)) / (1.0 + qq * qq)
                lp = lp + lse
        return lp

    def logp_grad(self, x):
        cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
        g = np.empty(self.dim)
        cdef double[::1] gv = g
        lp = self._eval(xv, gv)
        return lp, g

    def leapfrog(self, x, p, grad, double eps, int n_steps):
        xo = np.array(x, dtype=np.float64)
        po = np.array(p, dtype=np.float64)
        go = np.array(grad, dtype=np.float64)
        cdef double[::1] xv = xo
        cdef double[::1] pv = po
        cdef double[::1] gv = go
        cdef int d = self.dim, step, j
        cdef double lp = -INFINITY
        cdef bint ok = True
        with nogil:
            for j in range(d):
                pv[j] = pv[j] + 0.5 * eps * gv[j]
            for step in range(n_steps):
                for j in range(d):
                    xv[j] = xv[j] + eps * pv[j]
                lp = self._eval(xv, gv)
                if not isfinite(lp):
                    ok = False
                    break
                if step < n_steps - 1:
                    for j in range(d):
                        pv[j] = pv[j] + eps * gv[j]
            if ok:
                for j in range(d):
                    pv[j] = pv[j] + 0.5 * eps * gv[j]
                    if not isfinite(gv[j]):
                        ok = False
        return xo, po, go, lp, bool(ok)
