"""Pure numpy implementation of the HMC hot path.

Mirrors ``rnpe._kernels`` (Cython) one to one; selected at import time by
``rnpe.kernels`` when the compiled module is unavailable or disabled.
"""

from __future__ import annotations

import math

import numpy as np

KIND_BNAF = 0
KIND_GAUSSIAN = 1

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class Target:
    """log q(x) [+ spike-and-slab log p(y | x)] with its gradient, x standardized."""

    def __init__(self, kind: int, arrays: dict, y=None, rho: float = 0.5,
                 sigma: float = 0.01, tau: float = 0.25):
        self.kind = int(kind)
        self.use_error = y is not None
        if self.kind == KIND_BNAF:
            self.w1 = np.asarray(arrays["w1"], dtype=np.float64)
            self.b1 = np.asarray(arrays["b1"], dtype=np.float64)
            self.w2 = np.asarray(arrays["w2"], dtype=np.float64)
            self.b2 = np.asarray(arrays["b2"], dtype=np.float64)
            self.diagw = np.exp(np.asarray(arrays["ldiag"], dtype=np.float64))
            self.block = int(arrays["block"])
            self.cutoff = float(arrays["cutoff"])
            self.dim = self.b2.size
        elif self.kind == KIND_GAUSSIAN:
            self.mean = np.asarray(arrays["mean"], dtype=np.float64)
            self.prec = np.asarray(arrays["prec"], dtype=np.float64)
            self.logz = float(arrays["logz"])
            self.dim = self.mean.size
        else:
            raise ValueError(f"unknown target kind {kind}")
        if self.use_error:
            self.y = np.asarray(y, dtype=np.float64)
            if self.y.size != self.dim:
                raise ValueError("observation dimension does not match the target")
            self.rho, self.sigma, self.tau = float(rho), float(sigma), float(tau)

    def _bnaf(self, x):
        d, h, c = self.dim, self.block, self.cutoff
        pre = self.w1 @ x + self.b1
        if c == 0.0:
            act, dact, dlact = pre, np.ones_like(pre), np.zeros_like(pre)
        else:
            t = np.tanh(pre)
            inside = np.abs(pre) <= c
            act, dact, dlact = t, 1.0 - t * t, -2.0 * t
            if math.isfinite(c):
                tc = math.tanh(c)
                sc = 1.0 - tc * tc
                sgn = np.sign(pre)
                act = np.where(inside, t, sgn * tc + sc * (pre - sgn * c))
                dact = np.where(inside, dact, sc)
                dlact = np.where(inside, dlact, 0.0)
        u = self.w2 @ act + self.b2
        # sum_k diag_k * act'(pre_k) is the per-coordinate Jacobian diagonal
        terms = self.diagw * dact.reshape(d, h)
        tot = terms.sum(axis=1, keepdims=True)
        logp = -0.5 * float(u @ u) - d * _HALF_LOG_2PI + float(np.log(tot).sum())
        gpre = (self.w2.T @ (-u)) * dact + (terms / tot).ravel() * dlact
        return logp, self.w1.T @ gpre

    def _gaussian(self, x):
        r = x - self.mean
        pr = self.prec @ r
        return self.logz - 0.5 * float(r @ pr), -pr

    def _error(self, x):
        r = self.y - x
        s2 = self.sigma * self.sigma
        ls = math.log1p(-self.rho) - math.log(self.sigma) - _HALF_LOG_2PI - 0.5 * r * r / s2
        q = r / self.tau
        log_rho = math.log(self.rho) if self.rho > 0 else -math.inf
        lc = log_rho - math.log(math.pi * self.tau) - np.log1p(q * q)
        lse = np.logaddexp(ls, lc)
        ws = np.exp(ls - lse)
        wc = np.exp(lc - lse)
        g = ws * r / s2 + wc * (2.0 * r / (self.tau * self.tau)) / (1.0 + q * q)
        return float(lse.sum()), g

    def logp_grad(self, x):
        x = np.asarray(x, dtype=np.float64)
        lp, g = self._bnaf(x) if self.kind == KIND_BNAF else self._gaussian(x)
        if self.use_error:
            le, ge = self._error(x)
            lp, g = lp + le, g + ge
        return lp, g

    def leapfrog(self, x, p, grad, eps: float, n_steps: int):
        """``n_steps`` leapfrog steps; ``ok`` is False if the log density went non-finite."""
        x = np.array(x, dtype=np.float64)
        p = np.array(p, dtype=np.float64)
        g = np.array(grad, dtype=np.float64)
        lp = -np.inf
        p += 0.5 * eps * g
        for step in range(n_steps):
            x += eps * p
            lp, g = self.logp_grad(x)
            if not math.isfinite(lp):
                return x, p, g, lp, False
            if step < n_steps - 1:
                p += eps * g
        p += 0.5 * eps * g
        return x, p, g, lp, bool(np.all(np.isfinite(g)))
