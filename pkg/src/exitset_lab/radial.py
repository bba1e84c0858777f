"""Continuum evaluation of radially symmetric configurations on the torus.

A bubble centered at a peak center, plus a constant, is radial about that
center inside the cutoff ball and constant outside it. Because the cutoff
ball fits in the torus, every integral reduces to |M| times the far-field
value plus a one-dimensional radial integral over [0, 2 eps].
"""

from __future__ import annotations

import numpy as np
from scipy import integrate

from .bubbles import bubble_profile, bubble_profile_dr, peak_profile, sphere_area


class RadialModel:
    def __init__(self, n: int, L: float, eps_c: float | None = None):
        self.n = n
        self.L = L
        self.eps = L / 8.0 if eps_c is None else eps_c
        if self.eps > L / 4.0:
            raise ValueError("cutoff ball does not fit in the torus")
        self.volume = L**n
        self.omega = sphere_area(n)
        self.cn = 4.0 * (n - 1) / (n - 2)
        self.p = 2.0 * n / (n - 2)

    def _breaks(self, lams):
        # resolve each core scale 1/lam and the cutoff transition
        core = {c / lam for lam in lams for c in (0.5, 2.0, 8.0, 32.0, 128.0) if c / lam < self.eps}
        return sorted(core) + [self.eps, 1.5 * self.eps, 2.0 * self.eps]

    def ball(self, f, *lams, tol=1e-12) -> float:
        """omega_n * int_0^{2 eps} r^(n-1) f(r) dr."""
        edges = [0.0] + self._breaks(lams)
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            total += integrate.quad(lambda r: r ** (self.n - 1) * f(r), lo, hi,
                                    epsabs=0.0, epsrel=tol, limit=200)[0]
        return self.omega * total

    # single profiles ---------------------------------------------------------
    def phi(self, r, lam):
        return bubble_profile(r, lam, self.n, self.eps)

    def peak(self, r, lam):
        return peak_profile(r, lam, self.eps)

    def bubble_moment(self, lam, power) -> float:
        return self.ball(lambda r: self.phi(r, lam) ** power, lam)

    def bubble_dirichlet(self, lam) -> float:
        return self.ball(lambda r: bubble_profile_dr(r, lam, self.n, self.eps) ** 2, lam)

    def peak_integral(self, lam) -> float:
        return self.ball(lambda r: self.peak(r, lam), lam)

    # constant-plus-bubble states ------------------------------------------------
    def linear_data(self, lam) -> dict:
        return {"D": self.bubble_dirichlet(lam), "I1": self.bubble_moment(lam, 1),
                "I2": self.bubble_moment(lam, 2)}

    def r_value(self, alpha, alpha1, data) -> float:
        return (self.cn * alpha1**2 * data["D"] - self.volume * alpha**2
                - 2 * alpha * alpha1 * data["I1"] - alpha1**2 * data["I2"])

    def moment(self, alpha, alpha1, lam, e=None, j=0) -> float:
        """Torus integral of (alpha + alpha1 phi)^e * phi^j, far field included."""
        e = self.p if e is None else e
        if j == 0:
            f = lambda r: (alpha + alpha1 * self.phi(r, lam)) ** e - alpha**e
            return self.volume * alpha**e + self.ball(f, lam)
        return self.ball(lambda r: (alpha + alpha1 * self.phi(r, lam)) ** e * self.phi(r, lam) ** j, lam)

    def k_value(self, alpha, alpha1, lam, alpha_bar, peak_lams) -> float:
        """k for K = -alpha_bar + peaks, bubble sitting on the first peak."""
        lam_own, *others = peak_lams
        norm = self.moment(alpha, alpha1, lam)
        own = self.ball(lambda r: self.peak(r, lam_own) * (alpha + alpha1 * self.phi(r, lam)) ** self.p,
                        lam, lam_own)
        rest = sum(alpha**self.p * self.peak_integral(lo) for lo in others)
        return -alpha_bar * norm + own + rest
