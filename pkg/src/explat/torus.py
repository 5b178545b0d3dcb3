"""Multiplicative-group kernel: exponential and anchor-indexed logarithm.

The period lattice per torus coordinate is 2*pi*i*Z.  Logarithm branches are
carried as anchor values (the previous branch value) instead of integer
indices so continuation composes without a global branch-cut convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TORUS_PERIOD = 2j * math.pi

# largest Re z with e^z finite in doubles
_EXP_RE_MAX = 709.0


class ExpOverflow(OverflowError):
    """Re(z) beyond the double-precision exponent range."""


def torus_exp(z):
    """Coordinate-wise e^z; raises instead of silently saturating."""
    z = np.asarray(z, dtype=complex)
    if np.any(z.real > _EXP_RE_MAX):
        raise ExpOverflow("exp overflows double precision (Re z > 709)")
    out = np.exp(z)
    return out if out.shape else complex(out)


def torus_log(w):
    """Principal logarithm, Im in (-pi, pi]; w must be nonzero."""
    w = np.asarray(w, dtype=complex)
    if np.any(w == 0):
        raise ValueError("log of zero")
    out = np.log(w)
    # numpy yields Im = -pi on the negative real axis approached from below;
    # normalize the boundary to the +pi side
    out = np.where(out.imag == -math.pi, np.conj(out), out)
    return out if out.shape else complex(out)


def torus_log_near(w, anchor):
    """The branch of log w nearest to anchor: principal + 2*pi*i*k."""
    base = torus_log(w)
    base = np.asarray(base, dtype=complex)
    anchor = np.asarray(anchor, dtype=complex)
    k = np.round((anchor.imag - base.imag) / (2.0 * math.pi))
    out = base + TORUS_PERIOD * k
    return out if out.shape else complex(out)


def torus_reduce(z):
    """Representative of z mod 2*pi*i with Im in (-pi, pi] (ties to +pi)."""
    z = np.asarray(z, dtype=complex)
    m = np.ceil(z.imag / (2.0 * math.pi) - 0.5)
    out = z - TORUS_PERIOD * m
    return out if out.shape else complex(out)


@dataclass(frozen=True)
class GrowthExponent:
    """Measured polynomial-growth window: |z|^-q < |alpha(z)| < |z|^q."""

    q: int
    q_max: int = 16

    @classmethod
    def fit(cls, z_abs, alpha_abs, q_max: int = 16) -> "GrowthExponent":
        """Smallest integer q whose window covers all samples (|z| > 1)."""
        z_abs = np.asarray(z_abs, dtype=float)
        alpha_abs = np.asarray(alpha_abs, dtype=float)
        if np.any(z_abs <= 1.0):
            raise ValueError("growth fit needs samples with |z| > 1")
        if np.any(alpha_abs <= 0.0):
            raise ValueError("alpha vanished at a sample point")
        ratio = np.abs(np.log(alpha_abs) / np.log(z_abs))
        q = int(math.floor(np.max(ratio))) + 1
        if q > q_max:
            raise ValueError(f"growth exponent {q} exceeds cap {q_max}")
        return cls(q=q, q_max=q_max)

    def contains(self, z_abs: float, alpha_abs: float) -> bool:
        return z_abs ** (-self.q) < alpha_abs < z_abs ** self.q
