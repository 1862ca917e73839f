"""Random Fourier feature maps for the Gaussian kernel, with analytic derivatives.

A basis of s frequency draws yields the 2s-dimensional paired cos/sin map

    phi(x) = (1/sqrt(s)) * (cos w_1.x, sin w_1.x, ..., cos w_s.x, sin w_s.x)

whose inner products approximate exp(-||x - z||^2 / sigma^2).  Frequencies are
drawn i.i.d. N(0, 2/sigma^2) per active dimension; rows are zero outside
``active_dims`` so features restricted to a coordinate subspace stay exactly
constant along the remaining coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RFFBasis:
    """Frequency matrix (s x n), kernel width, and the allowed input dims."""

    omegas: np.ndarray
    sigma: float
    active_dims: np.ndarray

    def __post_init__(self):
        omegas = np.asarray(self.omegas, dtype=float)
        active = np.asarray(self.active_dims, dtype=int)
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "active_dims", active)
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if omegas.ndim != 2:
            raise ValueError("omegas must be an s x n matrix")
        inactive = np.setdiff1d(np.arange(omegas.shape[1]), active)
        if inactive.size and np.any(omegas[:, inactive] != 0.0):
            raise ValueError("omegas must be zero outside active_dims")

    @property
    def s(self) -> int:
        return self.omegas.shape[0]

    @property
    def n(self) -> int:
        return self.omegas.shape[1]

    @property
    def dim(self) -> int:
        """Feature dimension 2s."""
        return 2 * self.omegas.shape[0]


@dataclass(frozen=True)
class FeatureEval:
    """Feature vector phi (2s,) and its Jacobian dphi (2s x n)."""

    phi: np.ndarray
    dphi: np.ndarray


def sample_rff(seed, sigma: float, s: int, active_dims, n: int = 6) -> RFFBasis:
    """Draw a deterministic frequency basis for the given seed.

    ``seed`` may be an integer or a numpy Generator (to tie the draw to a
    derived stream).  Entries are N(0, 2/sigma^2) on active dims, zero
    elsewhere, so that phi(x).phi(z) estimates exp(-||x-z||^2/sigma^2).
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    active = np.asarray(active_dims, dtype=int)
    omegas = np.zeros((s, n))
    omegas[:, active] = rng.normal(0.0, np.sqrt(2.0) / sigma, size=(s, active.size))
    return RFFBasis(omegas=omegas, sigma=sigma, active_dims=active)


def eval_features(basis: RFFBasis, x) -> FeatureEval:
    """Evaluate phi and dphi at a state.

    phi interleaves cos/sin pairs scaled by 1/sqrt(s), so phi.phi == 1
    exactly.  dphi rows are the analytic gradients (-sin, cos times the
    frequency row).
    """
    x = np.asarray(x, dtype=float)
    args = basis.omegas @ x
    scale = 1.0 / np.sqrt(basis.s)
    c = np.cos(args) * scale
    si = np.sin(args) * scale
    phi = np.empty(2 * basis.s)
    phi[0::2] = c
    phi[1::2] = si
    dphi = np.empty((2 * basis.s, basis.n))
    dphi[0::2] = -si[:, None] * basis.omegas
    dphi[1::2] = c[:, None] * basis.omegas
    return FeatureEval(phi=phi, dphi=dphi)


def eval_features_batch(basis: RFFBasis, X: np.ndarray):
    """Vectorized phi over rows of X; returns an (N, 2s) array."""
    args = X @ basis.omegas.T
    scale = 1.0 / np.sqrt(basis.s)
    out = np.empty((X.shape[0], 2 * basis.s))
    out[:, 0::2] = np.cos(args) * scale
    out[:, 1::2] = np.sin(args) * scale
    return out
