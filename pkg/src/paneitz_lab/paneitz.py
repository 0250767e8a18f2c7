"""Paneitz operator, Q-curvature and the conformal transformation laws.

On both model backgrounds the Paneitz operator is diagonal in the spectral
basis:

* flat unit torus: ``P = Delta^2``, multiplier ``16 pi^4 |k|^4``;
* round ``S^4``:  ``P = Delta^2 - 2 Delta``, multiplier
  ``l (l+1) (l+2) (l+3)`` on zonal degree ``l``.

A conformal metric ``exp(2 v) g0`` is handled purely through covariance,
``P_{g} = exp(-4 v) P_{g0}`` and ``2 Q_g = exp(-4 v) (P_{g0} v + 2 Q_{g0})``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .geometry import Field, ManifoldModel, integrate

__all__ = [
    "K_CRITICAL",
    "SpectralMultiplier",
    "QData",
    "paneitz_multiplier",
    "multiplier_table",
    "laplacian_multiplier_table",
    "apply_paneitz",
    "apply_multiplier",
    "solve_paneitz",
    "q_field",
    "background_q",
    "conformal_q",
    "energy_pairing",
    "dirichlet_energy",
    "positivity_constant",
    "write_multiplier_csv",
]

K_CRITICAL = 8.0 * math.pi**2
TORUS_Q = K_CRITICAL  # effective Q with 2Q = 16 pi^2 and unit volume
SPHERE_Q = 3.0


def paneitz_multiplier(model, mode):
    """Eigenvalue of the background Paneitz operator on one spectral mode.

    ``mode`` is an integer 4-vector for the torus and a degree for the sphere.
    """
    if model.is_torus:
        k = np.asarray(mode, dtype=float)
        if k.shape != (4,):
            raise ValueError("torus modes are integer 4-vectors")
        return 16.0 * math.pi**4 * float(k @ k) ** 2
    ell = int(mode)
    if ell < 0:
        raise ValueError("zonal degree must be non-negative")
    return float(ell * (ell + 1) * (ell + 2) * (ell + 3))


def multiplier_table(model):
    """Multiplier on every spectral index of ``model`` (FFT order on the torus)."""
    bg = model.background()
    if bg.is_torus:
        return 16.0 * math.pi**4 * bg.k_squared**2
    ell = bg.degrees.astype(float)
    return ell * (ell + 1.0) * (ell + 2.0) * (ell + 3.0)


def laplacian_multiplier_table(model):
    """Eigenvalues of ``-Delta`` on the spectral indices."""
    bg = model.background()
    if bg.is_torus:
        return 4.0 * math.pi**2 * bg.k_squared
    ell = bg.degrees.astype(float)
    return ell * (ell + 3.0)


@dataclass(frozen=True)
class SpectralMultiplier:
    """Per-mode multiplier of the background Paneitz operator."""

    model: ManifoldModel
    values: np.ndarray

    @classmethod
    def for_model(cls, model):
        return cls(model.background(), multiplier_table(model))

    def smallest_nonzero(self):
        v = self.values
        return float(np.min(v[v > 0]))

    def rows(self):
        """``(mode, mu)`` rows; torus modes are grouped by ``|k|^2`` shells."""
        if self.model.is_torus:
            k2 = np.unique(self.model.k_squared)
            return [(int(s), 16.0 * math.pi**4 * float(s) ** 2) for s in k2]
        return [(int(ell), float(mu)) for ell, mu in enumerate(self.values)]


def write_multiplier_csv(model, path_or_file):
    """Export the multiplier table as CSV with header ``mode,mu``."""
    mult = SpectralMultiplier.for_model(model)
    header = ("k_squared" if model.is_torus else "degree", "mu")

    def _write(fh):
        w = csv.writer(fh)
        w.writerow(header)
        for mode, mu in mult.rows():
            w.writerow((mode, repr(mu)))

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            _write(fh)


def _check(model, u):
    if not isinstance(u, Field):
        u = Field(model, np.asarray(u, dtype=float))
    if not u.model.same_samples(model):
        raise ValueError(f"field on {u.model!r} does not belong to {model!r}")
    return u


def apply_multiplier(model, table, u):
    """Apply an arbitrary diagonal spectral operator on the background."""
    u = _check(model, u)
    coeffs = u.spectral * table
    return Field(model.background(), model.synthesis(coeffs))


def apply_paneitz(model, u):
    """``P_g u``; on a conformal model this is ``exp(-4 v) P_{g0} u``."""
    out = apply_multiplier(model, multiplier_table(model), u).physical
    v = model.conformal_factor
    if v is not None:
        out = np.exp(-4.0 * v.physical) * out
    return Field(model, out)


def solve_paneitz(model, f, rtol=1e-8):
    """Mean-zero solution of ``P_{g0} u = f`` on the background.

    Raises
    ------
    ValueError
        If ``f`` violates the solvability condition ``int f dV = 0``.
    """
    f = _check(model.background(), f)
    bg = model.background()
    total = integrate(bg, f)
    scale = math.sqrt(abs(integrate(bg, f * f)) * bg.volume)
    if abs(total) > rtol * max(scale, 1e-300):
        raise ValueError(
            f"solvability constraint violated: int f dV = {total:.3e} must vanish "
            "(constants are not in the range of P)"
        )
    table = multiplier_table(bg)
    coeffs = f.spectral
    out = np.zeros_like(coeffs)
    nz = table > 0
    out[nz] = coeffs[nz] / table[nz]
    return Field(bg, bg.synthesis(out))


@dataclass(frozen=True)
class QData:
    q_field: Field
    k_total: float


def q_field(model):
    """Background Q-curvature and its total.

    Sphere: ``Q = 3`` (``R = 12``, ``|Ric|^2 = 36``).  Torus: the effective
    ``Q = 8 pi^2`` of ``P u + 16 pi^2 = 2 h exp(4u)`` on a unit-volume flat
    torus, so that ``int Q dV = 8 pi^2`` in both cases.
    """
    bg = model.background()
    q = Field.constant(bg, TORUS_Q if bg.is_torus else SPHERE_Q)
    return QData(q, integrate(bg, q))


def conformal_q(model, v):
    """Q-curvature of ``exp(2 v) g0``, returned on the conformal model."""
    bg = model.background()
    v = _check(bg, v)
    pv = apply_paneitz(bg, v).physical
    q0 = q_field(bg).q_field.physical
    conf = bg.with_conformal_factor(v.physical)
    return Field(conf, 0.5 * np.exp(-4.0 * v.physical) * (pv + 2.0 * q0))


def background_q(model):
    """Q-curvature field of ``model`` itself (conformal law if deformed)."""
    v = model.conformal_factor
    if v is None:
        return q_field(model).q_field
    return conformal_q(model.background(), v).on(model)


def energy_pairing(model, u):
    """``int <u, u> dV_g = int u P_g u dV_g``, evaluated spectrally.

    The pairing is conformally invariant, so the background spectrum is
    used for every model.
    """
    u = _check(model, u)
    c = u.spectral
    table = multiplier_table(model)
    if model.is_torus:
        return float(math.fsum((table * np.abs(c) ** 2).ravel()))
    return float(math.fsum(table * c**2))


def dirichlet_energy(model, u):
    """``int |grad u|^2 dV_{g0}`` on the background."""
    u = _check(model, u)
    c = u.spectral
    table = laplacian_multiplier_table(model)
    if model.is_torus:
        return float(math.fsum((table * np.abs(c) ** 2).ravel()))
    return float(math.fsum(table * c**2))


def positivity_constant(model):
    """Best ``lambda`` in ``int u P u >= lambda int |grad u|^2``.

    The minimum of ``mu / (-Delta eigenvalue)`` over non-constant modes:
    ``4 pi^2`` on the torus and ``6`` on the sphere.
    """
    mu = multiplier_table(model)
    lap = laplacian_multiplier_table(model)
    nz = lap > 0
    return float(np.min(mu[nz] / lap[nz]))
