"""Paneitz Green functions and their local expansion.

``G_p`` solves ``P G_p + 2 Q = 16 pi^2 delta_p`` with ``int G_p dV = 0``.
The point mass is represented spectrally (every mode of ``delta_p`` kept up
to the model's resolution), so the returned field is the truncated series.
Near ``p``::

    G(x) = -2 log r + S0 + a_i x^i + a_ij x^i x^j + O(r^(2+alpha))

in normal coordinates, and :func:`expansion_fit` recovers ``S0``, ``a`` and
the symmetric matrix ``a_ij`` by least squares on an annulus around ``p``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import roots_legendre

from .geometry import Field, _zonal_values, gegenbauer_table, integrate
from .paneitz import apply_paneitz, multiplier_table, q_field

__all__ = [
    "GreenExpansion",
    "ConformalGreenReport",
    "green_function",
    "green_coefficients",
    "expansion_fit",
    "default_window",
    "green_conformal_check",
    "evaluate_at_pole",
]

MIN_RADIAL_SAMPLES = 8
_TRIU = [(i, j) for i in range(4) for j in range(i, 4)]


@dataclass
class GreenExpansion:
    """Fitted local expansion of a Green function at a point."""

    S0: float
    a: np.ndarray
    a_sym: np.ndarray
    window: tuple
    residual: float
    n_samples: int = 0
    n_radii: int = 0
    log_coefficient: float | None = None

    def hessian(self):
        """Second-order Taylor data in the ``(a_ij / 2) x^i x^j`` convention."""
        return 2.0 * self.a_sym

    def to_dict(self):
        return {
            "S0": float(self.S0),
            "a": [float(x) for x in self.a],
            "a_sym": [float(self.a_sym[i, j]) for i, j in _TRIU],
            "window": [float(w) for w in self.window],
            "residual": float(self.residual),
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc):
        a_sym = np.zeros((4, 4))
        for (i, j), val in zip(_TRIU, doc["a_sym"]):
            a_sym[i, j] = a_sym[j, i] = val
        return cls(doc["S0"], np.asarray(doc["a"], dtype=float), a_sym, tuple(doc["window"]), doc["residual"])


def evaluate_at_pole(field_, pole):
    """Value of a sphere field at a pole, through its zonal expansion."""
    model = field_.model
    y = gegenbauer_table(model.l_max, np.array(float(pole)))
    return float(field_.spectral @ y)


def _delta_coefficients(model, p):
    bg = model.background()
    if bg.is_torus:
        idx = bg.torus_index(p)
        k = bg.wavenumbers
        phase = np.ones(bg.shape, dtype=complex)
        for axis, i in enumerate(idx):
            shape = [1, 1, 1, 1]
            shape[axis] = bg.n
            phase = phase * np.exp(-2j * math.pi * k * i / bg.n).reshape(shape)
        return phase
    pole = bg.sphere_pole(p)
    return gegenbauer_table(bg.l_max, np.array(float(pole)))


def green_coefficients(model, p):
    """Spectral coefficients of ``G_p`` before the final mean normalization.

    On the torus these are ``exp(-2 pi i k.p) / (pi^2 |k|^4)``; on the sphere
    ``16 pi^2 Y_l(p) / (l (l+1) (l+2) (l+3))``.  On a conformal model the
    source ``16 pi^2 delta - 2 Q_g`` is pushed back to the background, which
    subtracts ``P_{g0} v + 2 Q_{g0}`` from the point mass.
    """
    bg = model.background()
    source = 16.0 * math.pi**2 * _delta_coefficients(bg, p)
    q0 = q_field(bg).q_field
    v = model.conformal_factor
    rhs = 2.0 * q0 if v is None else apply_paneitz(bg, v) + 2.0 * q0
    source = source - rhs.spectral
    table = multiplier_table(bg)
    out = np.zeros_like(source)
    nz = table > 0
    out[nz] = source[nz] / table[nz]
    return out


def green_function(model, p):
    """Green function ``G_p`` on ``model`` as a field with zero mean.

    ``p`` is a torus grid point (index tuple or coordinates) or a sphere pole
    (``"north"``/``"south"``).  The mean is taken with the model's own volume
    element.
    """
    coeffs = green_coefficients(model, p)
    values = model.background().synthesis(coeffs)
    g = Field(model, values)
    return g - g.mean()


def default_window(model):
    """Annulus used for expansion fits when none is given.

    Below ``n = 32`` the torus window widens to ``r <= 1/4`` so that it still
    holds at least eight distinct lattice radii.  Torus grids with ``n < 14``
    have too few radii in any admissible annulus and are rejected.
    """
    if model.is_torus:
        lo, hi = max(0.1, 2.0 / model.n), 0.2 if model.n >= 32 else 0.25
        if model.n < 14:
            raise ValueError(f"the n={model.n} torus is too coarse for an expansion fit (use n >= 14)")
        return (lo, hi)
    return (max(0.1, 2.0 * model.grid_spacing), 0.5)


def _sphere_directions():
    dirs = [np.eye(4)[i] * s for i in range(4) for s in (1.0, -1.0)]
    for i in range(4):
        for j in range(i + 1, 4):
            for si in (1.0, -1.0):
                for sj in (1.0, -1.0):
                    d = np.zeros(4)
                    d[i], d[j] = si, sj
                    dirs.append(d / math.sqrt(2.0))
    return np.array(dirs)


def _design(x, with_log=None):
    cols = [np.ones(len(x))]
    cols += [x[:, i] for i in range(4)]
    cols += [x[:, i] * x[:, j] for i, j in _TRIU]
    if with_log is not None:
        cols.append(with_log)
    return np.stack(cols, axis=1)


def _unpack(coef):
    s0 = float(coef[0])
    a = np.asarray(coef[1:5], dtype=float)
    a_sym = np.zeros((4, 4))
    for (i, j), c in zip(_TRIU, coef[5:15]):
        if i == j:
            a_sym[i, i] = c
        else:
            a_sym[i, j] = a_sym[j, i] = c / 2.0
    return s0, a, a_sym


def _window_samples(model, G, p, window, distance=None):
    """Displacements ``x`` (normal coordinates), radii and values in the annulus."""
    r_min, r_max = window
    h = model.grid_spacing
    limit = 0.25 if model.is_torus else math.pi / 4.0
    if r_min < 2.0 * h * (1.0 - 1e-12):
        raise ValueError(f"window r_min={r_min:g} is below twice the grid spacing ({2 * h:g})")
    if r_max > limit * (1.0 + 1e-12):
        raise ValueError(f"window r_max={r_max:g} exceeds the injectivity-scale bound {limit:g}")
    if not r_min < r_max:
        raise ValueError("window must satisfy r_min < r_max")
    vals = G.physical
    if model.is_torus:
        d = model.torus_displacement(p)
        r = np.sqrt(sum(di**2 for di in d))
        mask = (r >= r_min - 1e-12) & (r <= r_max + 1e-12)
        x = np.stack([np.broadcast_to(di, model.shape)[mask] for di in d], axis=1)
        return x, r[mask], vals[mask]
    pole = model.sphere_pole(p)
    theta = model.theta if pole > 0 else math.pi - model.theta
    mask = (theta >= r_min - 1e-12) & (theta <= r_max + 1e-12)
    rad = theta[mask] if distance is None else distance[mask]
    dirs = _sphere_directions()
    x = (rad[:, None, None] * dirs[None, :, :]).reshape(-1, 4)
    r = np.repeat(rad, len(dirs))
    y = np.repeat(vals[mask], len(dirs))
    return x, r, y


def expansion_fit(model, G, p, window=None, distance=None, fit_log=False):
    """Least-squares fit of ``G + 2 log r`` by ``S0 + a.x + x^T a_sym x``.

    Parameters
    ----------
    model, G, p
        Model, Green field and base point.
    window : (r_min, r_max), optional
        Fit annulus; see :func:`default_window`.
    distance : ndarray, optional
        Sphere only: radial distance to use at each node instead of the
        background colatitude (e.g. the geodesic distance of a conformal
        metric).
    fit_log : bool
        Additionally fit ``G`` itself with ``log r`` as a regressor and store
        its coefficient in ``log_coefficient`` (should be close to -2).
    """
    window = tuple(default_window(model) if window is None else window)
    x, r, y = _window_samples(model, G, p, window, distance)
    n_radii = len(np.unique(np.round(r, 12)))
    if n_radii < MIN_RADIAL_SAMPLES:
        raise ValueError(
            f"window {window} holds only {n_radii} distinct radii; need at least {MIN_RADIAL_SAMPLES}"
        )
    target = y + 2.0 * np.log(r)
    A = _design(x)
    coef, *_ = np.linalg.lstsq(A, target, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - target) ** 2)))
    s0, a, a_sym = _unpack(coef)
    log_coef = None
    if fit_log:
        B = _design(x, with_log=np.log(r))
        coef_log, *_ = np.linalg.lstsq(B, y, rcond=None)
        log_coef = float(coef_log[-1])
    return GreenExpansion(s0, a, a_sym, window, resid, len(y), n_radii, log_coef)


def _geodesic_distance_from_pole(model, v, pole, theta_max=math.pi):
    """Radial g-distance ``int_0^theta exp(v)`` for a zonal metric ``exp(2v) g0``.

    Nodes farther than ``theta_max`` from the pole get ``nan``.
    """
    coeffs = v.spectral
    nodes, weights = roots_legendre(32)
    theta = model.theta if pole > 0 else math.pi - model.theta
    out = np.full_like(theta, np.nan)
    idx = np.flatnonzero(theta <= theta_max)
    if idx.size == 0:
        return out
    s = 0.5 * theta[idx, None] * (nodes[None, :] + 1.0)
    ang = s if pole > 0 else math.pi - s
    vals = (coeffs @ gegenbauer_table(model.l_max, np.cos(ang).ravel())).reshape(s.shape)
    out[idx] = 0.5 * theta[idx] * (np.exp(vals) @ weights)
    return out


@dataclass
class ConformalGreenReport:
    """Outcome of the ``G~ = G - v`` and ``S0~ = S0 + v(p)`` checks."""

    sup_discrepancy: float
    constant_offset: float
    S0: float
    S0_tilde: float
    v_at_p: float
    s0_discrepancy: float
    expansion: GreenExpansion = field(repr=False, default=None)
    expansion_tilde: GreenExpansion = field(repr=False, default=None)

    def to_dict(self):
        d = asdict(self)
        d.pop("expansion")
        d.pop("expansion_tilde")
        return d


def green_conformal_check(model, v, p="north", window=None):
    """Compare the Green function of ``exp(2v) g0`` with ``G_p - v``.

    ``G~`` is computed independently by a spectral solve of the pushed-back
    equation and normalized to zero mean in ``dV_{g~}``.  Since that
    normalization is not the one implied by ``G - v``, the comparison is made
    modulo constants and the constant is reported as ``constant_offset``.
    ``S0~`` is fitted against the ``g~`` geodesic distance and compared with
    ``S0 + v(p)`` after removing the same constant.

    The default window is narrower than :func:`default_window` because the
    remainder of the deformed expansion grows with the derivatives of ``v``;
    ``l_max >= 512`` keeps the fit resolved there.
    """
    bg = model.background()
    if not bg.is_sphere:
        raise ValueError("the conformal Green check is defined on the sphere model")
    if callable(v) and not isinstance(v, Field):
        v = Field(bg, _zonal_values(bg, v))
    elif not isinstance(v, Field):
        arr = np.asarray(v, dtype=float)
        if arr.shape != bg.shape:
            raise ValueError("v must be zonal: a 1-D array over the colatitude nodes")
        v = Field(bg, arr)
    v = v.on(bg)
    pole = bg.sphere_pole(p)
    conf = bg.with_conformal_factor(v.physical)

    G = green_function(bg, p)
    Gt = green_function(conf, p)
    diff = Gt.physical - (G.physical - v.physical)
    offset = float(np.mean(diff))
    # the sup-norm modulo constants is attained by the mid-range shift
    mid = 0.5 * (np.max(diff) + np.min(diff))
    sup = float(np.max(np.abs(diff - mid)))

    if window is None:
        window = (max(0.04, 2.0 * bg.grid_spacing), 0.15)
    exp0 = expansion_fit(bg, G, p, window)
    dist = _geodesic_distance_from_pole(bg, v, pole, window[1] + 1e-9)
    exp1 = expansion_fit(bg, Gt.on(bg), p, exp0.window, distance=dist)
    v_p = evaluate_at_pole(v, pole)
    s0_gap = (exp1.S0 - offset) - (exp0.S0 + v_p)
    return ConformalGreenReport(sup, offset, exp0.S0, exp1.S0, v_p, float(s0_gap), exp0, exp1)
