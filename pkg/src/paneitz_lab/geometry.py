"""Model 4-manifolds, fields on them, and quadrature.

Two geometries are supported:

* ``torus``  -- the flat unit torus ``T^4 = R^4 / Z^4`` sampled on a uniform
  ``n^4`` grid.  The spectral basis is the discrete Fourier basis.
* ``sphere`` -- the round unit sphere ``S^4`` restricted to zonal functions
  (functions of the colatitude ``theta`` from the north pole).  Quadrature is
  Gauss-Jacobi in ``t = cos(theta)`` with weight ``(1 - t^2)``, which is the
  ``sin^3(theta)`` volume density, and the spectral basis is the orthonormal
  Gegenbauer family ``C_l^{3/2}(t)``.

A model may carry a conformal factor ``v``; the metric is then
``g = exp(2 v) g0`` and the volume element picks up ``exp(4 v)``.
"""

from __future__ import annotations

import json
import math
from functools import cached_property

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

__all__ = [
    "ManifoldModel",
    "Field",
    "make_model",
    "integrate",
    "s3_moment",
    "s3_quadrature",
    "random_field",
    "gegenbauer_table",
    "SPHERE_VOLUME",
    "S3_AREA",
]

S3_AREA = 2.0 * math.pi**2
SPHERE_VOLUME = 8.0 * math.pi**2 / 3.0

MIN_TORUS_N = 8
MIN_SPHERE_LMAX = 8
_ZONAL_TOL = 1e-12


def gegenbauer_table(l_max, t):
    """Orthonormal zonal harmonics on ``S^4`` evaluated at ``t = cos(theta)``.

    Row ``l`` holds ``Y_l(t) = C_l^{3/2}(t) / sqrt(2 pi^2 h_l)`` with
    ``h_l = (l+1)(l+2)/(l+3/2)``, so that ``int_{S^4} Y_l Y_m dV = delta_lm``.
    """
    t = np.asarray(t, dtype=float)
    table = np.empty((l_max + 1,) + t.shape)
    c_prev = np.ones_like(t)
    table[0] = c_prev
    if l_max >= 1:
        c_cur = 3.0 * t
        table[1] = c_cur
        for n in range(1, l_max):
            c_next = (2.0 * (n + 1.5) * t * c_cur - (n + 2.0) * c_prev) / (n + 1.0)
            table[n + 1] = c_next
            c_prev, c_cur = c_cur, c_next
    ell = np.arange(l_max + 1, dtype=float)
    norms = np.sqrt(S3_AREA * (ell + 1.0) * (ell + 2.0) / (ell + 1.5))
    return table / norms.reshape((-1,) + (1,) * t.ndim)


def gegenbauer_dtheta_table(l_max, theta):
    """``d Y_l / d theta`` at colatitudes ``theta`` (interior points only)."""
    theta = np.asarray(theta, dtype=float)
    t = np.cos(theta)
    s = np.sin(theta)
    y = gegenbauer_table(l_max, t)
    ell = np.arange(l_max + 1, dtype=float)
    norms = np.sqrt(S3_AREA * (ell + 1.0) * (ell + 2.0) / (ell + 1.5))
    c = y * norms.reshape((-1,) + (1,) * t.ndim)
    # (1 - t^2) C_n' = -n t C_n + (n + 2) C_{n-1}   for lambda = 3/2
    one_minus_t2_dc = np.zeros_like(c)
    for n in range(1, l_max + 1):
        one_minus_t2_dc[n] = -n * t * c[n] + (n + 2.0) * c[n - 1]
    # d/dtheta = -sin(theta) d/dt
    dtheta = -one_minus_t2_dc / s
    return dtheta / norms.reshape((-1,) + (1,) * t.ndim)


class ManifoldModel:
    """A discretized model geometry, optionally conformally deformed.

    Instances are immutable once built.  Use :func:`make_model` rather than
    calling the constructor directly; it validates the resolution and the
    conformal factor.
    """

    def __init__(self, kind, n=None, l_max=None, n_theta=None, conformal_factor=None):
        self.kind = kind
        self.n = n
        self.l_max = l_max
        self.n_theta = n_theta
        if conformal_factor is not None:
            conformal_factor = np.array(conformal_factor, dtype=float)
            conformal_factor.setflags(write=False)
        self._v = conformal_factor

    # -- structure -------------------------------------------------------
    @property
    def is_torus(self):
        return self.kind == "torus"

    @property
    def is_sphere(self):
        return self.kind == "sphere"

    @property
    def shape(self):
        if self.is_torus:
            return (self.n,) * 4
        return (self.n_theta,)

    @property
    def resolution(self):
        if self.is_torus:
            return {"n": self.n}
        return {"l_max": self.l_max, "n_theta": self.n_theta}

    @property
    def grid_spacing(self):
        """Torus grid step, or the mean colatitude spacing on the sphere."""
        if self.is_torus:
            return 1.0 / self.n
        return math.pi / self.n_theta

    @property
    def conformal_factor(self):
        """The conformal factor ``v`` as a background field, or ``None``."""
        if self._v is None:
            return None
        return Field(self.background(), self._v)

    def background(self):
        if self._v is None:
            return self
        return ManifoldModel(self.kind, self.n, self.l_max, self.n_theta)

    def with_conformal_factor(self, v):
        """Same samples, metric ``exp(2 v) g0``.  ``v`` is a field or array."""
        values = v.values if isinstance(v, Field) else np.asarray(v, dtype=float)
        if values.shape != self.shape:
            raise ValueError(f"conformal factor shape {values.shape} does not match model shape {self.shape}")
        return ManifoldModel(self.kind, self.n, self.l_max, self.n_theta, values)

    def same_samples(self, other):
        return (
            self.kind == other.kind
            and self.n == other.n
            and self.l_max == other.l_max
            and self.n_theta == other.n_theta
        )

    def spec(self):
        """JSON-ready description (the conformal factor is listed by values)."""
        doc = {"kind": self.kind, "resolution": self.resolution}
        if self._v is not None:
            doc["conformal_factor"] = self._v.ravel().tolist()
        return doc

    # -- samples and quadrature ------------------------------------------
    @cached_property
    def _sphere_nodes(self):
        t, w = roots_jacobi(self.n_theta, 1.0, 1.0)
        order = np.argsort(-t)  # theta ascending
        return t[order], w[order]

    @property
    def t(self):
        """``cos(theta)`` at sphere nodes, ordered north to south."""
        return self._sphere_nodes[0]

    @property
    def theta(self):
        return np.arccos(np.clip(self.t, -1.0, 1.0))

    @cached_property
    def axis(self):
        """Torus grid coordinates along one axis."""
        return np.arange(self.n) / self.n

    @cached_property
    def background_weights(self):
        """Quadrature weights for ``dV_{g0}`` at each sample."""
        if self.is_torus:
            w = np.full(self.shape, 1.0 / self.n**4)
        else:
            w = S3_AREA * self._sphere_nodes[1]
        w.setflags(write=False)
        return w

    @cached_property
    def weights(self):
        """Quadrature weights for ``dV_g`` (includes ``exp(4 v)``)."""
        if self._v is None:
            return self.background_weights
        w = self.background_weights * np.exp(4.0 * self._v)
        w.setflags(write=False)
        return w

    @property
    def background_volume(self):
        return 1.0 if self.is_torus else SPHERE_VOLUME

    @cached_property
    def volume(self):
        if self._v is None:
            return self.background_volume
        return float(_fsum(self.weights))

    # -- spectral basis --------------------------------------------------
    @cached_property
    def basis(self):
        """Orthonormal zonal basis at the nodes, shape ``(l_max + 1, n_theta)``."""
        if not self.is_sphere:
            raise AttributeError("only sphere models carry a zonal basis table")
        b = gegenbauer_table(self.l_max, self.t)
        b.setflags(write=False)
        return b

    @cached_property
    def wavenumbers(self):
        """Integer Fourier wavenumbers along one torus axis (FFT ordering)."""
        return np.fft.fftfreq(self.n, 1.0 / self.n)

    @cached_property
    def k_squared(self):
        """``|k|^2`` on the FFT grid, broadcast to the full torus shape."""
        k = self.wavenumbers
        k2 = (
            k[:, None, None, None] ** 2
            + k[None, :, None, None] ** 2
            + k[None, None, :, None] ** 2
            + k[None, None, None, :] ** 2
        )
        k2.setflags(write=False)
        return k2

    @cached_property
    def degrees(self):
        return np.arange(self.l_max + 1)

    def analysis(self, values):
        """Physical samples to spectral coefficients (background basis)."""
        values = np.asarray(values)
        if self.is_torus:
            return np.fft.fftn(values) / self.n**4
        w = self.background_weights
        if values.ndim != 1:
            return self.basis @ (w * values)
        # the mean goes straight to degree 0, so a constant does not leak
        # quadrature roundoff into high degrees (where P multiplies it by l^4)
        c = math.fsum(w * values) / self.background_volume
        coeffs = self.basis @ (w * (values - c))
        coeffs[0] += c * math.sqrt(self.background_volume)
        return coeffs

    def synthesis(self, coeffs):
        if self.is_torus:
            return np.fft.ifftn(np.asarray(coeffs) * self.n**4).real
        return np.asarray(coeffs) @ self.basis

    # -- points ----------------------------------------------------------
    def torus_index(self, p):
        """Normalize a torus point (grid index or coordinates) to an index tuple."""
        arr = np.asarray(p)
        if arr.shape != (4,):
            raise ValueError("a torus point needs four coordinates")
        if np.issubdtype(arr.dtype, np.integer):
            return tuple(int(i) % self.n for i in arr)
        scaled = np.asarray(arr, dtype=float) * self.n
        idx = np.rint(scaled)
        if np.max(np.abs(scaled - idx)) > 1e-9:
            raise ValueError(f"point {tuple(arr)} is not a grid point of the n={self.n} torus")
        return tuple(int(i) % self.n for i in idx)

    def torus_displacement(self, p):
        """Signed periodic displacement ``x - p`` for every grid point.

        Returns four arrays broadcastable to the torus shape.
        """
        idx = self.torus_index(p)
        out = []
        for axis, i in enumerate(idx):
            d = (self.axis - i / self.n + 0.5) % 1.0 - 0.5
            shape = [1, 1, 1, 1]
            shape[axis] = self.n
            out.append(d.reshape(shape))
        return out

    def sphere_pole(self, p):
        """Return +1 for the north pole (theta = 0) or -1 for the south pole."""
        if isinstance(p, str):
            key = p.strip().lower()
            if key in ("north", "n", "pole"):
                return 1
            if key in ("south", "s", "antipole"):
                return -1
        elif np.ndim(p) == 0:
            th = float(p)
            if abs(th) < 1e-12:
                return 1
            if abs(th - math.pi) < 1e-12:
                return -1
        else:
            x = np.asarray(p, dtype=float)
            if x.shape == (5,) and np.allclose(np.abs(x[0]), 1.0) and np.allclose(x[1:], 0.0):
                return 1 if x[0] > 0 else -1
        raise ValueError(f"sphere point {p!r} is not the declared pole (zonal restriction)")

    def __repr__(self):
        conf = "" if self._v is None else ", conformal"
        return f"ManifoldModel({self.kind}, {self.resolution}{conf})"


class Field:
    """A real function sampled on a model.

    ``values`` are physical samples when ``representation == "physical"`` and
    spectral coefficients (background basis) when ``"spectral"``.
    """

    __array_priority__ = 100

    def __init__(self, model, values, representation="physical"):
        if representation not in ("physical", "spectral"):
            raise ValueError(f"unknown representation {representation!r}")
        values = np.asarray(values)
        expected = model.shape if (representation == "physical" or model.is_torus) else (model.l_max + 1,)
        if values.shape != expected:
            raise ValueError(f"values of shape {values.shape} do not match {model!r} ({expected})")
        if representation == "physical":
            values = values.astype(float, copy=False)
        self.model = model
        self.values = values
        self.representation = representation

    @classmethod
    def constant(cls, model, c):
        return cls(model, np.full(model.shape, float(c)))

    @classmethod
    def from_function(cls, model, fn):
        """Sample ``fn`` on the model.

        Torus: ``fn(x1, x2, x3, x4)`` with broadcastable coordinate arrays.
        Sphere: ``fn(theta)`` with the colatitude of each node.
        """
        if model.is_torus:
            a = model.axis
            vals = fn(a[:, None, None, None], a[None, :, None, None], a[None, None, :, None], a[None, None, None, :])
            return cls(model, np.broadcast_to(vals, model.shape).copy())
        return cls(model, np.asarray(fn(model.theta), dtype=float))

    # -- representation --------------------------------------------------
    def to_spectral(self):
        if self.representation == "spectral":
            return self
        return Field(self.model, self.model.analysis(self.values), "spectral")

    def to_physical(self):
        if self.representation == "physical":
            return self
        return Field(self.model, self.model.synthesis(self.values), "physical")

    @property
    def physical(self):
        return self.to_physical().values

    @property
    def spectral(self):
        return self.to_spectral().values

    def on(self, model):
        """Reattach the same samples to a model with identical samples."""
        if not self.model.same_samples(model):
            raise ValueError("models do not share a sample set")
        return Field(model, self.values, self.representation)

    # -- reductions ------------------------------------------------------
    def integral(self):
        return integrate(self.model, self)

    def mean(self):
        return self.integral() / self.model.volume

    def sup_norm(self):
        return float(np.max(np.abs(self.physical)))

    def map(self, fn):
        return Field(self.model, fn(self.physical))

    # -- arithmetic (physical) -------------------------------------------
    def _coerce(self, other):
        if isinstance(other, Field):
            if not self.model.same_samples(other.model):
                raise ValueError("fields live on different models")
            return other.physical
        return other

    def __add__(self, other):
        return Field(self.model, self.physical + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.model, self.physical - self._coerce(other))

    def __rsub__(self, other):
        return Field(self.model, self._coerce(other) - self.physical)

    def __mul__(self, other):
        return Field(self.model, self.physical * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field(self.model, self.physical / self._coerce(other))

    def __neg__(self):
        return Field(self.model, -self.physical)

    # -- serialization ---------------------------------------------------
    def to_dict(self):
        vals = self.values
        if np.iscomplexobj(vals):
            payload = {"real": vals.real.ravel().tolist(), "imag": vals.imag.ravel().tolist()}
        else:
            payload = vals.ravel().tolist()
        return {
            "kind": self.model.kind,
            "resolution": self.model.resolution,
            "representation": self.representation,
            "values": payload,
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc, model=None):
        if model is None:
            model = make_model(doc["kind"], **doc["resolution"])
        elif model.kind != doc["kind"] or model.resolution != doc["resolution"]:
            raise ValueError("document does not describe this model")
        vals = doc["values"]
        if isinstance(vals, dict):
            arr = np.asarray(vals["real"]) + 1j * np.asarray(vals["imag"])
        else:
            arr = np.asarray(vals, dtype=float)
        rep = doc["representation"]
        shape = model.shape if (rep == "physical" or model.is_torus) else (model.l_max + 1,)
        return cls(model, arr.reshape(shape), rep)

    @classmethod
    def from_json(cls, text, model=None):
        return cls.from_dict(json.loads(text), model)

    def __repr__(self):
        return f"Field({self.model!r}, {self.representation})"


def _fsum(a):
    return math.fsum(np.asarray(a).ravel())


def _zonal_values(model, fn):
    """Sample a callable on S^4 (points in R^5) and insist it is zonal."""
    rng = np.random.default_rng(12345)
    dirs = rng.normal(size=(4, 4))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    th = model.theta
    samples = []
    for d in dirs:
        pts = np.concatenate([np.cos(th)[:, None], np.sin(th)[:, None] * d[None, :]], axis=1)
        samples.append(np.asarray(fn(pts), dtype=float).reshape(-1))
    samples = np.array(samples)
    scale = max(1.0, float(np.max(np.abs(samples))))
    if np.max(np.ptp(samples, axis=0)) > _ZONAL_TOL * scale:
        raise ValueError("sphere conformal factor must be zonal (a function of colatitude only)")
    return samples[0]


def make_model(kind, n=None, l_max=None, n_theta=None, conformal_factor=None, resolution=None):
    """Build a validated :class:`ManifoldModel`.

    Parameters
    ----------
    kind : {"torus", "sphere"}
    n : int
        Grid points per axis (torus), at least 8.
    l_max : int
        Maximal zonal degree (sphere), at least 8.
    n_theta : int, optional
        Colatitude node count (sphere); defaults to ``2 * l_max + 2`` and may
        not be smaller than ``2 * l_max``.
    conformal_factor : Field, array or callable, optional
        ``v`` in ``g = exp(2 v) g0``.  A torus callable receives grid
        coordinate arrays ``(x1, x2, x3, x4)``; a sphere callable receives
        points of shape ``(m, 5)`` on the unit sphere with the pole at
        ``(1, 0, 0, 0, 0)``, and must be zonal.
    resolution : int, optional
        Shorthand for ``n`` or ``l_max``.
    """
    if kind not in ("torus", "sphere"):
        raise ValueError(f"unknown model kind {kind!r}")
    if kind == "torus":
        n = n if n is not None else resolution
        if n is None or int(n) < MIN_TORUS_N:
            raise ValueError(f"torus resolution must be at least {MIN_TORUS_N} per axis, got {n}")
        model = ManifoldModel("torus", n=int(n))
    else:
        l_max = l_max if l_max is not None else resolution
        if l_max is None or int(l_max) < MIN_SPHERE_LMAX:
            raise ValueError(f"sphere L_max must be at least {MIN_SPHERE_LMAX}, got {l_max}")
        l_max = int(l_max)
        n_theta = int(n_theta) if n_theta is not None else 2 * l_max + 2
        if n_theta < 2 * l_max:
            raise ValueError(f"sphere needs at least 2*L_max = {2 * l_max} colatitude nodes, got {n_theta}")
        model = ManifoldModel("sphere", l_max=l_max, n_theta=n_theta)

    if conformal_factor is None:
        return model
    if isinstance(conformal_factor, Field):
        if not conformal_factor.model.same_samples(model):
            raise ValueError("conformal factor lives on a different model")
        return model.with_conformal_factor(conformal_factor.physical)
    if callable(conformal_factor):
        if model.is_torus:
            v = Field.from_function(model, conformal_factor).values
        else:
            v = _zonal_values(model, conformal_factor)
        return model.with_conformal_factor(v)
    arr = np.asarray(conformal_factor, dtype=float)
    if np.ndim(arr) == 0:
        return model.with_conformal_factor(np.full(model.shape, float(arr)))
    if model.is_sphere and arr.shape != model.shape:
        raise ValueError("sphere conformal factor must be zonal: a 1-D array over the colatitude nodes")
    return model.with_conformal_factor(arr)


def integrate(model, f):
    """``int_M f dV_g`` with the model's (possibly conformal) volume element.

    Uses compensated summation so the result does not depend on the
    reduction order.
    """
    if isinstance(f, Field):
        if not f.model.same_samples(model):
            raise ValueError(f"field on {f.model!r} cannot be integrated over {model!r}")
        values = f.physical
    else:
        values = np.asarray(f, dtype=float)
        if values.shape != model.shape:
            raise ValueError(f"sample array of shape {values.shape} does not match {model!r}")
    return float(_fsum(model.weights * values))


def s3_quadrature(order=12):
    """Product Gauss rule on the unit 3-sphere.

    Exact for polynomials in ``x1..x4`` up to total degree ``2*order - 1``.
    Returns points of shape ``(m, 4)`` and weights summing to ``2 pi^2``.
    """
    t1, w1 = roots_jacobi(order, 0.5, 0.5)  # cos(psi), weight sin^2(psi)
    t2, w2 = roots_legendre(order)  # cos(theta), weight sin(theta)
    n_phi = 2 * order
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    w3 = np.full(n_phi, 2.0 * math.pi / n_phi)
    a, b, c = np.meshgrid(np.arange(order), np.arange(order), np.arange(n_phi), indexing="ij")
    a, b, c = a.ravel(), b.ravel(), c.ravel()
    s1 = np.sqrt(1.0 - t1[a] ** 2)
    s2 = np.sqrt(1.0 - t2[b] ** 2)
    pts = np.stack(
        [t1[a], s1 * t2[b], s1 * s2 * np.cos(phi[c]), s1 * s2 * np.sin(phi[c])],
        axis=1,
    )
    return pts, w1[a] * w2[b] * w3[c]


def s3_moment(multi_index):
    """Normalized moment ``(1 / 2 pi^2) int_{S^3} x^{i1} ... x^{ik} ds``.

    ``multi_index`` lists axis indices in ``0..3``; at most four entries.
    """
    idx = [int(i) for i in multi_index]
    if len(idx) > 4:
        raise ValueError("s3_moment supports multi-indices of length at most 4")
    if any(i < 0 or i > 3 for i in idx):
        raise ValueError("axis indices must lie in 0..3")
    pts, w = s3_quadrature(4)
    integrand = np.ones(len(w))
    for i in idx:
        integrand = integrand * pts[:, i]
    val = math.fsum(w * integrand) / S3_AREA
    # odd symmetry is exact; suppress quadrature roundoff
    counts = np.bincount(np.asarray(idx, dtype=int), minlength=4) if idx else np.zeros(4, int)
    if np.any(counts % 2):
        return 0.0
    return val


def random_field(model, seed=0, band=8, norm="energy", scale=1.0, mean=0.0):
    """Seeded band-limited random field with zero background mean.

    Only the ``band`` lowest non-zero eigen-shells carry energy: zonal
    degrees ``1..band`` on the sphere, wavenumber shells ``1 <= |k|^2 <= band``
    on the torus.  The result is scaled so that the chosen norm equals
    ``scale``: ``"energy"`` is ``(int u P u)^(1/2)``, ``"sup"`` the max norm.
    """
    rng = np.random.default_rng(seed)
    bg = model.background()
    if model.is_torus:
        mask = (bg.k_squared >= 1) & (bg.k_squared <= band)
        coeffs = (rng.normal(size=bg.shape) + 1j * rng.normal(size=bg.shape)) * mask
        values = np.fft.ifftn(coeffs).real
    else:
        coeffs = np.zeros(bg.l_max + 1)
        top = min(band, bg.l_max)
        coeffs[1 : top + 1] = rng.normal(size=top)
        values = bg.synthesis(coeffs)
    u = Field(bg, values)
    if norm == "energy":
        from .paneitz import energy_pairing

        size = math.sqrt(energy_pairing(bg, u))
    elif norm == "sup":
        size = u.sup_norm()
    else:
        raise ValueError(f"unknown norm {norm!r}")
    return Field(model, values * (scale / size) + mean)
