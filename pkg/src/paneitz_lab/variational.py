"""The functionals II and II_eps, their minimization and diagnostics.

For a model with Q-curvature ``Q`` (total ``k = 8 pi^2``) and a prescribed
positive function ``Qt``::

    II_eps(u) = int u P u + 4 (1 - eps/k) int Q u - (k - eps) log int Qt exp(4u)

with ``II = II_0``.  Every functional is invariant under ``u -> u + c``;
the minimizer works in the mean-zero gauge and reports a copy shifted so
that ``int Qt exp(4u) = 8 pi^2``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_legendre

from .geometry import Field, gegenbauer_dtheta_table, gegenbauer_table, integrate, random_field
from .paneitz import K_CRITICAL, apply_paneitz, background_q, energy_pairing, multiplier_table

__all__ = [
    "II_value",
    "II_eps_value",
    "II_eps_gradient",
    "log_mass",
    "II_eps_increment",
    "euler_lagrange_residual",
    "MinimizeResult",
    "minimize_II_eps",
    "write_trace_csv",
    "adams_deficit",
    "AdamsReport",
    "adams_check",
    "sphere_dilation",
    "BlowupDiagnostics",
    "blowup_diagnostics",
]


def _qt_values(model, Qt):
    if isinstance(Qt, Field):
        if not Qt.model.same_samples(model):
            raise ValueError("Qt lives on a different model")
        return Qt.physical
    if callable(Qt):
        return Field.from_function(model, Qt).physical
    return np.broadcast_to(np.asarray(Qt, dtype=float), model.shape)


def _as_field(model, u):
    if isinstance(u, Field):
        if not u.model.same_samples(model):
            raise ValueError("u lives on a different model")
        return Field(model, u.physical)
    return Field(model, np.asarray(u, dtype=float))


def log_mass(model, Qt, u):
    """``log int Qt exp(4u) dV`` evaluated with a max-shift for stability."""
    u = _as_field(model, u).physical
    q = _qt_values(model, Qt)
    top = float(np.max(4.0 * u))
    m = math.fsum((model.weights * q * np.exp(4.0 * u - top)).ravel())
    if not m > 0.0:
        raise ValueError("int Qt exp(4u) dV must be positive (log of a non-positive mass)")
    return top + math.log(m)


def _check_eps(eps):
    if not 0.0 <= eps < K_CRITICAL:
        raise ValueError(f"eps must satisfy 0 <= eps < 8 pi^2, got {eps!r}")


def II_eps_value(model, Qt, eps, u):
    """Regularized functional ``II_eps(u)``."""
    _check_eps(eps)
    u = _as_field(model, u)
    q = background_q(model)
    linear = integrate(model, q * u)
    return (
        energy_pairing(model, u)
        + 4.0 * (1.0 - eps / K_CRITICAL) * linear
        - (K_CRITICAL - eps) * log_mass(model, Qt, u)
    )


def II_value(model, Qt, u):
    """Critical functional ``II(u) = II_0(u)``."""
    return II_eps_value(model, Qt, 0.0, u)


def II_eps_gradient(model, Qt, eps, u):
    """``L^2(dV_g)`` gradient ``2 P u + 4(1 - eps/k) Q - 4 (k - eps) Qt e^{4u} / M``."""
    _check_eps(eps)
    u = _as_field(model, u)
    lm = log_mass(model, Qt, u)
    q = background_q(model).physical
    density = _qt_values(model, Qt) * np.exp(4.0 * u.physical - lm)
    g = (
        2.0 * apply_paneitz(model, u).physical
        + 4.0 * (1.0 - eps / K_CRITICAL) * q
        - 4.0 * (K_CRITICAL - eps) * density
    )
    return Field(model, g)


def _project(model, values):
    """Band-limit physical values to the model's spectral space.

    On the torus grid this is the identity; on the sphere it removes the
    part of a non-polynomial field (such as ``Qt e^{4u}``) above ``l_max``,
    which no discrete update can change.
    """
    if model.is_torus:
        return values
    bg = model.background()
    return bg.synthesis(bg.analysis(values))


def euler_lagrange_residual(model, Qt, eps, u, project=True):
    """``P u + 2(1 - eps/k)(Q - Qt e^{4u})`` after shifting ``u`` so the mass is ``8 pi^2``.

    With ``project=True`` the residual is band-limited to the spectral space,
    which is the discrete system the minimizer solves.
    """
    u = _as_field(model, u)
    shift = 0.25 * (math.log(K_CRITICAL) - log_mass(model, Qt, u))
    un = u + shift
    c = 2.0 * (1.0 - eps / K_CRITICAL)
    q = background_q(model).physical
    # P annihilates constants, so apply it before the shift (avoids leaking
    # the shift's rounding into high degrees, where the multiplier is large)
    r = apply_paneitz(model, u).physical + c * q - c * _qt_values(model, Qt) * np.exp(4.0 * un.physical)
    if project:
        r = _project(model, r)
    return Field(model, r)


# -- minimization --------------------------------------------------------------


@dataclass
class MinimizeResult:
    """Outcome of :func:`minimize_II_eps`.

    ``u`` is in the mean-zero working gauge and ``mass`` is its
    ``int Qt exp(4u)``; :attr:`u_normalized` is the shift with mass ``8 pi^2``.
    """

    u: Field
    value: float
    grad_norm: float
    iterations: int
    eps: float
    mass: float
    converged: bool
    tol: float
    Qt: object = field(repr=False, default=None)
    trace: list = field(repr=False, default_factory=list)

    @property
    def shift(self):
        return 0.25 * (math.log(K_CRITICAL) - math.log(self.mass))

    @property
    def u_normalized(self):
        return self.u + self.shift

    def to_dict(self, include_field=True):
        doc = {
            "eps": self.eps,
            "value": self.value,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "mass": self.mass,
            "shift": self.shift,
            "converged": self.converged,
            "tol": self.tol,
        }
        if include_field:
            doc["u"] = self.u.to_dict()
        return doc

    def to_json(self, include_field=True):
        return json.dumps(self.to_dict(include_field))


def write_trace_csv(result, path_or_file):
    """Iteration trace as CSV with header ``iter,value,grad_norm,step``."""

    def _write(fh):
        w = csv.writer(fh)
        w.writerow(("iter", "value", "grad_norm", "step"))
        for it, val, gn, step in result.trace:
            w.writerow((it, repr(float(val)), repr(float(gn)), repr(float(step))))

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            _write(fh)


class _Objective:
    """Caches the pieces of ``II_eps`` so that increments are exact to rounding."""

    def __init__(self, model, Qt, eps):
        self.model = model
        self.eps = eps
        self.qt = _qt_values(model, Qt)
        self.q = background_q(model).physical
        self.w = model.weights
        self.mult = multiplier_table(model)
        v = model.conformal_factor
        self.e4v = None if v is None else np.exp(4.0 * v.physical)
        self.lin = 4.0 * (1.0 - eps / K_CRITICAL)
        self.kk = K_CRITICAL - eps

    def pairing(self, a, b):
        ca, cb = a.spectral, b.spectral
        if self.model.is_torus:
            return float(math.fsum((self.mult * (ca * np.conj(cb)).real).ravel()))
        return float(math.fsum(self.mult * ca * cb))

    def gradient(self, u, lm):
        density = self.qt * np.exp(4.0 * u.physical - lm)
        pu = self.model.synthesis(u.spectral * self.mult)
        if self.e4v is not None:
            pu = pu / self.e4v
        return 2.0 * pu + self.lin * self.q - 4.0 * self.kk * density

    def increment(self, u, d, s, lm):
        """``II_eps(u + s d) - II_eps(u)`` without cancellation against ``II_eps(u)``."""
        quad = 2.0 * s * self.pairing(u, d) + s * s * self.pairing(d, d)
        lin = self.lin * s * math.fsum((self.w * self.q * d.physical).ravel())
        density = self.w * self.qt * np.exp(4.0 * u.physical - lm)
        ratio = math.fsum((density * np.expm1(4.0 * s * d.physical)).ravel())
        if ratio <= -1.0:
            return math.inf
        return quad + lin - self.kk * math.log1p(ratio)


def II_eps_increment(model, Qt, eps, u, d, s=1.0):
    """``II_eps(u + s d) - II_eps(u)`` computed without subtracting two large values.

    The quadratic and linear parts are expanded exactly and the log term is
    written as ``log1p`` of an ``expm1`` integral, so the result keeps full
    relative precision even when ``s d`` is tiny.
    """
    _check_eps(eps)
    u = _as_field(model, u)
    d = _as_field(model, d)
    return _Objective(model, Qt, eps).increment(u, d, s, log_mass(model, Qt, u))


def minimize_II_eps(model, Qt, eps, tol=1e-8, max_iter=20000, seed=None, u0=None, init_scale=1.0, record_trace=True):
    """Preconditioned descent for ``II_eps`` in the mean-zero gauge.

    Each step uses ``d = -(P + tau)^{-1} g / 2`` on the non-constant modes with
    ``tau = 1e-3`` times the smallest non-zero multiplier, followed by
    Armijo backtracking (constant ``1e-4``, halving from step 1).  The
    iteration stops once ``max |g| <= tol``, where ``g`` is the gradient
    band-limited to the spectral space (the full grid on the torus).

    Parameters
    ----------
    seed : int, optional
        Start from a seeded random band-limited field of Paneitz energy
        ``init_scale**2``; with ``seed=None`` and no ``u0`` the start is 0.
    """
    if not eps > 0.0:
        raise ValueError("minimize_II_eps requires eps > 0")
    _check_eps(eps)
    bg = model.background()
    if u0 is not None:
        u = _as_field(model, u0)
    elif seed is not None:
        u = random_field(bg, seed=seed, scale=init_scale).on(model)
    else:
        u = Field.constant(model, 0.0)
    u = u - u.mean()

    obj = _Objective(model, Qt, eps)
    table = obj.mult
    tau = 1e-3 * float(np.min(table[table > 0]))
    precond = np.zeros_like(table, dtype=float)
    precond[table > 0] = 1.0 / (table[table > 0] + tau)

    value = II_eps_value(model, Qt, eps, u)
    lm = log_mass(model, Qt, u)
    trace = []
    converged = False
    it = 0
    gnorm = math.inf
    while True:
        g = obj.gradient(u, lm)
        gnorm = float(np.max(np.abs(_project(model, g))))
        if gnorm <= tol:
            converged = True
            break
        if it >= max_iter:
            break
        # Riesz map to the background measure, then precondition the
        # half-gradient: the quadratic part of II_eps has Hessian 2P, so
        # step 1 is then its Newton step and high modes are damped
        dual = 0.5 * g if obj.e4v is None else 0.5 * g * obj.e4v
        d = Field(model, bg.synthesis(bg.analysis(-dual) * precond))
        slope = math.fsum((model.weights * g * d.physical).ravel())
        if slope >= 0.0:
            break
        step = 1.0
        while True:
            delta = obj.increment(u, d, step, lm)
            if delta <= 1e-4 * step * slope:
                break
            step *= 0.5
            if step < 1e-20:
                break
        if step < 1e-20:
            break
        u = u + step * d
        u = u - u.mean()
        value += delta
        lm = log_mass(model, Qt, u)
        it += 1
        if record_trace:
            trace.append((it, value, gnorm, step))

    value = II_eps_value(model, Qt, eps, u)
    return MinimizeResult(
        u=u,
        value=value,
        grad_norm=gnorm,
        iterations=it,
        eps=float(eps),
        mass=math.exp(lm),
        converged=converged,
        tol=tol,
        Qt=Qt,
        trace=trace,
    )


# -- Adams-Fontana deficit ------------------------------------------------------


def adams_deficit(model, u):
    """``log int e^{4u} - (1/8 pi^2) int u P u - 4 mean(u)`` on the background."""
    if model.conformal_factor is not None:
        raise ValueError("the Adams deficit is evaluated on the background metric")
    u = _as_field(model, u)
    return log_mass(model, 1.0, u) - energy_pairing(model, u) / K_CRITICAL - 4.0 * u.mean()


def sphere_dilation(model, t):
    """Conformal factor of the dilation of ``S^4`` fixing the poles.

    ``exp(u)`` is ``2t / ((1 + t^2) + (1 - t^2) cos theta)``: it equals ``t``
    at the north pole and concentrates there as ``t`` grows.  Near the pole
    ``u ~ log t - log(1 + t^2 theta^2 / 4)``.
    """
    c = np.cos(model.theta)
    vals = math.log(2.0 * t) - np.log((1.0 + t * t) + (1.0 - t * t) * c)
    return Field(model, vals)


def _torus_bubble(model, scale):
    x = model.axis
    s1 = np.sin(math.pi * x) ** 2 / math.pi**2
    s = s1[:, None, None, None] + s1[None, :, None, None] + s1[None, None, :, None] + s1[None, None, None, :]
    return Field(model, -np.log1p(s / scale**2))


@dataclass
class AdamsReport:
    """Empirical Adams-Fontana deficits."""

    samples: int
    seed: int
    max_deficit: float
    mean_deficit: float
    zero_deficit: float
    ladder: list
    ladder_bounded: bool

    def to_dict(self):
        return {
            "samples": self.samples,
            "seed": self.seed,
            "max_deficit": self.max_deficit,
            "mean_deficit": self.mean_deficit,
            "zero_deficit": self.zero_deficit,
            "ladder": [{"concentration": c, "deficit": d} for c, d in self.ladder],
            "ladder_bounded": self.ladder_bounded,
        }


def adams_check(model, samples=1000, seed=0, band=8, max_energy=None, ladder=None):
    """Scan the Adams-Fontana deficit over random fields and a bubble ladder.

    Sample ``j`` is a band-limited field of unit Paneitz energy, scaled by an
    amplitude drawn uniformly from ``[0, sqrt(max_energy)]`` (default
    ``max_energy = (8 pi)^2``), plus a random constant.  The ladder is a
    sequence of increasingly concentrated bubbles: sphere dilations
    ``t = 1, 2, 4, 8, 16`` or, on the torus, ``-log(1 + s(x)/scale^2)``
    with ``s`` a periodic version of ``|x|^2``.  It counts as bounded when no
    rung exceeds the random maximum by more than 5%.
    """
    bg = model.background()
    if model.conformal_factor is not None:
        raise ValueError("adams_check runs on the background metric")
    if max_energy is None:
        max_energy = (8.0 * math.pi) ** 2
    rng = np.random.default_rng(seed)
    amps = rng.uniform(0.0, math.sqrt(max_energy), size=samples)
    shifts = rng.normal(size=samples)
    seeds = rng.integers(0, 2**31 - 1, size=samples)
    deficits = np.empty(samples)
    for j in range(samples):
        u = random_field(bg, seed=int(seeds[j]), band=band, scale=float(amps[j]), mean=float(shifts[j]))
        deficits[j] = adams_deficit(bg, u)
    zero = adams_deficit(bg, Field.constant(bg, 0.0))

    if ladder is None:
        ladder = (1.0, 2.0, 4.0, 8.0, 16.0) if bg.is_sphere else (0.4, 0.3, 0.2, 0.15, 0.1)
    rungs = []
    for c in ladder:
        u = sphere_dilation(bg, c) if bg.is_sphere else _torus_bubble(bg, c)
        rungs.append((float(c), adams_deficit(bg, u)))
    top = float(np.max(deficits)) if samples else zero
    bound = max(top, zero)
    bounded = all(np.isfinite(d) and d <= bound + 0.05 * abs(bound) + 1e-9 for _, d in rungs)
    return AdamsReport(samples, seed, top, float(np.mean(deficits)) if samples else zero, zero, rungs, bounded)


# -- blow-up instrumentation ----------------------------------------------------


@dataclass
class BlowupDiagnostics:
    """Concentration data of a (near-)critical point."""

    x_max: object
    m: float
    r_scale: float
    lam: float
    profile_gap: float
    scaling_table: list

    def to_dict(self):
        xm = self.x_max
        if isinstance(xm, np.ndarray):
            xm = xm.tolist()
        return {
            "x_max": xm,
            "m": self.m,
            "r_scale": self.r_scale,
            "lambda": self.lam,
            "profile_gap": self.profile_gap,
            "scaling_table": [
                {"radius": r, "q": q, "integral": v, "slope": s} for r, q, v, s in self.scaling_table
            ],
        }


def _torus_eval(coeffs, k, points):
    """Trigonometric interpolant at arbitrary points (``points`` is ``(m, 4)``)."""
    n = coeffs.shape[0]
    out = np.empty(len(points))
    kk = [k.reshape([-1 if a == b else 1 for b in range(4)]) for a in range(4)]
    for j, x in enumerate(points):
        phase = 1.0
        for a in range(4):
            phase = phase * np.exp(2j * math.pi * kk[a] * x[a])
        out[j] = float(np.sum(coeffs * phase).real)
    return out


def _ray_directions():
    dirs = [np.eye(4)[i] for i in range(4)]
    dirs += [np.array(v) / 2.0 for v in ((1, 1, 1, 1), (1, -1, 1, -1), (1, 1, -1, -1))]
    return dirs


def blowup_diagnostics(model, result, Qt=None, q_list=(1.0, 2.0), radii=None, n_profile=17):
    """Locate the maximum, rescale by ``r = exp(-m)`` and compare with the bubble.

    Parameters
    ----------
    result : MinimizeResult or Field
        A minimizer (its normalized representative is used) or a raw field.
    Qt : optional
        Prescribed function; defaults to ``result.Qt``.  Fixes
        ``lambda = sqrt(3 Qt(x_max)) / 12``.
    q_list, radii
        Exponents and ball radii for the ``int_{B_r} |grad u|^q`` table.
        Radii must be at least twice the grid spacing.
    """
    if isinstance(result, MinimizeResult):
        u = result.u_normalized
        if Qt is None:
            Qt = result.Qt
    else:
        u = _as_field(model, result)
    if Qt is None:
        raise ValueError("Qt is required to fix the bubble scale")
    bg = model.background()
    h = bg.grid_spacing
    if radii is None:
        radii = [f * h for f in (2.0, 2.5, 3.0, 4.0)]
    radii = [float(r) for r in radii]
    if min(radii) < 2.0 * h * (1.0 - 1e-12):
        raise ValueError(f"radii must be at least twice the grid spacing ({2 * h:g})")
    qt = _qt_values(model, Qt)
    coeffs = bg.analysis(u.physical)

    rho = np.linspace(0.0, 1.0, n_profile)
    if bg.is_torus:
        idx = np.unravel_index(int(np.argmax(u.physical)), bg.shape)
        x0 = np.array(idx, dtype=float) / bg.n
        m = float(u.physical[idx])
        q0 = float(qt[idx])
        r_scale = math.exp(-m)
        lam = math.sqrt(3.0 * q0) / 12.0
        k = bg.wavenumbers
        gap = 0.0
        for d in _ray_directions():
            pts = x0[None, :] + r_scale * rho[:, None] * d[None, :]
            vals = _torus_eval(coeffs, k, pts) - m
            gap = max(gap, float(np.max(np.abs(vals + np.log1p(lam * rho**2)))))
        grads = []
        for a in range(4):
            shape = [1, 1, 1, 1]
            shape[a] = bg.n
            grads.append(np.fft.ifftn(coeffs * (2j * math.pi * k.reshape(shape)) * bg.n**4).real)
        gmag = np.sqrt(sum(gi**2 for gi in grads))
        disp = bg.torus_displacement(tuple(int(i) for i in idx))
        dist = np.sqrt(sum(di**2 for di in disp))
        weights = bg.background_weights

        def ball(r, q):
            mask = dist <= r + 1e-12
            return float(math.fsum((weights * gmag**q)[mask]))

        x_max = x0
    else:
        y = gegenbauer_table(bg.l_max, np.array([1.0, -1.0]))
        poles = coeffs @ y
        pole = 1.0 if poles[0] >= poles[1] else -1.0
        m = float(max(poles))
        q_field_ = Field(bg, qt)
        q0 = float(q_field_.spectral @ gegenbauer_table(bg.l_max, np.array(pole)))
        r_scale = math.exp(-m)
        lam = math.sqrt(3.0 * q0) / 12.0
        th = r_scale * rho
        ang = th if pole > 0 else math.pi - th
        vals = coeffs @ gegenbauer_table(bg.l_max, np.cos(ang)) - m
        gap = float(np.max(np.abs(vals + np.log1p(lam * rho**2))))
        nodes, wts = roots_legendre(64)

        def ball(r, q):
            s = 0.5 * r * (nodes + 1.0)
            a = s if pole > 0 else math.pi - s
            du = coeffs @ gegenbauer_dtheta_table(bg.l_max, a)
            return float(2.0 * math.pi**2 * 0.5 * r * np.sum(wts * np.abs(du) ** q * np.sin(s) ** 3))

        x_max = "north" if pole > 0 else "south"

    table = []
    lr = np.log(radii)
    for q in q_list:
        vals_q = [ball(r, q) for r in radii]
        with np.errstate(divide="ignore"):
            lv = np.log(vals_q)
        slope = float(np.polyfit(lr, lv, 1)[0]) if np.all(np.isfinite(lv)) else float("nan")
        for r, v in zip(radii, vals_q):
            table.append((r, float(q), v, slope))
    return BlowupDiagnostics(x_max, m, r_scale, lam, gap, table)
