"""Integrated RLC voltage equation on one time slab.

The voltage obeys

    lam1 V' + lam2 V + lam3 W = C0 - I_R(t) + F(t),     W' = V,

with ``W(t) = int_0^t V``, ``F(t) = int_0^t f`` and ``C0`` the constant block
fixed by the initial data. ``I_R = I_hat(t) * Vbar(t)`` where ``I_hat`` is the
unit-voltage current through the thermistor for the delayed temperature, so
the slab map ``Vbar -> V`` is affine and the fixed point can also be obtained
by direct elimination.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .elliptic import UnitResponse, solve_unit
from .grid import Grid
from .laws import MaterialLaws

__all__ = [
    "CircuitParams",
    "ContractionError",
    "FixedPointResult",
    "Source",
    "VoltageTrace",
    "advance_voltage_slab",
    "const_block",
    "contraction_constant",
    "fixed_point_slab",
    "rhs_constant",
    "rlc_closed_form",
    "solve_slab_direct",
    "threshold_tau_star",
]

CONTRACTION_SLACK = 1.05


class ContractionError(RuntimeError):
    def __init__(self, message, ratios=()):
        super().__init__(message)
        self.ratios = list(ratios)


@dataclass(frozen=True)
class Source:
    """Current source ``f(t)`` with an exact running integral.

    kinds: ``zero``; ``constant`` (value); ``piecewise`` (times, values: f is
    ``values[i]`` on ``[times[i], times[i+1])``, zero before ``times[0]``);
    ``sinusoid`` (amplitude, omega, phase: ``A sin(omega t + phase)``).
    """

    kind: str = "zero"
    value: float = 0.0
    times: tuple = ()
    values: tuple = ()
    amplitude: float = 0.0
    omega: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "piecewise", "sinusoid"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.kind == "piecewise":
            if len(self.times) != len(self.values) or not self.times:
                raise ValueError("piecewise source needs matching non-empty times and values")
            if any(b <= a for a, b in zip(self.times, self.times[1:])):
                raise ValueError("piecewise source times must increase")
        if self.kind == "sinusoid" and self.omega == 0:
            raise ValueError("sinusoid source needs omega != 0")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(t)
        if self.kind == "constant":
            return np.full_like(t, self.value)
        if self.kind == "sinusoid":
            return self.amplitude * np.sin(self.omega * t + self.phase)
        idx = np.searchsorted(self.times, t, side="right") - 1
        vals = np.asarray(self.values, dtype=float)
        return np.where(idx >= 0, vals[np.maximum(idx, 0)], 0.0)

    def integral(self, t):
        """``F(t) = int_0^t f`` in closed form (t >= 0)."""
        t = np.asarray(t, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(t)
        if self.kind == "constant":
            return self.value * t
        if self.kind == "sinusoid":
            a, w, p = self.amplitude, self.omega, self.phase
            return a * (math.cos(p) - np.cos(w * t + p)) / w
        knots = np.asarray(self.times, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        out = np.zeros_like(t)
        for i, v in enumerate(vals):
            a = max(knots[i], 0.0)
            b = knots[i + 1] if i + 1 < knots.size else np.inf
            out += v * np.clip(np.minimum(t, b) - a, 0.0, None)
        return out

    def l1_norm(self, T: float) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return abs(self.value) * T
        if self.kind == "piecewise":
            pts = sorted({0.0, T, *[s for s in self.times if 0.0 < s < T]})
            return sum(abs(float(self(0.5 * (a + b)))) * (b - a) for a, b in zip(pts, pts[1:]))
        val, _ = quad(lambda s: abs(float(self(s))), 0.0, T, limit=500)
        return val

    def describe(self) -> str:
        if self.kind == "zero":
            return "zero"
        if self.kind == "constant":
            return f"constant value={self.value!r}"
        if self.kind == "sinusoid":
            return f"sinusoid amplitude={self.amplitude!r} omega={self.omega!r} phase={self.phase!r}"
        ts = ",".join(repr(float(s)) for s in self.times)
        vs = ",".join(repr(float(v)) for v in self.values)
        return f"piecewise times={ts} values={vs}"

    @classmethod
    def parse(cls, text: str) -> "Source":
        tokens = text.split()
        if not tokens:
            raise ValueError("empty source descriptor")
        kw = {}
        for tok in tokens[1:]:
            if "=" not in tok:
                raise ValueError(f"bad source parameter {tok!r}, expected key=value")
            key, val = tok.split("=", 1)
            if key in ("times", "values"):
                kw[key] = tuple(float(v) for v in val.split(","))
            elif key in ("value", "amplitude", "omega", "phase"):
                kw[key] = float(val)
            else:
                raise ValueError(f"unknown source parameter {key!r}")
        return cls(tokens[0], **kw)


@dataclass(frozen=True)
class CircuitParams:
    lambda1: float
    lambda2: float
    lambda3: float
    V0: float = 0.0
    V0p: float = 0.0
    f: Source = field(default_factory=Source)

    def __post_init__(self):
        bad = [n for n in ("lambda1", "lambda2", "lambda3") if not getattr(self, n) > 0]
        if bad:
            raise ValueError(f"circuit constants must be positive: {bad}")


@dataclass
class VoltageTrace:
    t_nodes: np.ndarray
    V: np.ndarray
    Vprime: np.ndarray
    W: np.ndarray
    I_R: np.ndarray


@dataclass
class FixedPointResult:
    trace: VoltageTrace
    iterations: int
    ratios: list
    diffs: list
    kappa: float


def threshold_tau_star(params: CircuitParams, laws: MaterialLaws, g: Grid) -> float:
    """Largest slab width for which the slab map is a contraction."""
    return params.lambda1 * params.lambda2 * g.ell**2 / (2.0 * laws.sigma_hi * g.base_area) ** 2


def contraction_constant(params: CircuitParams, laws: MaterialLaws, g: Grid, tau: float) -> float:
    return math.sqrt(tau / (params.lambda1 * params.lambda2)) * 2.0 * laws.sigma_hi * g.base_area / g.ell


def const_block(params: CircuitParams, I0: float) -> float:
    return params.lambda1 * params.V0p + params.lambda2 * params.V0 + I0


def rhs_constant(params: CircuitParams, laws: MaterialLaws, theta0, g: Grid, tol_lin=1e-10) -> float:
    """``lam1 V0' + lam2 V0 + I_R(theta0, V0)`` from the t = 0 potential."""
    unit = solve_unit(g, laws.sigma(g.check_field(theta0)), tol_lin)
    return const_block(params, unit.I_hat * params.V0)


def _trapezoid(lam1, a, lam3, gvec, V0, W0, dt):
    """Implicit trapezoidal sweep of ``lam1 V' + a(t) V + lam3 W = g(t)``, ``W' = V``."""
    n = gvec.size
    V = np.empty(n)
    W = np.empty(n)
    V[0], W[0] = V0, W0
    h = 0.5 * dt
    for m in range(n - 1):
        v, w = V[m], W[m]
        lhs = lam1 + h * a[m + 1] + lam3 * h * h
        rhs = lam1 * v + h * (gvec[m] - a[m] * v - lam3 * w + gvec[m + 1] - lam3 * w - lam3 * h * v)
        V[m + 1] = rhs / lhs
        W[m + 1] = w + h * (v + V[m + 1])
    return V, W


def _derivative(params, a, gvec, V, W):
    return (gvec - a * V - params.lambda3 * W) / params.lambda1


def advance_voltage_slab(params: CircuitParams, trace_init, ir_samples, const_rhs, f_int, dt, t0=0.0):
    """Trapezoidal solve with a prescribed current ``ir_samples`` at the slab nodes."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    V0, W0 = trace_init
    ir = np.asarray(ir_samples, dtype=float)
    gvec = const_rhs - ir + np.asarray(f_int, dtype=float)
    a = np.full(ir.size, params.lambda2)
    V, W = _trapezoid(params.lambda1, a, params.lambda3, gvec, V0, W0, dt)
    t = t0 + dt * np.arange(ir.size)
    return VoltageTrace(t, V, _derivative(params, a, gvec, V, W), W, ir)


def _i_hat(units) -> np.ndarray:
    return np.array([u.I_hat if isinstance(u, UnitResponse) else float(u) for u in units])


def unit_responses(g: Grid, laws: MaterialLaws, theta_delay_trace, tol_lin=1e-10, executor=None):
    sig = [laws.sigma(g.check_field(th)) for th in theta_delay_trace]
    if executor is None:
        return [solve_unit(g, s, tol_lin) for s in sig]
    return list(executor.map(lambda s: solve_unit(g, s, tol_lin), sig))


def fixed_point_slab(
    params: CircuitParams,
    laws: MaterialLaws,
    g: Grid,
    theta_delay_trace,
    slab_init,
    dt: float,
    const_rhs: float,
    f_int,
    tol_fp: float = 1e-8,
    max_iter: int = 200,
    tol_lin: float = 1e-10,
    units=None,
    t0: float = 0.0,
) -> FixedPointResult:
    """Iterate the slab map from the constant extension of the slab's initial voltage.

    Rejects slabs at or beyond the contraction threshold; checks every
    measured successive-difference ratio against ``1.05 * kappa``.
    """
    if units is None:
        units = unit_responses(g, laws, theta_delay_trace, tol_lin)
    i_hat = _i_hat(units)
    n = i_hat.size
    tau = dt * (n - 1)
    tau_star = threshold_tau_star(params, laws, g)
    if not tau < tau_star:
        raise ContractionError(f"slab width {tau!r} must satisfy 0 < tau < tau* = {tau_star!r}")
    kappa = contraction_constant(params, laws, g, tau)
    V0, W0 = slab_init
    f_int = np.asarray(f_int, dtype=float)
    Vbar = np.full(n, float(V0))
    diffs, ratios = [], []
    for it in range(1, max_iter + 1):
        trace = advance_voltage_slab(params, (V0, W0), i_hat * Vbar, const_rhs, f_int, dt, t0)
        d = float(np.max(np.abs(trace.V - Vbar)))
        diffs.append(d)
        if len(diffs) > 1 and diffs[-2] > 1e3 * np.finfo(float).eps * (1.0 + np.max(np.abs(Vbar))):
            r = d / diffs[-2]
            ratios.append(r)
            if r > CONTRACTION_SLACK * kappa:
                raise ContractionError(
                    f"fixed-point ratio {r:.4g} exceeds 1.05 * kappa = {CONTRACTION_SLACK * kappa:.4g}",
                    ratios,
                )
        Vbar = trace.V
        if d <= tol_fp:
            # report the current consistent with the returned voltage
            a = params.lambda2 + i_hat
            gvec = const_rhs + f_int
            trace.I_R = i_hat * trace.V
            trace.Vprime = _derivative(params, a, gvec, trace.V, trace.W)
            return FixedPointResult(trace, it, ratios, diffs, kappa)
    raise ContractionError(f"fixed point did not converge in {max_iter} iterations", ratios)


def solve_slab_direct(
    params: CircuitParams,
    laws: MaterialLaws,
    g: Grid,
    theta_delay_trace,
    slab_init,
    dt: float,
    const_rhs: float,
    f_int,
    tol_lin: float = 1e-10,
    units=None,
    t0: float = 0.0,
) -> VoltageTrace:
    """Fold ``I_R = I_hat V`` into the voltage coefficient and sweep once."""
    if units is None:
        units = unit_responses(g, laws, theta_delay_trace, tol_lin)
    i_hat = _i_hat(units)
    a = params.lambda2 + i_hat
    gvec = const_rhs + np.asarray(f_int, dtype=float)
    V, W = _trapezoid(params.lambda1, a, params.lambda3, gvec, slab_init[0], slab_init[1], dt)
    t = t0 + dt * np.arange(i_hat.size)
    return VoltageTrace(t, V, _derivative(params, a, gvec, V, W), W, i_hat * V)


def _homogeneous(l1, b, l3, t, v0, dv0):
    disc = b * b - 4.0 * l1 * l3
    if abs(disc) <= 1e-12 * b * b:
        s = -b / (2.0 * l1)
        return (v0 + (dv0 - s * v0) * t) * np.exp(s * t), (dv0 + s * (dv0 - s * v0) * t) * np.exp(s * t)
    sq = np.sqrt(complex(disc))
    s1, s2 = (-b + sq) / (2 * l1), (-b - sq) / (2 * l1)
    c2 = (dv0 - s1 * v0) / (s2 - s1)
    c1 = v0 - c2
    e1, e2 = np.exp(s1 * t), np.exp(s2 * t)
    return (c1 * e1 + c2 * e2).real, (c1 * s1 * e1 + c2 * s2 * e2).real


def rlc_closed_form(params: CircuitParams, conductance: float, t):
    """Exact voltage for a spatially uniform conductor.

    With ``I_R = conductance * V`` the integrated equation differentiates to
    ``lam1 V'' + (lam2 + conductance) V' + lam3 V = f``, ``V(0) = V0``,
    ``V'(0) = V0'``. Supports zero, constant, piecewise-constant (segment by
    segment) and sinusoidal sources.
    """
    t = np.asarray(t, dtype=float)
    l1, b, l3 = params.lambda1, params.lambda2 + conductance, params.lambda3
    f = params.f
    if f.kind == "sinusoid":
        A, w, p = f.amplitude, f.omega, f.phase
        z = A / (-l1 * w * w + 1j * b * w + l3)
        vp = lambda s: (z * np.exp(1j * (w * s + p))).imag
        dvp = lambda s: (1j * w * z * np.exp(1j * (w * s + p))).imag
        vh, _ = _homogeneous(l1, b, l3, t, params.V0 - vp(0.0), params.V0p - dvp(0.0))
        return vh + vp(t)
    if f.kind in ("zero", "constant"):
        c = 0.0 if f.kind == "zero" else f.value
        vh, _ = _homogeneous(l1, b, l3, t, params.V0 - c / l3, params.V0p)
        return vh + c / l3
    # piecewise: restart at each knot carrying (V, V')
    knots = sorted({0.0, *[s for s in f.times if s > 0.0]})
    out = np.empty_like(t)
    v, dv = params.V0, params.V0p
    for i, a in enumerate(knots):
        b_end = knots[i + 1] if i + 1 < len(knots) else np.inf
        c = float(f(a))
        sel = (t >= a) & (t < b_end) if np.isfinite(b_end) else (t >= a)
        vh, _ = _homogeneous(l1, b, l3, t[sel] - a, v - c / l3, dv)
        out[sel] = vh + c / l3
        if np.isfinite(b_end):
            vh, dvh = _homogeneous(l1, b, l3, np.array(b_end - a), v - c / l3, dv)
            v, dv = float(vh) + c / l3, float(dvh)
    return out
