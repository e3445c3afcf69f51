"""Constitutive laws: conductivities, boundary exchange, Kirchhoff transform.

Every law is a piecewise polynomial in the temperature so that the Kirchhoff
transform ``K(r) = int_0^r k`` has an exact antiderivative and its inverse
``gamma`` can be evaluated in closed form (or by a bracketed Newton iteration
on a single polynomial piece).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

__all__ = [
    "LawSpec",
    "MaterialLawError",
    "MaterialLaws",
    "PiecewisePoly",
    "Truncation",
    "make_material_laws",
    "truncate",
]

FAMILIES = ("constant", "affine", "sigmoid", "polynomial")


class MaterialLawError(ValueError):
    """Raised when a law descriptor violates the admissibility assumptions."""


class PiecewisePoly:
    """Piecewise polynomial on the real line.

    ``coefs[i]`` holds ascending power coefficients (in the global variable)
    of the piece between ``breaks[i-1]`` and ``breaks[i]``; piece 0 extends
    to -inf and the last piece to +inf.
    """

    def __init__(self, breaks, coefs):
        self.breaks = np.asarray(breaks, dtype=float).reshape(-1)
        coefs = np.atleast_2d(np.asarray(coefs, dtype=float))
        if coefs.shape[0] != self.breaks.size + 1:
            raise ValueError("need len(breaks) + 1 polynomial pieces")
        if self.breaks.size > 1 and np.any(np.diff(self.breaks) <= 0):
            raise ValueError("breaks must be strictly increasing")
        self.coefs = coefs

    @property
    def degree(self) -> int:
        return self.coefs.shape[1] - 1

    def piece_index(self, r):
        return np.searchsorted(self.breaks, r, side="right")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        c = self.coefs[self.piece_index(r)]
        out = np.zeros_like(r) + c[..., -1]
        for j in range(self.degree - 1, -1, -1):
            out = out * r + c[..., j]
        return out

    def deriv(self) -> "PiecewisePoly":
        d = self.degree
        if d == 0:
            return PiecewisePoly(self.breaks, np.zeros_like(self.coefs))
        powers = np.arange(1, d + 1)
        return PiecewisePoly(self.breaks, self.coefs[:, 1:] * powers)

    def antideriv(self) -> "PiecewisePoly":
        """Continuous antiderivative vanishing at 0."""
        d = self.degree
        raw = np.zeros((self.coefs.shape[0], d + 2))
        raw[:, 1:] = self.coefs / np.arange(1, d + 2)
        out = PiecewisePoly(self.breaks, raw)
        i0 = int(out.piece_index(0.0))
        # raw pieces vanish at 0, so piece i0 is already anchored
        for i in range(i0, self.breaks.size):
            b = self.breaks[i]
            out.coefs[i + 1, 0] += _horner(out.coefs[i], b) - _horner(out.coefs[i + 1], b)
        for i in range(i0 - 1, -1, -1):
            b = self.breaks[i]
            out.coefs[i, 0] += _horner(out.coefs[i + 1], b) - _horner(out.coefs[i], b)
        return out

    def tail_degree(self) -> int:
        """Largest effective degree of the two unbounded pieces."""
        deg = 0
        for c in (self.coefs[0], self.coefs[-1]):
            nz = np.nonzero(np.abs(c[1:]) > 0.0)[0]
            if nz.size:
                deg = max(deg, int(nz[-1]) + 1)
        return deg

    def extrema(self) -> tuple[float, float]:
        """Exact inf/sup over the real line (inf values for unbounded tails)."""
        lo, hi = np.inf, -np.inf
        for side, c in ((-1, self.coefs[0]), (1, self.coefs[-1])):
            nz = np.nonzero(np.abs(c[1:]) > 0.0)[0]
            if nz.size:
                lead = c[nz[-1] + 1] * side ** (nz[-1] + 1)
                if lead > 0:
                    hi = np.inf
                else:
                    lo = -np.inf
        candidates = list(self.breaks)
        dp = self.deriv()
        edges = np.concatenate(([-np.inf], self.breaks, [np.inf]))
        for i, c in enumerate(dp.coefs):
            nz = np.nonzero(np.abs(c) > 0.0)[0]
            if nz.size == 0 or nz[-1] == 0:
                continue
            for root in np.roots(c[: nz[-1] + 1][::-1]):
                if abs(root.imag) < 1e-12 and edges[i] < root.real < edges[i + 1]:
                    candidates.append(root.real)
        if not candidates:
            candidates = [0.0]
        vals = self(np.asarray(candidates))
        return min(lo, float(vals.min())), max(hi, float(vals.max()))


def _horner(c, x):
    out = 0.0
    for a in c[::-1]:
        out = out * x + a
    return out


@dataclass(frozen=True)
class LawSpec:
    """Law-family descriptor: a family name plus its numeric parameters."""

    family: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __str__(self) -> str:
        args = " ".join(f"{k}={_fmt(v)}" for k, v in self.params.items())
        return f"{self.family} {args}".strip()

    @classmethod
    def parse(cls, text: str) -> "LawSpec":
        """Parse ``"family key=value ..."``; polynomial takes ``coefs=a,b,c``."""
        tokens = text.split()
        if not tokens:
            raise MaterialLawError("empty law descriptor")
        params = {}
        for tok in tokens[1:]:
            if "=" not in tok:
                raise MaterialLawError(f"bad law parameter {tok!r}, expected key=value")
            key, val = tok.split("=", 1)
            if "," in val or key == "coefs":
                params[key] = tuple(float(v) for v in val.split(","))
            else:
                params[key] = float(val)
        return cls(tokens[0], params)


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ",".join(repr(float(x)) for x in v)
    return repr(float(v))


def _require(params, family, *names):
    missing = [n for n in names if n not in params]
    if missing:
        raise MaterialLawError(f"{family} law missing parameter(s) {missing}")


def build_law(spec: LawSpec) -> PiecewisePoly:
    """Compile a descriptor into a piecewise polynomial."""
    p = dict(spec.params)
    fam = spec.family
    if fam == "constant":
        _require(p, fam, "value")
        return PiecewisePoly([], [[p["value"]]])
    if fam == "affine":
        _require(p, fam, "slope")
        a = p.get("intercept", 0.0)
        b = p["slope"]
        lo = p.get("lo", -np.inf)
        hi = p.get("hi", np.inf)
        if lo > hi:
            raise MaterialLawError("affine law needs lo <= hi")
        if b == 0.0:
            return PiecewisePoly([], [[float(np.clip(a, lo, hi))]])
        pieces = []
        breaks = []
        # crossing points of the affine branch with the two clamps, left to right
        ends = [(lo - a) / b if np.isfinite(lo) else None, (hi - a) / b if np.isfinite(hi) else None]
        left_val, right_val = (lo, hi) if b > 0 else (hi, lo)
        left_x, right_x = (ends[0], ends[1]) if b > 0 else (ends[1], ends[0])
        if left_x is not None:
            breaks.append(left_x)
            pieces.append([left_val, 0.0])
        pieces.append([a, b])
        if right_x is not None:
            breaks.append(right_x)
            pieces.append([right_val, 0.0])
        if len(breaks) == 2 and breaks[0] == breaks[1]:
            raise MaterialLawError("affine law with lo == hi must use slope 0")
        return PiecewisePoly(breaks, pieces)
    if fam == "sigmoid":
        _require(p, fam, "lo", "hi", "center", "width")
        lo, hi, c, w = p["lo"], p["hi"], p["center"], p["width"]
        if w <= 0:
            raise MaterialLawError("sigmoid width must be positive")
        r0 = c - 0.5 * w
        # lo + (hi - lo) * (3 x^2 - 2 x^3), x = (r - r0) / w, expanded in r
        s = np.polynomial.Polynomial([-r0 / w, 1.0 / w])
        step = 3 * s**2 - 2 * s**3
        mid = (lo + (hi - lo) * step).coef
        mid = np.pad(mid, (0, 4 - mid.size))
        return PiecewisePoly(
            [r0, r0 + w],
            [[lo, 0, 0, 0], list(mid), [hi, 0, 0, 0]],
        )
    if fam == "polynomial":
        _require(p, fam, "coefs")
        coefs = p["coefs"]
        coefs = (coefs,) if np.isscalar(coefs) else tuple(coefs)
        return PiecewisePoly([], [list(coefs)])
    raise MaterialLawError(f"unknown law family {fam!r}; expected one of {FAMILIES}")


@dataclass(frozen=True)
class Truncation:
    """Symmetric clamp to ``[-1/tau, 1/tau]``."""

    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("truncation parameter tau must be positive")

    @property
    def bound(self) -> float:
        return 1.0 / self.tau

    def __call__(self, r):
        return np.clip(r, -self.bound, self.bound)


def truncate(t: Truncation, r):
    return t(r)


@dataclass(frozen=True, eq=False)
class MaterialLaws:
    """Validated constitutive laws and the derived Kirchhoff machinery."""

    sigma: PiecewisePoly
    k: PiecewisePoly
    h: PiecewisePoly
    sigma_lo: float
    sigma_hi: float
    k_lo: float
    k_hi: float
    c_beta: float
    specs: tuple[LawSpec, LawSpec, LawSpec]
    sample_range: tuple[float, float] = (-50.0, 50.0)
    tol_inv: float = 1e-12

    def __post_init__(self):
        K = self.k.antideriv()
        object.__setattr__(self, "_K", K)
        object.__setattr__(self, "_K_breaks", K(K.breaks))

    @property
    def sigma_constant(self) -> bool:
        return self.sigma_lo == self.sigma_hi

    def kirchhoff(self, theta):
        """K(theta) = int_0^theta k."""
        return self._K(theta)

    def kirchhoff_inverse(self, u):
        """gamma(u) = K^{-1}(u), exact up to ``tol_inv * max(1, |u|)``."""
        u = np.asarray(u, dtype=float)
        K = self._K
        idx = np.searchsorted(self._K_breaks, u, side="right")
        c = K.coefs[idx]
        out = np.empty_like(u)
        deg = K.degree
        # effective degree per entry
        eff = np.zeros(u.shape, dtype=int)
        for j in range(1, deg + 1):
            eff = np.where(c[..., j] != 0.0, j, eff)
        lin = eff <= 1
        if np.any(lin):
            out[lin] = (u[lin] - c[lin, 0]) / c[lin, 1]
        quad = eff == 2
        if np.any(quad):
            a, b, c0 = c[quad, 2], c[quad, 1], c[quad, 0] - u[quad]
            s = np.sqrt(np.maximum(b * b - 4 * a * c0, 0.0))
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(b >= 0, -2 * c0 / (b + s), (s - b) / (2 * a))
            out[quad] = r
        high = eff > 2
        if np.any(high):
            out[high] = self._bracketed_newton(u[high], idx[high])
        # one Newton polish step against roundoff in the closed forms
        out = out - (K(out) - u) / self.k(out)
        return out if out.ndim else float(out)

    def _bracketed_newton(self, u, idx):
        K, kb = self._K, self.k.breaks
        edges = np.concatenate(([-np.inf], kb, [np.inf]))
        lo, hi = edges[idx].copy(), edges[idx + 1].copy()
        # interior pieces are bounded; start from the secant guess
        Klo, Khi = K(lo), K(hi)
        r = lo + (u - Klo) / (Khi - Klo) * (hi - lo)
        for _ in range(200):
            f = K(r) - u
            done = np.abs(f) <= self.tol_inv * np.maximum(1.0, np.abs(u)) * 0.01
            if np.all(done):
                break
            lo = np.where(f < 0, r, lo)
            hi = np.where(f > 0, r, hi)
            step = r - f / self.k(r)
            bad = ~((step > lo) & (step < hi))
            r = np.where(done, r, np.where(bad, 0.5 * (lo + hi), step))
        return r

    def gamma_prime(self, u):
        """d gamma / du = 1 / k(gamma(u)), in [1/k^, 1/k_*]."""
        return 1.0 / self.k(self.kirchhoff_inverse(u))

    def beta(self, u):
        """Boundary flux density beta(u) = h(gamma(u))."""
        return self.h(self.kirchhoff_inverse(u))

    def beta_prime(self, u, rel_step: float = 1e-7):
        """Centered finite-difference slope of beta."""
        u = np.asarray(u, dtype=float)
        du = rel_step * np.maximum(1.0, np.abs(u))
        return (self.beta(u + du) - self.beta(u - du)) / (2 * du)

    def beta_of_u(self, u):
        return self.beta(u)


def _growth_constant(h: PiecewisePoly, laws_k: PiecewisePoly, rng) -> float:
    """Sampled sup of |beta| / (1 + min(beta_hat, |r|)) over the range."""
    K = laws_k.antideriv()
    theta = np.linspace(rng[0], rng[1], 20001)
    u = K(theta)
    beta = h(theta)
    # beta_hat(u) = int_0^u beta, trapezoid on the monotone u grid
    i0 = int(np.argmin(np.abs(u)))
    seg = 0.5 * (beta[1:] + beta[:-1]) * np.diff(u)
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    bhat = cum - cum[i0] - beta[i0] * (0.0 - u[i0])
    return float(np.max(np.abs(beta) / (1.0 + np.minimum(np.maximum(bhat, 0.0), np.abs(u)))))


def make_material_laws(
    sigma: LawSpec | str,
    k: LawSpec | str,
    h: LawSpec | str,
    sample_range: tuple[float, float] = (-50.0, 50.0),
) -> MaterialLaws:
    """Build and validate a law set.

    Rejects non-positive or unbounded conductivities, an exchange law with
    ``h(0) != 0`` or decreasing somewhere, and exchange laws growing faster
    than linearly (the boundary growth bound fails for those).
    """
    specs = tuple(LawSpec.parse(s) if isinstance(s, str) else s for s in (sigma, k, h))
    sig_pp, k_pp, h_pp = (build_law(s) for s in specs)

    bounds = {}
    for name, pp in (("sigma", sig_pp), ("k", k_pp)):
        lo, hi = pp.extrema()
        if not np.isfinite(hi) or not np.isfinite(lo):
            raise MaterialLawError(f"{name} must be bounded on the real line")
        if lo <= 0:
            raise MaterialLawError(f"{name} lower bound must be positive, got {lo}")
        bounds[name] = (lo, hi)

    h0 = float(h_pp(0.0))
    if h0 != 0.0:
        raise MaterialLawError(f"exchange law must satisfy h(0) = 0, got h(0) = {h0}")
    r = np.concatenate((np.linspace(*sample_range, 20001), h_pp.breaks))
    r = np.sort(r)
    hv = h_pp(r)
    if np.any(np.diff(hv) < -1e-12 * max(1.0, float(np.max(np.abs(hv))))):
        raise MaterialLawError("exchange law h must be non-decreasing")
    # tails beyond the sampled window
    if h_pp.deriv()(np.array([sample_range[0] * 1e3, sample_range[1] * 1e3])).min() < 0:
        raise MaterialLawError("exchange law h must be non-decreasing")
    if h_pp.tail_degree() > 1:
        raise MaterialLawError(
            "exchange law grows faster than linearly; the boundary growth bound "
            "|beta(r)| <= C (1 + min(beta_hat(r), |r|)) fails"
        )
    c_beta = _growth_constant(h_pp, k_pp, sample_range)

    return MaterialLaws(
        sigma=sig_pp,
        k=k_pp,
        h=h_pp,
        sigma_lo=bounds["sigma"][0],
        sigma_hi=bounds["sigma"][1],
        k_lo=bounds["k"][0],
        k_hi=bounds["k"][1],
        c_beta=c_beta,
        specs=specs,
        sample_range=tuple(sample_range),
    )
