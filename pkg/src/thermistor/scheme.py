"""Time-lag slab scheme: delayed coefficients, slab fixed point, heat march.

Time nodes are ``t_m = m dt`` and a slab spans ``s = tau / dt`` steps. On the
slab ``[m0, m1]`` the conductivity is frozen at the temperature ``s`` nodes
earlier (the initial temperature for negative times), so every unit elliptic
response of the slab is known before the voltage is solved. The heat step
ending at node ``m`` uses the Joule source of node ``m``.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .circuit import (
    CircuitParams,
    ContractionError,
    const_block,
    fixed_point_slab,
    solve_slab_direct,
    threshold_tau_star,
)
from .diagnostics import DiagnosticsRecord, z_of_u
from .elliptic import energy_bounds, h1_norm, solve_unit
from .grid import Grid
from .laws import MaterialLaws, Truncation
from .parabolic import (
    HeatStepConfig,
    HeatStepError,
    gradient_squared,
    heat_state,
    heat_step,
    joule_source,
    mass_balance_residual,
)

__all__ = [
    "RefinementReport",
    "RunState",
    "SchemeConfig",
    "SchemeError",
    "exponent_pair",
    "run",
    "tau_refinement_study",
]


class SchemeError(RuntimeError):
    def __init__(self, message, slab=None):
        super().__init__(message if slab is None else f"slab {slab}: {message}")
        self.slab = slab


def _steps(a: float, b: float, what: str) -> int:
    n = round(a / b)
    if n < 1 or abs(a / b - n) > 1e-9 * max(1.0, a / b):
        raise ValueError(f"{what} must be a positive integer multiple of dt")
    return int(n)


@dataclass(frozen=True)
class SchemeConfig:
    tau: float
    dt: float
    T_final: float
    tol_fp: float = 1e-8
    tol_lin: float = 1e-10
    tol_newton: float = 1e-10
    alpha: float = 5.0 / 6.0
    max_fp_iter: int = 200
    max_newton: int = 30
    max_halvings: int = 6
    check_direct: bool = True

    def __post_init__(self):
        for name in ("tau", "dt", "T_final", "tol_fp", "tol_lin", "tol_newton"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        _steps(self.tau, self.dt, "tau")
        _steps(self.T_final, self.dt, "T_final")
        exponent_pair(self.alpha)

    @property
    def slab_steps(self) -> int:
        return _steps(self.tau, self.dt, "tau")

    @property
    def n_steps(self) -> int:
        return _steps(self.T_final, self.dt, "T_final")

    def with_tau(self, tau: float) -> "SchemeConfig":
        return SchemeConfig(**{**self.__dict__, "tau": tau})


def exponent_pair(alpha: float) -> tuple[float, float]:
    """Conjugate exponents ``p = (2 + 3a)/4`` and ``q = (3a + 2)/(3a - 2)``."""
    if not 2.0 / 3.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (2/3, 1), got {alpha!r}")
    p = (2.0 + 3.0 * alpha) / 4.0
    q = (3.0 * alpha + 2.0) / (3.0 * alpha - 2.0)
    if abs(1.0 / p + 1.0 / q - 1.0) > 1e-14:
        raise ArithmeticError("exponent pair is not conjugate")
    return p, q


@dataclass
class RunState:
    t: np.ndarray
    V: np.ndarray
    Vprime: np.ndarray
    W: np.ndarray
    I_R: np.ndarray
    theta: np.ndarray
    u: np.ndarray
    history: deque
    record: DiagnosticsRecord
    delay_lookups: int = 0
    off_node_lookups: int = 0
    fields: list | None = None
    snapshots: dict = field(default_factory=dict)


class _UnitCache:
    """Unit responses keyed by the node supplying the delayed temperature."""

    def __init__(self, g, laws, tol_lin, executor):
        self.g, self.laws, self.tol_lin, self.executor = g, laws, tol_lin, executor
        self.store = {}
        self.shared = None

    def get(self, keys, fields):
        missing = [(k, f) for k, f in zip(keys, fields) if k not in self.store]
        if missing:
            if self.laws.sigma_constant:
                # conductivity ignores temperature: one solve serves all nodes
                if self.shared is None:
                    sig = self.laws.sigma(missing[0][1])
                    self.shared = solve_unit(self.g, sig, self.tol_lin)
                for k, _ in missing:
                    self.store[k] = self.shared
            else:
                solve = lambda f: solve_unit(self.g, self.laws.sigma(f), self.tol_lin)
                if self.executor is None:
                    res = [solve(f) for _, f in missing]
                else:
                    res = list(self.executor.map(solve, [f for _, f in missing]))
                for (k, _), r in zip(missing, res):
                    self.store[k] = r
        return [self.store[k] for k in keys]

    def drop_before(self, key):
        for k in [k for k in self.store if k < key]:
            del self.store[k]


def run(
    config: SchemeConfig,
    params: CircuitParams,
    laws: MaterialLaws,
    g: Grid,
    theta0,
    theta_gamma,
    executor=None,
    keep_fields: bool = False,
    snapshot_times=(),
) -> RunState:
    """Pasted approximate solution on ``[0, T_final]``.

    ``theta_gamma(t)`` returns the exterior temperature on the lateral faces.
    """
    theta0 = g.check_field(theta0).copy()
    tau_star = threshold_tau_star(params, laws, g)
    if not config.tau < tau_star:
        raise SchemeError(f"tau = {config.tau!r} violates 0 < tau < tau* = {tau_star!r}")
    dt, s, M = config.dt, config.slab_steps, config.n_steps
    t_nodes = dt * np.arange(M + 1)
    F = params.f.integral(t_nodes)
    trunc = Truncation(config.tau)
    p, _ = exponent_pair(config.alpha)
    lp_exp = 4.0 * p / 3.0
    hcfg = HeatStepConfig(dt, config.tol_newton, config.max_newton, config.max_halvings)
    X, Y, Z = g.centers
    vol = g.cell_volume

    snap_nodes = {}
    for ts in snapshot_times:
        m = round(ts / dt)
        if not 0 <= m <= M or abs(m * dt - ts) > 1e-9 * max(1.0, ts):
            raise ValueError(f"snapshot time {ts!r} is not a time node")
        snap_nodes[m] = ts

    units = _UnitCache(g, laws, config.tol_lin, executor)
    state = heat_state(laws, theta0, 0.0)
    fields = {}  # node -> theta, for delayed lookups
    history = deque(maxlen=s + 1)
    history.append((0, state.theta))
    fields[0] = state.theta
    lookups = 0
    off_node = 0

    def delayed(m):
        nonlocal lookups, off_node
        lookups += 1
        j = m - s
        if j < 0:
            return -1, theta0
        if j not in fields:
            off_node += 1
            raise SchemeError(f"delayed node {j} is not stored")
        return j, fields[j]

    unit0 = units.get([-1], [theta0])[0]
    C = const_block(params, unit0.I_hat * params.V0)
    phi0_h1 = h1_norm(unit0.scaled(params.V0))
    record = DiagnosticsRecord(
        meta={
            "T": config.T_final,
            "tau": config.tau,
            "dt": dt,
            "tol_fp": config.tol_fp,
            "tol_newton": config.tol_newton,
            "tol_lin": config.tol_lin,
            "alpha": config.alpha,
            "phi0_h1": phi0_h1,
            "tau_star": tau_star,
            "const_rhs": C,
        }
    )
    V = np.empty(M + 1)
    Vp = np.empty(M + 1)
    W = np.empty(M + 1)
    IR = np.empty(M + 1)
    V[0], W[0], IR[0] = params.V0, 0.0, unit0.I_hat * params.V0
    Vp[0] = (C - IR[0] + F[0] - params.lambda2 * V[0]) / params.lambda1
    acc = {"z": 0.0, "lp": 0.0}
    all_fields = [state.theta.copy()] if keep_fields else None
    snapshots = {}

    def node_row(m, slab, fp_it, ratio, kappa, ddiff, unit, mass_res, newton_it, theta_prev):
        sol = unit.scaled(V[m])
        psi_b, phi_b = energy_bounds(sol, laws)
        gsq = gradient_squared(sol)
        if m > 0:
            zc = z_of_u(state.u, config.alpha)
            acc["z"] += dt * _gradient_energy(g, zc)
            acc["lp"] += dt * vol * math.fsum(np.abs(state.u) ** lp_exp)
            rate = (state.theta - theta_prev) / dt * vol
            duals = [math.fsum(rate), float(rate @ X), float(rate @ Y), float(rate @ Z)]
        else:
            duals = [0.0] * 4
        imin = int(np.argmin(state.theta))
        record.append(
            t=float(t_nodes[m]),
            V=float(V[m]),
            Vprime=float(Vp[m]),
            I_R=float(IR[m]),
            slab_index=slab,
            fp_iterations=fp_it,
            min_theta=float(state.theta[imin]),
            min_cell=imin,
            mass=vol * math.fsum(state.theta),
            energy_psi=sol.energy_psi,
            psi_bound=psi_b,
            energy_phi=sol.energy_phi,
            phi_bound=phi_b,
            mass_residual=mass_res,
            newton_iterations=newton_it,
            fp_ratio_max=ratio,
            kappa=kappa,
            direct_diff=ddiff,
            truncation_fraction=float(np.mean(gsq > trunc.bound)),
            z_norm_grad=math.sqrt(acc["z"]),
            lp_norm_u=acc["lp"] ** (1.0 / lp_exp),
            dual_1=duals[0],
            dual_x=duals[1],
            dual_y=duals[2],
            dual_z=duals[3],
        )
        return sol

    node_row(0, 0, 0, 0.0, 0.0, 0.0, unit0, 0.0, 0, None)
    if 0 in snap_nodes:
        snapshots[snap_nodes[0]] = _snapshot(state, unit0.scaled(V[0]))

    slab = 0
    m0 = 0
    while m0 < M:
        m1 = min(m0 + s, M)
        keyed = [delayed(m) for m in range(m0, m1 + 1)]
        slab_units = units.get([k for k, _ in keyed], [f for _, f in keyed])
        try:
            fp = fixed_point_slab(
                params, laws, g, None, (V[m0], W[m0]), dt, C, F[m0 : m1 + 1],
                tol_fp=config.tol_fp, max_iter=config.max_fp_iter, tol_lin=config.tol_lin,
                units=slab_units, t0=t_nodes[m0],
            )
        except ContractionError as e:
            raise SchemeError(str(e), slab) from e
        tr = fp.trace
        ddiff = float("nan")
        if config.check_direct:
            direct = solve_slab_direct(
                params, laws, g, None, (V[m0], W[m0]), dt, C, F[m0 : m1 + 1],
                units=slab_units, t0=t_nodes[m0],
            )
            ddiff = float(np.max(np.abs(direct.V - tr.V)))
        # pasting: the slab starts from the stored joint values
        V[m0 + 1 : m1 + 1] = tr.V[1:]
        W[m0 + 1 : m1 + 1] = tr.W[1:]
        Vp[m0 + 1 : m1 + 1] = tr.Vprime[1:]
        IR[m0 + 1 : m1 + 1] = tr.I_R[1:]
        ratio = max(fp.ratios) if fp.ratios else 0.0

        for j, m in enumerate(range(m0 + 1, m1 + 1), start=1):
            unit = slab_units[j]
            theta_d = keyed[j][1]
            sol = unit.scaled(V[m])
            src = joule_source(laws, theta_d, sol, trunc, g)
            tg = np.asarray(theta_gamma(t_nodes[m]), dtype=float)
            h_g = laws.h(tg)
            before = state
            try:
                state = heat_step(laws, g, before, src, h_g, hcfg)
            except HeatStepError as e:
                raise SchemeError(str(e), slab) from e
            state.t = float(t_nodes[m])
            mres = mass_balance_residual(g, before, state, src, h_g, laws, dt)
            node_row(m, slab, fp.iterations, ratio, fp.kappa, ddiff, unit, mres, state.newton_iterations, before.theta)
            fields[m] = state.theta
            history.append((m, state.theta))
            if keep_fields:
                all_fields.append(state.theta.copy())
            if m in snap_nodes:
                snapshots[snap_nodes[m]] = _snapshot(state, sol)
        # keep only the nodes a later delayed lookup can reach
        for k in [k for k in fields if k < m1 - s]:
            del fields[k]
        units.drop_before(m1 - s)
        m0 = m1
        slab += 1

    return RunState(
        t=t_nodes,
        V=V,
        Vprime=Vp,
        W=W,
        I_R=IR,
        theta=state.theta,
        u=state.u,
        history=history,
        record=record,
        delay_lookups=lookups,
        off_node_lookups=off_node,
        fields=all_fields,
        snapshots=snapshots,
    )


def _gradient_energy(g: Grid, v) -> float:
    """``sum over interior faces of area/h * jump^2``; zero for uniform ``v``."""
    v3 = g.as_3d(v)
    ax, ay, az = g.face_areas
    return sum(
        math.fsum((w * np.diff(v3, axis=k) ** 2).ravel())
        for k, w in enumerate((ax / g.hx, ay / g.hy, az / g.hz))
    )


def _snapshot(state, sol) -> dict:
    return {"theta": state.theta.copy(), "u": state.u.copy(), "phi": sol.phi.copy()}


@dataclass
class RefinementReport:
    taus: list
    d_theta: list
    d_V: list
    ratios: list
    nondecrease: bool
    truncation: list
    records: list
    p: float

    def lines(self) -> list[str]:
        out = [f"tau refinement, L^p(Q) with p = {self.p!r}", "k  tau_k  d_theta  d_V  ratio"]
        for k, (d, dv) in enumerate(zip(self.d_theta, self.d_V)):
            r = self.ratios[k - 1] if k > 0 else float("nan")
            out.append(f"{k}  {self.taus[k]!r}  {d:.17g}  {dv:.17g}  {r:.6g}")
        out.append("truncation fraction (max over nodes): " + ", ".join(f"{v:.6g}" for v in self.truncation))
        out.append(f"non-decrease flagged: {self.nondecrease}")
        return out


def tau_refinement_study(base_config: SchemeConfig, params, laws, g, data, executor=None, levels: int = 3):
    """Runs at ``tau, tau/2, tau/4`` with ``dt`` fixed and reports Cauchy differences.

    ``data`` is ``(theta0, theta_gamma)``.
    """
    theta0, theta_gamma = data
    taus = [base_config.tau / 2**k for k in range(levels)]
    configs = [base_config.with_tau(t) for t in taus]
    job = lambda c: run(c, params, laws, g, theta0, theta_gamma, keep_fields=True)
    states = list(executor.map(job, configs)) if executor is not None else [job(c) for c in configs]
    p, _ = exponent_pair(base_config.alpha)
    dt = base_config.dt
    d_theta, d_V = [], []
    for a, b in zip(states, states[1:]):
        acc = math.fsum(dt * g.cell_volume * math.fsum(np.abs(x - y) ** p) for x, y in zip(a.fields[1:], b.fields[1:]))
        d_theta.append(acc ** (1.0 / p))
        d_V.append(float(np.max(np.abs(a.V - b.V))))
    ratios = [d1 / d0 if d0 > 0 else 0.0 for d0, d1 in zip(d_theta, d_theta[1:])]
    trunc = [float(s.record.column("truncation_fraction").max()) for s in states]
    return RefinementReport(
        taus=taus,
        d_theta=d_theta,
        d_V=d_V,
        ratios=ratios,
        nondecrease=any(r >= 1.0 for r in ratios),
        truncation=trunc,
        records=[s.record for s in states],
        p=p,
    )
