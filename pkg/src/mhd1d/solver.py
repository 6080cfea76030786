"""Semi-implicit time stepping for the Lagrangian planar-MHD system.

One accepted step advances the state through five sub-stages, each using the
freshest available fields:

  (a) longitudinal velocity: diffusion implicit (tridiagonal), total-pressure
      gradient explicit;
  (b) specific volume: conservative explicit update from the new velocity;
  (c) transverse velocity: diffusion implicit per component, magnetic tension
      explicit;
  (d) transverse magnetic field: diffusion implicit per component, with the
      new specific volume multiplying the time term;
  (e) temperature: fully implicit Newton solve with the conductivity
      relinearized every iteration, fed by the dissipation of stages (a)-(d).

Nonpositive v or theta anywhere discards the attempt, halves dt, and retries.
Interface diffusion coefficients are harmonic means of adjacent cell values;
all other center-to-node transfers are arithmetic means.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .constitutive import pressure, viscosity_mu
from .core import (
    FAR_FIELD_B,
    FAR_FIELD_THETA,
    FAR_FIELD_U,
    FAR_FIELD_V,
    FAR_FIELD_W,
    BoundaryCondition,
    GasState,
    Grid,
    PhysicalParams,
)


class SolverFailure(RuntimeError):
    """Base for unrecoverable stepping failures; carries the failing time."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (at t = {t:.6g})")
        self.t = t


class PositivityFailure(SolverFailure):
    """Raised when retry_max halvings of dt still produce v <= 0 or theta <= 0."""


class NewtonDivergence(SolverFailure):
    """Raised when the temperature solve hits its iteration cap twice in a row."""


class _PositivityRetry(Exception):
    pass


class _NewtonFailed(Exception):
    pass


@dataclass(frozen=True)
class StepControl:
    """Time-step controller and nonlinear-solve settings."""

    cfl: float = 0.4
    dt_min: float = 1e-10
    dt_max: float = 1.0
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    retry_max: int = 20

    def __post_init__(self):
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError(f"cfl must be in (0, 1], got {self.cfl}")
        if not self.dt_min < self.dt_max:
            raise ValueError(f"need dt_min < dt_max, got {self.dt_min} >= {self.dt_max}")
        if not self.newton_tol > 0.0:
            raise ValueError(f"newton_tol must be > 0, got {self.newton_tol}")


@dataclass
class StepReport:
    """Bookkeeping for one accepted step.

    The *_flux fields are the amounts the boundary terms added to the
    corresponding domain totals during this step (signed).
    """

    dt_used: float
    newton_iterations: int
    retries: int
    mass_flux: float = 0.0
    momentum_flux: float = 0.0
    energy_flux: float = 0.0
    entropy_flux: float = 0.0


@dataclass
class _BoundaryData:
    """Resolved boundary treatment for one stage evaluation.

    For far-field-type ends the ghost cell sits one dx beyond the last center
    and carries the far-field (or manufactured) values. A left wall replaces
    the ghost with a Dirichlet value at the node itself, half a cell away.
    """

    left_wall: bool
    isothermal: bool
    u_left: float
    u_right: float
    w_left: np.ndarray
    w_right: np.ndarray
    v_gl: float
    v_gr: float
    th_gl: float
    th_gr: float
    b_gl: np.ndarray
    b_gr: np.ndarray


def _boundary_data(grid: Grid, bc: BoundaryCondition, t: float, forcing=None) -> _BoundaryData:
    if forcing is not None:
        if bc is not BoundaryCondition.CAUCHY_FAR_FIELD:
            raise ValueError("manufactured-solution forcing requires the Cauchy regime")
        u_l, u_r, w_l, w_r = forcing.node_values(grid, t)
        gh = forcing.ghost_values(grid, t)
        return _BoundaryData(left_wall=False, isothermal=False,
                             u_left=u_l, u_right=u_r,
                             w_left=np.asarray(w_l, dtype=float),
                             w_right=np.asarray(w_r, dtype=float),
                             v_gl=gh["v_l"], v_gr=gh["v_r"],
                             th_gl=gh["theta_l"], th_gr=gh["theta_r"],
                             b_gl=np.asarray(gh["b_l"], dtype=float),
                             b_gr=np.asarray(gh["b_r"], dtype=float))
    zero2 = np.zeros(2)
    return _BoundaryData(left_wall=bc.has_left_wall,
                         isothermal=(bc is BoundaryCondition.ISOTHERMAL_WALL_LEFT),
                         u_left=FAR_FIELD_U, u_right=FAR_FIELD_U,
                         w_left=zero2, w_right=zero2,
                         v_gl=FAR_FIELD_V, v_gr=FAR_FIELD_V,
                         th_gl=FAR_FIELD_THETA, th_gr=FAR_FIELD_THETA,
                         b_gl=np.full(2, FAR_FIELD_B), b_gr=np.full(2, FAR_FIELD_B))


def _tridiag_solve(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray,
                   rhs: np.ndarray) -> np.ndarray:
    """Solve a tridiagonal system given the three diagonals.

    lower[0] and upper[-1] are ignored. rhs may have a trailing component
    axis; the same matrix is applied to every column.
    """
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def _b_gradient(b: np.ndarray, bnd: _BoundaryData, dx: float) -> np.ndarray:
    """Transverse-field gradient at every node, ghosts per the boundary data."""
    m = b.shape[0]
    bx = np.empty((m + 1, 2))
    bx[1:-1] = (b[1:] - b[:-1]) / dx
    if bnd.left_wall:
        bx[0] = b[0] / (0.5 * dx)
    else:
        bx[0] = (b[0] - bnd.b_gl) / dx
    bx[-1] = (bnd.b_gr - b[-1]) / dx
    return bx


def _harmonic(a: np.ndarray, b_: np.ndarray) -> np.ndarray:
    return 2.0 * a * b_ / (a + b_)


def _heat_flux(theta: np.ndarray, v: np.ndarray, dx: float, p: PhysicalParams,
               bnd: _BoundaryData, derivs: bool = False, frozen: bool = False):
    """Diffusive heat flux kappa(theta) * theta_x / v at every node.

    With derivs=True also returns (dH/d(theta of left cell), dH/d(theta of
    right cell)) per node for the Newton Jacobian; frozen=True drops the
    conductivity-derivative terms (Picard linearization).
    """
    m = theta.shape[0]
    a = p.kappa_tilde * theta ** p.beta / v
    H = np.empty(m + 1)

    c_int = _harmonic(a[:-1], a[1:])
    grad_int = (theta[1:] - theta[:-1]) / dx
    H[1:-1] = c_int * grad_int

    if bnd.left_wall:
        if bnd.isothermal:
            th_mid = 0.5 * (theta[0] + FAR_FIELD_THETA)
            c_l = p.kappa_tilde * th_mid ** p.beta / v[0]
            H[0] = c_l * (theta[0] - FAR_FIELD_THETA) / (0.5 * dx)
        else:
            H[0] = 0.0
    else:
        a_gl = p.kappa_tilde * bnd.th_gl ** p.beta / bnd.v_gl
        c_l = _harmonic(a_gl, a[0])
        H[0] = c_l * (theta[0] - bnd.th_gl) / dx

    a_gr = p.kappa_tilde * bnd.th_gr ** p.beta / bnd.v_gr
    c_r = _harmonic(a[-1], a_gr)
    H[-1] = c_r * (bnd.th_gr - theta[-1]) / dx

    if not derivs:
        return H

    da = np.zeros_like(theta) if frozen else p.kappa_tilde * p.beta * theta ** (p.beta - 1.0) / v
    # d(harmonic(x, y))/dx = 2 y^2 / (x + y)^2
    dh_left = np.zeros(m + 1)   # dH[j] / d theta[j-1]
    dh_right = np.zeros(m + 1)  # dH[j] / d theta[j]
    dc_dal = 2.0 * a[1:] ** 2 / (a[:-1] + a[1:]) ** 2
    dc_dar = 2.0 * a[:-1] ** 2 / (a[:-1] + a[1:]) ** 2
    dh_left[1:-1] = dc_dal * da[:-1] * grad_int - c_int / dx
    dh_right[1:-1] = dc_dar * da[1:] * grad_int + c_int / dx

    if bnd.left_wall:
        if bnd.isothermal:
            dc_l = 0.0 if frozen else \
                p.kappa_tilde * p.beta * (0.5 * (theta[0] + FAR_FIELD_THETA)) ** (p.beta - 1.0) / (2.0 * v[0])
            dh_right[0] = (c_l + dc_l * (theta[0] - FAR_FIELD_THETA)) / (0.5 * dx)
        # insulated: flux and derivative identically zero
    else:
        dc_l = 2.0 * a_gl ** 2 / (a_gl + a[0]) ** 2
        dh_right[0] = dc_l * da[0] * (theta[0] - bnd.th_gl) / dx + c_l / dx

    dc_r = 2.0 * a_gr ** 2 / (a[-1] + a_gr) ** 2
    dh_left[-1] = dc_r * da[-1] * (bnd.th_gr - theta[-1]) / dx - c_r / dx

    return H, dh_left, dh_right


def compute_dt(state: GasState, grid: Grid, p: PhysicalParams,
               ctl: StepControl) -> float:
    """Hyperbolic time-step bound; diffusion is implicit and does not restrict dt.

    Per-cell Lagrangian fast magnetosonic speed sqrt(gamma*P*v + v*|b|^2) / v,
    with the far-field signal speed as a floor, then clamped to
    [dt_min, dt_max].
    """
    b_sq = np.sum(state.b ** 2, axis=1)
    s = np.sqrt(p.gamma * p.R * state.theta + state.v * b_sq) / state.v
    s_far = math.sqrt(p.gamma * p.R * FAR_FIELD_THETA * FAR_FIELD_V) / FAR_FIELD_V
    s_max = max(float(s.max()), s_far)
    return float(np.clip(ctl.cfl * grid.dx / s_max, ctl.dt_min, ctl.dt_max))


def substep_velocity(state: GasState, grid: Grid, p: PhysicalParams,
                     bc: BoundaryCondition, dt: float, t_new: float,
                     forcing=None) -> np.ndarray:
    """Stage (a): implicit viscous solve for u with explicit total-pressure
    gradient (R*theta/v + |b|^2/2 from stage-begin values)."""
    m = grid.cells
    dx = grid.dx
    bnd = _boundary_data(grid, bc, t_new, forcing)
    a = viscosity_mu(state.v, p) / state.v
    g = pressure(state.v, state.theta, p) + 0.5 * np.sum(state.b ** 2, axis=1)
    r = dt / dx ** 2

    diag = 1.0 + r * (a[1:] + a[:-1])
    upper = np.empty(m - 1)
    lower = np.empty(m - 1)
    upper[:-1] = -r * a[1:-1]
    lower[1:] = -r * a[1:-1]
    rhs = state.u[1:-1] - (dt / dx) * (g[1:] - g[:-1])
    if forcing is not None:
        rhs = rhs + dt * forcing.sources(grid, t_new)["u"][1:-1]
    rhs[0] += r * a[0] * bnd.u_left
    rhs[-1] += r * a[-1] * bnd.u_right

    u_new = np.empty(m + 1)
    u_new[0] = bnd.u_left
    u_new[-1] = bnd.u_right
    u_new[1:-1] = _tridiag_solve(lower, diag, upper, rhs)
    return u_new


def substep_volume(state: GasState, u_new: np.ndarray, grid: Grid, dt: float,
                   t_new: float = 0.0, forcing=None) -> np.ndarray:
    """Stage (b): conservative volume update v += dt * u_x."""
    v_new = state.v + dt * np.diff(u_new) / grid.dx
    if forcing is not None:
        v_new = v_new + dt * forcing.sources(grid, t_new)["v"]
    return v_new


def substep_transverse(state: GasState, v_new: np.ndarray, grid: Grid,
                       p: PhysicalParams, bc: BoundaryCondition, dt: float,
                       t_new: float, forcing=None) -> np.ndarray:
    """Stage (c): implicit transverse-velocity solve, magnetic tension b_x
    explicit from stage-begin b. Both components share one matrix."""
    m = grid.cells
    dx = grid.dx
    bnd = _boundary_data(grid, bc, t_new, forcing)
    a = p.lam / v_new
    r = dt / dx ** 2

    diag = 1.0 + r * (a[1:] + a[:-1])
    upper = np.empty(m - 1)
    lower = np.empty(m - 1)
    upper[:-1] = -r * a[1:-1]
    lower[1:] = -r * a[1:-1]
    rhs = state.w[1:-1] + (dt / dx) * (state.b[1:] - state.b[:-1])
    if forcing is not None:
        rhs = rhs + dt * forcing.sources(grid, t_new)["w"][1:-1]
    rhs[0] += r * a[0] * bnd.w_left
    rhs[-1] += r * a[-1] * bnd.w_right

    w_new = np.empty((m + 1, 2))
    w_new[0] = bnd.w_left
    w_new[-1] = bnd.w_right
    w_new[1:-1] = _tridiag_solve(lower, diag, upper, rhs)
    return w_new


def _induction_coeffs(v_new: np.ndarray, p: PhysicalParams,
                      bnd: _BoundaryData) -> np.ndarray:
    """Magnetic diffusion coefficient nu/v at nodes (harmonic interface mean)."""
    m = v_new.shape[0]
    d = np.empty(m + 1)
    d[1:-1] = 2.0 * p.nu / (v_new[:-1] + v_new[1:])
    d[0] = p.nu / v_new[0] if bnd.left_wall else 2.0 * p.nu / (bnd.v_gl + v_new[0])
    d[-1] = 2.0 * p.nu / (v_new[-1] + bnd.v_gr)
    return d


def substep_induction(state: GasState, v_new: np.ndarray, w_new: np.ndarray,
                      grid: Grid, p: PhysicalParams, bc: BoundaryCondition,
                      dt: float, t_new: float, forcing=None) -> np.ndarray:
    """Stage (d): implicit induction solve for b; the stage-(b) volume
    multiplies the time term, w_x comes from stage (c)."""
    m = grid.cells
    dx = grid.dx
    bnd = _boundary_data(grid, bc, t_new, forcing)
    d = _induction_coeffs(v_new, p, bnd)
    r = dt / dx ** 2

    diag = v_new + r * (d[:-1] + d[1:])
    upper = np.empty(m)
    lower = np.empty(m)
    upper[:-1] = -r * d[1:-1]
    lower[1:] = -r * d[1:-1]
    if bnd.left_wall:
        # Dirichlet b = 0 at the wall node, half a cell from the first center.
        diag[0] = v_new[0] + r * (2.0 * d[0] + d[1])

    rhs = state.v[:, None] * state.b + (dt / dx) * np.diff(w_new, axis=0)
    if forcing is not None:
        rhs = rhs + dt * forcing.sources(grid, t_new)["b"]
    if not bnd.left_wall:
        rhs[0] += r * d[0] * bnd.b_gl
    rhs[-1] += r * d[-1] * bnd.b_gr

    return _tridiag_solve(lower, diag, upper, rhs)


def dissipation_source(v: np.ndarray, u: np.ndarray, w: np.ndarray,
                       b: np.ndarray, grid: Grid, p: PhysicalParams,
                       bnd: _BoundaryData) -> np.ndarray:
    """Nonnegative viscous/resistive heating per cell,
    (mu(v)*u_x^2 + lam*|w_x|^2 + nu*|b_x|^2) / v, with |b_x|^2 averaged from
    the adjacent nodes."""
    dx = grid.dx
    ux = np.diff(u) / dx
    wx_sq = np.sum((np.diff(w, axis=0) / dx) ** 2, axis=1)
    bx_sq = np.sum(_b_gradient(b, bnd, dx) ** 2, axis=1)
    bx_sq_cell = 0.5 * (bx_sq[:-1] + bx_sq[1:])
    return (viscosity_mu(v, p) * ux ** 2 + p.lam * wx_sq + p.nu * bx_sq_cell) / v


def substep_temperature(state: GasState, v_new: np.ndarray, u_new: np.ndarray,
                        w_new: np.ndarray, b_new: np.ndarray, grid: Grid,
                        p: PhysicalParams, bc: BoundaryCondition,
                        ctl: StepControl, dt: float, t_new: float,
                        forcing=None) -> tuple[np.ndarray, int]:
    """Stage (e): fully implicit temperature solve by Newton iteration.

    Solves c_v*theta_t + (R*theta/v)*u_x = (kappa(theta)*theta_x/v)_x + Q with
    the compression term implicit in theta and Q the stage dissipation. The
    conductivity is relinearized each iteration (full beta*theta**(beta-1)
    derivative); if the residual fails to decrease three times in a row the
    Jacobian falls back to the frozen-coefficient (Picard) form. Returns the
    new temperature and the number of Newton updates taken.

    Raises _NewtonFailed when the iteration cap is reached without meeting
    the tolerance.
    """
    dx = grid.dx
    bnd = _boundary_data(grid, bc, t_new, forcing)
    ux = np.diff(u_new) / dx
    q = dissipation_source(v_new, u_new, w_new, b_new, grid, p, bnd)
    s_theta = forcing.sources(grid, t_new)["theta"] if forcing is not None else 0.0

    adv = p.R * ux / v_new

    def residual(th):
        h = _heat_flux(th, v_new, dx, p, bnd)
        return (p.c_v * (th - state.theta) / dt + th * adv
                - np.diff(h) / dx - q - s_theta)

    theta = state.theta.copy()
    picard = False
    stall = 0
    prev_norm = math.inf
    for it in range(ctl.newton_max_iter + 1):
        f = residual(theta)
        fnorm = float(np.max(np.abs(f)))
        scale = max(1.0, float(np.max(theta)))
        if fnorm <= ctl.newton_tol * p.c_v * scale / dt:
            return theta, it
        if it == ctl.newton_max_iter:
            raise _NewtonFailed
        if fnorm >= prev_norm:
            stall += 1
            if stall >= 3:
                picard = True
        else:
            stall = 0
        prev_norm = fnorm

        _, dh_left, dh_right = _heat_flux(theta, v_new, dx, p, bnd,
                                          derivs=True, frozen=picard)
        diag = p.c_v / dt + adv - (dh_left[1:] - dh_right[:-1]) / dx
        upper = np.empty(grid.cells)
        lower = np.empty(grid.cells)
        upper[:-1] = -dh_right[1:-1] / dx
        lower[1:] = dh_left[1:-1] / dx
        delta = _tridiag_solve(lower, diag, upper, -f)

        # Damp the update rather than clip: theta must stay positive for the
        # conductivity to be evaluable at the next iterate.
        guard = 0
        while np.any(theta + delta <= 0.0):
            delta *= 0.5
            guard += 1
            if guard > 60:
                raise _NewtonFailed
        theta = theta + delta
        if float(np.max(np.abs(delta))) <= ctl.newton_tol * scale:
            return theta, it + 1
    raise _NewtonFailed


def _boundary_report(state_old: GasState, u_new, v_new, w_new, b_new, theta_new,
                     grid: Grid, p: PhysicalParams, bnd: _BoundaryData,
                     dt: float) -> tuple[float, float, float, float]:
    """Boundary flux totals (mass, momentum, total energy, entropy budget)
    added to the domain during this step.

    Mass and momentum reproduce the telescoped sums of stages (b) and (a)
    exactly; the energy and entropy terms are second-order monitors.
    """
    dx = grid.dx
    ux_new = np.diff(u_new) / dx

    mass_flux = dt * (u_new[-1] - u_new[0])

    a_old = viscosity_mu(state_old.v, p) / state_old.v
    g_old = (pressure(state_old.v, state_old.theta, p)
             + 0.5 * np.sum(state_old.b ** 2, axis=1))
    stress_l = a_old[0] * ux_new[0] - g_old[0]
    stress_r = a_old[-1] * ux_new[-1] - g_old[-1]
    momentum_flux = dt * (stress_r - stress_l)

    h = _heat_flux(theta_new, v_new, dx, p, bnd)
    d = _induction_coeffs(v_new, p, bnd)
    bx = _b_gradient(b_new, bnd, dx)
    x_l, x_r = d[0] * bx[0], d[-1] * bx[-1]
    if bnd.left_wall:
        b_node_l = np.zeros(2)
        th_node_l = FAR_FIELD_THETA if bnd.isothermal else theta_new[0]
    else:
        b_node_l = 0.5 * (bnd.b_gl + b_new[0])
        th_node_l = 0.5 * (bnd.th_gl + theta_new[0])
    b_node_r = 0.5 * (b_new[-1] + bnd.b_gr)
    th_node_r = 0.5 * (theta_new[-1] + bnd.th_gr)

    u_l, u_r = u_new[0], u_new[-1]
    w_l, w_r = w_new[0], w_new[-1]
    wx = np.diff(w_new, axis=0) / dx
    v_node_l = v_new[0] if bnd.left_wall else 0.5 * (bnd.v_gl + v_new[0])
    v_node_r = 0.5 * (v_new[-1] + bnd.v_gr)
    g_node_l = p.R * th_node_l / v_node_l + 0.5 * float(b_node_l @ b_node_l)
    g_node_r = p.R * th_node_r / v_node_r + 0.5 * float(b_node_r @ b_node_r)
    visc_l = viscosity_mu(v_new[0], p) / v_new[0] * u_l * ux_new[0]
    visc_r = viscosity_mu(v_new[-1], p) / v_new[-1] * u_r * ux_new[-1]
    wvisc_l = p.lam / v_new[0] * float(w_l @ wx[0])
    wvisc_r = p.lam / v_new[-1] * float(w_r @ wx[-1])

    phi_l = u_l * g_node_l - float(w_l @ b_node_l) - h[0] - visc_l - wvisc_l \
        - float(b_node_l @ x_l)
    phi_r = u_r * g_node_r - float(w_r @ b_node_r) - h[-1] - visc_r - wvisc_r \
        - float(b_node_r @ x_r)
    energy_flux = dt * (phi_l - phi_r)

    bf_l = ((1.0 - 1.0 / th_node_l) * h[0] + float(b_node_l @ x_l)
            + visc_l + wvisc_l - u_l * g_node_l + p.R * u_l + float(w_l @ b_node_l))
    bf_r = ((1.0 - 1.0 / th_node_r) * h[-1] + float(b_node_r @ x_r)
            + visc_r + wvisc_r - u_r * g_node_r + p.R * u_r + float(w_r @ b_node_r))
    entropy_flux = dt * (bf_r - bf_l)

    return mass_flux, momentum_flux, energy_flux, entropy_flux


def step(state: GasState, grid: Grid, p: PhysicalParams, bc: BoundaryCondition,
         ctl: StepControl, forcing=None, dt_cap: float | None = None
         ) -> tuple[GasState, StepReport]:
    """Advance one accepted step.

    The proposed dt comes from compute_dt, optionally capped (used by
    run_until to land exactly on the end time). An attempt that produces
    nonpositive v or theta, or whose temperature solve fails, is discarded
    and retried at half the step.

    Raises PositivityFailure after retry_max halvings (or a dt underflow),
    NewtonDivergence after two consecutive temperature-solve failures.
    """
    dt = compute_dt(state, grid, p, ctl)
    if dt_cap is not None:
        dt = min(dt, dt_cap)
    retries = 0
    newton_streak = 0

    while True:
        t_new = state.t + dt
        try:
            u_new = substep_velocity(state, grid, p, bc, dt, t_new, forcing)
            v_new = substep_volume(state, u_new, grid, dt, t_new, forcing)
            if not np.all(v_new > 0.0):
                raise _PositivityRetry
            w_new = substep_transverse(state, v_new, grid, p, bc, dt, t_new, forcing)
            b_new = substep_induction(state, v_new, w_new, grid, p, bc, dt, t_new, forcing)
            theta_new, iters = substep_temperature(state, v_new, u_new, w_new,
                                                   b_new, grid, p, bc, ctl, dt,
                                                   t_new, forcing)
            newton_streak = 0
            if not np.all(theta_new > 0.0):
                raise _PositivityRetry
        except _PositivityRetry:
            retries += 1
            if retries > ctl.retry_max:
                raise PositivityFailure(
                    f"state stayed nonpositive after {ctl.retry_max} dt halvings",
                    state.t) from None
            dt *= 0.5
            if dt < ctl.dt_min:
                raise PositivityFailure(
                    f"dt halved below dt_min = {ctl.dt_min}", state.t) from None
            continue
        except _NewtonFailed:
            newton_streak += 1
            retries += 1
            if newton_streak >= 2:
                raise NewtonDivergence(
                    f"temperature solve exceeded {ctl.newton_max_iter} iterations "
                    "twice consecutively", state.t) from None
            dt *= 0.5
            if dt < ctl.dt_min:
                raise NewtonDivergence(
                    f"dt halved below dt_min = {ctl.dt_min} during temperature "
                    "retries", state.t) from None
            continue
        break

    bnd = _boundary_data(grid, bc, t_new, forcing)
    fluxes = _boundary_report(state, u_new, v_new, w_new, b_new, theta_new,
                              grid, p, bnd, dt)
    report = StepReport(dt_used=dt, newton_iterations=iters, retries=retries,
                        mass_flux=fluxes[0], momentum_flux=fluxes[1],
                        energy_flux=fluxes[2], entropy_flux=fluxes[3])
    new_state = GasState(v=v_new, theta=theta_new, b=b_new, u=u_new, w=w_new,
                         t=t_new, step=state.step + 1)
    return new_state, report


def run_until(state: GasState, grid: Grid, t_end: float, p: PhysicalParams,
              bc: BoundaryCondition, ctl: StepControl, sink=None,
              forcing=None) -> GasState:
    """Step repeatedly until t_end, invoking sink(state, report) after each
    accepted step. The final step is shortened to land exactly on t_end."""
    if t_end < state.t:
        raise ValueError(f"t_end = {t_end} is before state time {state.t}")
    snap_tol = 1e-12 * max(1.0, abs(t_end))
    while t_end - state.t > snap_tol:
        state, report = step(state, grid, p, bc, ctl, forcing=forcing,
                             dt_cap=t_end - state.t)
        if sink is not None:
            sink(state, report)
    if state.t != t_end and abs(state.t - t_end) <= snap_tol:
        state.t = t_end
    return state
