"""Domain types for the planar-MHD simulator: physical constants, the staggered
mass-coordinate grid, boundary regimes, the discrete gas state, and initial
profile construction.

Field layout (staggered): specific volume v, temperature theta, and the
two-component transverse magnetic field b live at cell centers; longitudinal
velocity u and the two-component transverse velocity w live at cell nodes.
A grid with M cells has M + 1 nodes, so v/theta/b have length M and u/w have
length M + 1.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Union

import numpy as np

# State toward which all fields relax at open boundaries: (v, u, theta, b, w).
FAR_FIELD_V = 1.0
FAR_FIELD_U = 0.0
FAR_FIELD_THETA = 1.0
FAR_FIELD_B = 0.0
FAR_FIELD_W = 0.0

# Compatibility tolerance for wall-adjacent initial values.
WALL_TOL = 1e-12


class ProfileError(ValueError):
    """Raised when an initial profile violates positivity, shape, or
    boundary-compatibility requirements."""


@dataclass(frozen=True)
class PhysicalParams:
    """Constitutive constants of the model.

    mu1, mu2, alpha define the volume-dependent viscosity mu(v) = mu1 + mu2 * v**(-alpha);
    kappa_tilde, beta define the temperature-dependent conductivity kappa(theta) =
    kappa_tilde * theta**beta; lam and nu are the transverse viscosity and the
    magnetic diffusivity; R and c_v are the gas constant and heat capacity.
    """

    mu1: float = 1.0
    mu2: float = 0.0
    alpha: float = 0.0
    kappa_tilde: float = 1.0
    beta: float = 1.0
    lam: float = 1.0
    nu: float = 1.0
    R: float = 1.0
    c_v: float = 1.0

    def __post_init__(self):
        for name in ("mu1", "kappa_tilde", "lam", "nu", "R", "c_v"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("mu2", "alpha", "beta"):
            if not getattr(self, name) >= 0.0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")

    @classmethod
    def normalized(cls, alpha: float = 0.0, beta: float = 1.0) -> "PhysicalParams":
        """Preset with lam = nu = kappa_tilde = R = c_v = mu1 = 1 and mu2 = alpha.

        The volume-history diagnostic (diagnostics.representation_update) is
        derived for exactly this preset.
        """
        return cls(mu1=1.0, mu2=alpha, alpha=alpha, kappa_tilde=1.0, beta=beta,
                   lam=1.0, nu=1.0, R=1.0, c_v=1.0)

    @property
    def is_normalized(self) -> bool:
        ones = (self.mu1, self.kappa_tilde, self.lam, self.nu, self.R, self.c_v)
        return all(x == 1.0 for x in ones) and self.mu2 == self.alpha

    @property
    def gamma(self) -> float:
        """Adiabatic exponent 1 + R / c_v of the perfect gas."""
        return 1.0 + self.R / self.c_v


@dataclass(frozen=True)
class Grid:
    """Uniform staggered mesh over a finite interval of the mass coordinate.

    Cell centers sit at left_edge + (i + 1/2) * dx for i in 0..cells-1 and
    nodes at left_edge + j * dx for j in 0..cells.
    """

    cells: int
    dx: float
    left_edge: float = 0.0

    def __post_init__(self):
        if self.cells < 4:
            raise ValueError(f"need at least 4 cells, got {self.cells}")
        if not self.dx > 0.0:
            raise ValueError(f"dx must be > 0, got {self.dx}")

    @classmethod
    def uniform(cls, cells: int, mass: float, left_edge: float = 0.0) -> "Grid":
        """Grid of `cells` cells covering `mass` units of the mass coordinate."""
        if not mass > 0.0:
            raise ValueError(f"total mass must be > 0, got {mass}")
        return cls(cells=cells, dx=mass / cells, left_edge=left_edge)

    @property
    def mass(self) -> float:
        return self.cells * self.dx

    @property
    def right_edge(self) -> float:
        return self.left_edge + self.cells * self.dx

    def nodes(self) -> np.ndarray:
        return self.left_edge + np.arange(self.cells + 1) * self.dx

    def centers(self) -> np.ndarray:
        return self.left_edge + (np.arange(self.cells) + 0.5) * self.dx


class BoundaryCondition(enum.Enum):
    """The three boundary/far-field regimes.

    CAUCHY_FAR_FIELD: far-field values (1, 0, 1, 0, 0) at both truncated ends.
    ISOTHERMAL_WALL_LEFT: u = 0, theta = 1, b = w = 0 at the left node;
        far field at the right end.
    INSULATED_WALL_LEFT: u = 0, zero heat flux, b = w = 0 at the left node;
        far field at the right end.
    """

    CAUCHY_FAR_FIELD = "cauchy"
    ISOTHERMAL_WALL_LEFT = "isothermal_wall"
    INSULATED_WALL_LEFT = "insulated_wall"

    @property
    def has_left_wall(self) -> bool:
        return self is not BoundaryCondition.CAUCHY_FAR_FIELD


@dataclass
class GasState:
    """Discrete fields at one time level.

    v, theta: (M,) positive cell values; b: (M, 2) cell values;
    u: (M+1,) node values; w: (M+1, 2) node values.
    """

    v: np.ndarray
    theta: np.ndarray
    b: np.ndarray
    u: np.ndarray
    w: np.ndarray
    t: float = 0.0
    step: int = 0

    def copy(self) -> "GasState":
        return GasState(v=self.v.copy(), theta=self.theta.copy(), b=self.b.copy(),
                        u=self.u.copy(), w=self.w.copy(), t=self.t, step=self.step)

    def validate(self, grid: Grid) -> None:
        """Check array shapes against the grid and strict positivity of v, theta."""
        m = grid.cells
        shapes = {"v": (self.v, (m,)), "theta": (self.theta, (m,)),
                  "b": (self.b, (m, 2)), "u": (self.u, (m + 1,)),
                  "w": (self.w, (m + 1, 2))}
        for name, (arr, want) in shapes.items():
            if arr.shape != want:
                raise ValueError(f"{name} has shape {arr.shape}, expected {want}")
        if not np.all(self.v > 0.0):
            raise ValueError(f"nonpositive specific volume, min v = {self.v.min()}")
        if not np.all(self.theta > 0.0):
            raise ValueError(f"nonpositive temperature, min theta = {self.theta.min()}")


@dataclass(frozen=True)
class ConstantProfile:
    """Far-field equilibrium everywhere."""


@dataclass(frozen=True)
class GaussianBump:
    """Per-field Gaussian perturbations of the far-field state.

    Each field takes the value far + amp * exp(-((x - center) / width)**2).
    Amplitudes must keep v and theta positive: amp_v > -1 and amp_theta > -1.
    """

    center: float = 0.0
    width: float = 1.0
    amp_v: float = 0.0
    amp_u: float = 0.0
    amp_theta: float = 0.0
    amp_b: tuple = (0.0, 0.0)
    amp_w: tuple = (0.0, 0.0)

    def scaled(self, factor: float) -> "GaussianBump":
        """All amplitudes multiplied by `factor` (used by parameter sweeps)."""
        return GaussianBump(center=self.center, width=self.width,
                            amp_v=factor * self.amp_v, amp_u=factor * self.amp_u,
                            amp_theta=factor * self.amp_theta,
                            amp_b=tuple(factor * a for a in self.amp_b),
                            amp_w=tuple(factor * a for a in self.amp_w))


@dataclass(frozen=True)
class FileProfile:
    """Initial fields ingested from a snapshot file pair (see mhd1d.snapshots)."""

    path: str


InitialProfile = Union[ConstantProfile, GaussianBump, FileProfile]


def _bump(x: np.ndarray, far: float, amp: float, center: float, width: float) -> np.ndarray:
    return far + amp * np.exp(-((x - center) / width) ** 2)


def make_initial_state(grid: Grid, profile: InitialProfile,
                       bc: BoundaryCondition) -> GasState:
    """Build the t = 0 state for a profile, enforcing positivity and
    compatibility with the chosen boundary regime.

    Rejects profiles whose continuum infimum of v or theta is nonpositive,
    file profiles whose length mismatches the grid, and wall regimes whose
    initial u, w (at the wall node) or b (in the wall cell) exceed 1e-12.
    """
    m = grid.cells
    xc = grid.centers()
    xn = grid.nodes()

    if isinstance(profile, ConstantProfile):
        state = GasState(v=np.full(m, FAR_FIELD_V), theta=np.full(m, FAR_FIELD_THETA),
                         b=np.zeros((m, 2)), u=np.zeros(m + 1), w=np.zeros((m + 1, 2)))
    elif isinstance(profile, GaussianBump):
        # The continuum infimum of far + amp*exp(...) is min(far, far + amp),
        # so positivity is decided by the amplitude, not the sampled minimum.
        if FAR_FIELD_V + min(0.0, profile.amp_v) <= 0.0:
            raise ProfileError(f"v amplitude {profile.amp_v} drives inf v0 to "
                               f"{FAR_FIELD_V + profile.amp_v} <= 0")
        if FAR_FIELD_THETA + min(0.0, profile.amp_theta) <= 0.0:
            raise ProfileError(f"theta amplitude {profile.amp_theta} drives inf theta0 to "
                               f"{FAR_FIELD_THETA + profile.amp_theta} <= 0")
        if not profile.width > 0.0:
            raise ProfileError(f"bump width must be > 0, got {profile.width}")
        c, wdt = profile.center, profile.width
        b = np.stack([_bump(xc, FAR_FIELD_B, profile.amp_b[0], c, wdt),
                      _bump(xc, FAR_FIELD_B, profile.amp_b[1], c, wdt)], axis=1)
        w = np.stack([_bump(xn, FAR_FIELD_W, profile.amp_w[0], c, wdt),
                      _bump(xn, FAR_FIELD_W, profile.amp_w[1], c, wdt)], axis=1)
        state = GasState(v=_bump(xc, FAR_FIELD_V, profile.amp_v, c, wdt),
                         theta=_bump(xc, FAR_FIELD_THETA, profile.amp_theta, c, wdt),
                         b=b, u=_bump(xn, FAR_FIELD_U, profile.amp_u, c, wdt), w=w)
    elif isinstance(profile, FileProfile):
        from . import snapshots  # deferred: snapshots imports GasState from here

        loaded, file_grid = snapshots.load_snapshot(profile.path)
        if file_grid.cells != m:
            raise ProfileError(f"file profile has {file_grid.cells} cells, grid has {m}")
        state = GasState(v=loaded.v, theta=loaded.theta, b=loaded.b,
                         u=loaded.u, w=loaded.w, t=0.0, step=0)
    else:
        raise TypeError(f"unknown profile type {type(profile).__name__}")

    if not np.all(state.v > 0.0):
        raise ProfileError(f"initial specific volume has min {state.v.min()} <= 0")
    if not np.all(state.theta > 0.0):
        raise ProfileError(f"initial temperature has min {state.theta.min()} <= 0")

    if bc.has_left_wall:
        bad = []
        if abs(state.u[0]) > WALL_TOL:
            bad.append(f"u(wall) = {state.u[0]}")
        if np.max(np.abs(state.w[0])) > WALL_TOL:
            bad.append(f"|w(wall)| = {np.max(np.abs(state.w[0]))}")
        if np.max(np.abs(state.b[0])) > WALL_TOL:
            bad.append(f"|b(wall cell)| = {np.max(np.abs(state.b[0]))}")
        if bad:
            raise ProfileError("profile incompatible with wall regime: " + ", ".join(bad))

    state.validate(grid)
    return state
