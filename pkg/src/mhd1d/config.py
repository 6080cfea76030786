"""Flat key = value run configuration.

One `key = value` per line, `#` starts a comment, sections are dotted key
prefixes. Unknown keys are errors, not warnings. See README for the full key
table and defaults.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import (
    BoundaryCondition,
    ConstantProfile,
    FileProfile,
    GaussianBump,
    Grid,
    InitialProfile,
    PhysicalParams,
)
from .solver import StepControl


class ConfigError(ValueError):
    """Configuration problem; message names the key, line, and constraint."""


_BC_NAMES = {
    "cauchy": BoundaryCondition.CAUCHY_FAR_FIELD,
    "isothermal_wall": BoundaryCondition.ISOTHERMAL_WALL_LEFT,
    "insulated_wall": BoundaryCondition.INSULATED_WALL_LEFT,
}

# key -> (parser, default); None default means "computed later"
_KEYS = {
    "grid.cells": (int, 512),
    "grid.mass": (float, 32.0),
    "grid.left": (float, None),
    "bc": (str, "cauchy"),
    "params.preset": (str, None),
    "params.alpha": (float, 0.0),
    "params.beta": (float, 1.0),
    "params.mu1": (float, 1.0),
    "params.mu2": (float, 0.0),
    "params.kappa": (float, 1.0),
    "params.lambda": (float, 1.0),
    "params.nu": (float, 1.0),
    "params.R": (float, 1.0),
    "params.cv": (float, 1.0),
    "initial.profile": (str, "constant"),
    "initial.center": (float, 0.0),
    "initial.width": (float, 1.0),
    "initial.amp_v": (float, 0.0),
    "initial.amp_u": (float, 0.0),
    "initial.amp_theta": (float, 0.0),
    "initial.amp_b1": (float, 0.0),
    "initial.amp_b2": (float, 0.0),
    "initial.amp_w1": (float, 0.0),
    "initial.amp_w2": (float, 0.0),
    "initial.jitter": (float, 0.0),
    "initial.file": (str, None),
    "time.t_end": (float, 1.0),
    "time.cfl": (float, 0.4),
    "time.dt_min": (float, 1e-10),
    "time.dt_max": (float, 1.0),
    "time.newton_tol": (float, 1e-10),
    "time.newton_max_iter": (int, 50),
    "time.retry_max": (int, 20),
    "output.dir": (str, "out"),
    "output.snapshot_interval": (float, 0.0),
    "output.diagnostics_every": (int, 1),
    "repr.anchor": (float, None),
    "seed": (int, 0),
    "sweep.cap": (int, 64),
    "sweep.workers": (int, 1),
}

_PRESET_FIXED = ("params.mu1", "params.mu2", "params.kappa", "params.lambda",
                 "params.nu", "params.R", "params.cv")


@dataclass(frozen=True)
class RunConfig:
    """Fully validated run description."""

    grid: Grid
    bc: BoundaryCondition
    params: PhysicalParams
    profile: InitialProfile
    control: StepControl
    t_end: float
    out_dir: str
    snapshot_interval: float
    diagnostics_every: int
    seed: int
    sweep_cap: int
    sweep_workers: int
    repr_anchor: Optional[float]
    normalized_preset: bool

    def with_params(self, alpha: float, beta: float) -> "RunConfig":
        """Rebuild with new exponents, preserving the preset coupling
        mu2 = alpha when the normalized preset is in force."""
        if self.normalized_preset:
            params = PhysicalParams.normalized(alpha=alpha, beta=beta)
        else:
            params = replace(self.params, alpha=alpha, beta=beta)
        return replace(self, params=params)

    def with_amplitude_scale(self, factor: float) -> "RunConfig":
        if isinstance(self.profile, GaussianBump):
            return replace(self, profile=self.profile.scaled(factor))
        if factor == 1.0 or isinstance(self.profile, ConstantProfile):
            return self
        raise ConfigError("amplitude scaling requires a gaussian_bump profile")


def _strip_comment(line: str) -> str:
    if line.lstrip().startswith("#"):
        return ""
    out = []
    for i, ch in enumerate(line):
        if ch == "#" and (i == 0 or line[i - 1].isspace()):
            break
        out.append(ch)
    return "".join(out)


def _raw_entries(text: str) -> dict:
    entries = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = _strip_comment(line).strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key '{key}' "
                              f"(first set on line {entries[key][1]})")
        if not value:
            raise ConfigError(f"line {lineno}: key '{key}' has no value")
        entries[key] = (value, lineno)
    return entries


class _Lookup:
    def __init__(self, entries: dict):
        self.entries = entries
        self.lines = {}

    def get(self, key):
        parser, default = _KEYS[key]
        if key not in self.entries:
            return default
        raw, lineno = self.entries[key]
        self.lines[key] = lineno
        try:
            return parser(raw)
        except ValueError:
            raise ConfigError(f"line {lineno}: key '{key}' expects "
                              f"{parser.__name__}, got {raw!r}") from None

    def was_set(self, key) -> bool:
        return key in self.entries

    def line(self, key) -> int:
        return self.entries[key][1] if key in self.entries else 0

    def fail(self, key, constraint):
        raise ConfigError(f"line {self.line(key)}: key '{key}' violates "
                          f"{constraint}")


def parse_config(text: str) -> RunConfig:
    """Parse and fully validate a configuration."""
    look = _Lookup(_raw_entries(text))

    bc_name = look.get("bc")
    if bc_name not in _BC_NAMES:
        look.fail("bc", f"one of {sorted(_BC_NAMES)}")
    bc = _BC_NAMES[bc_name]

    cells = look.get("grid.cells")
    if cells < 4:
        look.fail("grid.cells", "cells >= 4")
    mass = look.get("grid.mass")
    if not mass > 0.0:
        look.fail("grid.mass", "mass > 0")
    left = look.get("grid.left")
    if left is None:
        left = -0.5 * mass if bc is BoundaryCondition.CAUCHY_FAR_FIELD else 0.0
    grid = Grid.uniform(cells, mass, left)

    preset = look.get("params.preset")
    if preset is not None and preset != "normalized":
        look.fail("params.preset", "'normalized' (or omit the key)")
    alpha = look.get("params.alpha")
    beta = look.get("params.beta")
    if alpha < 0.0:
        look.fail("params.alpha", "alpha >= 0")
    if beta < 0.0:
        look.fail("params.beta", "beta >= 0")
    if preset == "normalized":
        for key in _PRESET_FIXED:
            if look.was_set(key):
                look.fail(key, "no explicit constants together with "
                               "params.preset = normalized")
        params = PhysicalParams.normalized(alpha=alpha, beta=beta)
    else:
        positive = {"params.mu1": "mu1", "params.kappa": "kappa_tilde",
                    "params.lambda": "lam", "params.nu": "nu",
                    "params.R": "R", "params.cv": "c_v"}
        values = {}
        for key, field_name in positive.items():
            val = look.get(key)
            if not val > 0.0:
                look.fail(key, f"{field_name} > 0")
            values[field_name] = val
        mu2 = look.get("params.mu2")
        if mu2 < 0.0:
            look.fail("params.mu2", "mu2 >= 0")
        params = PhysicalParams(mu1=values["mu1"], mu2=mu2, alpha=alpha,
                                kappa_tilde=values["kappa_tilde"], beta=beta,
                                lam=values["lam"], nu=values["nu"],
                                R=values["R"], c_v=values["c_v"])

    profile_kind = look.get("initial.profile")
    seed = look.get("seed")
    if profile_kind == "constant":
        profile: InitialProfile = ConstantProfile()
    elif profile_kind == "gaussian_bump":
        width = look.get("initial.width")
        if not width > 0.0:
            look.fail("initial.width", "width > 0")
        jitter = look.get("initial.jitter")
        if jitter < 0.0:
            look.fail("initial.jitter", "jitter >= 0")
        amps = {name: look.get(f"initial.amp_{name}")
                for name in ("v", "u", "theta", "b1", "b2", "w1", "w2")}
        if jitter > 0.0:
            rng = np.random.default_rng(seed)
            for name in amps:
                amps[name] *= 1.0 + jitter * rng.standard_normal()
        profile = GaussianBump(center=look.get("initial.center"), width=width,
                               amp_v=amps["v"], amp_u=amps["u"],
                               amp_theta=amps["theta"],
                               amp_b=(amps["b1"], amps["b2"]),
                               amp_w=(amps["w1"], amps["w2"]))
    elif profile_kind == "file":
        path = look.get("initial.file")
        if path is None:
            raise ConfigError("initial.profile = file requires initial.file")
        profile = FileProfile(path)
    else:
        look.fail("initial.profile", "one of constant, gaussian_bump, file")

    cfl = look.get("time.cfl")
    if not 0.0 < cfl <= 1.0:
        look.fail("time.cfl", "0 < cfl <= 1")
    dt_min, dt_max = look.get("time.dt_min"), look.get("time.dt_max")
    if not dt_min < dt_max:
        look.fail("time.dt_max", "dt_min < dt_max")
    newton_tol = look.get("time.newton_tol")
    if not newton_tol > 0.0:
        look.fail("time.newton_tol", "newton_tol > 0")
    newton_max_iter = look.get("time.newton_max_iter")
    if newton_max_iter < 0:
        look.fail("time.newton_max_iter", "newton_max_iter >= 0")
    retry_max = look.get("time.retry_max")
    if retry_max < 0:
        look.fail("time.retry_max", "retry_max >= 0")
    control = StepControl(cfl=cfl, dt_min=dt_min, dt_max=dt_max,
                          newton_tol=newton_tol,
                          newton_max_iter=newton_max_iter,
                          retry_max=retry_max)

    t_end = look.get("time.t_end")
    if not t_end > 0.0:
        look.fail("time.t_end", "t_end > 0")
    snap_int = look.get("output.snapshot_interval")
    if snap_int < 0.0:
        look.fail("output.snapshot_interval", "snapshot_interval >= 0")
    diag_every = look.get("output.diagnostics_every")
    if diag_every < 1:
        look.fail("output.diagnostics_every", "diagnostics_every >= 1")
    cap = look.get("sweep.cap")
    if cap < 1:
        look.fail("sweep.cap", "cap >= 1")
    workers = look.get("sweep.workers")
    if workers < 1:
        look.fail("sweep.workers", "workers >= 1")

    anchor = look.get("repr.anchor")
    if anchor is not None and not grid.left_edge < anchor < grid.right_edge:
        look.fail("repr.anchor", "anchor inside the domain interior")

    return RunConfig(grid=grid, bc=bc, params=params, profile=profile,
                     control=control, t_end=t_end,
                     out_dir=look.get("output.dir"),
                     snapshot_interval=snap_int, diagnostics_every=diag_every,
                     seed=seed, sweep_cap=cap, sweep_workers=workers,
                     repr_anchor=anchor,
                     normalized_preset=(preset == "normalized"))


def parse_config_file(path) -> RunConfig:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def describe(cfg: RunConfig) -> str:
    """Canonical one-key-per-line rendering of a parsed config."""
    lines = [
        f"grid.cells = {cfg.grid.cells}",
        f"grid.mass = {cfg.grid.mass:.17g}",
        f"grid.left = {cfg.grid.left_edge:.17g}",
        f"bc = {cfg.bc.value}",
        f"params.preset = {'normalized' if cfg.normalized_preset else 'custom'}",
        f"params.alpha = {cfg.params.alpha:.17g}",
        f"params.beta = {cfg.params.beta:.17g}",
        f"params.mu1 = {cfg.params.mu1:.17g}",
        f"params.mu2 = {cfg.params.mu2:.17g}",
        f"params.kappa = {cfg.params.kappa_tilde:.17g}",
        f"params.lambda = {cfg.params.lam:.17g}",
        f"params.nu = {cfg.params.nu:.17g}",
        f"params.R = {cfg.params.R:.17g}",
        f"params.cv = {cfg.params.c_v:.17g}",
        f"initial.profile = {type(cfg.profile).__name__}",
        f"time.t_end = {cfg.t_end:.17g}",
        f"time.cfl = {cfg.control.cfl:.17g}",
        f"output.dir = {cfg.out_dir}",
    ]
    return "\n".join(lines)
