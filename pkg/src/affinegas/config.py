"""Scenario configuration: JSON round-trip plus validation.

A scenario file is nested key-value JSON; every check failure names the
offending field so CI output is actionable.  (config, seed) fully determine
all outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .affine import AffineParams
from .errors import ConfigInvalid
from .evolve import EvolverConfig
from .fields import Grid3


@dataclass
class Scenario:
    name: str
    seed: int
    affine: dict
    evolve: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    sigma_choice: float | None = None
    out_dir: str = "out"

    def to_json(self) -> str:
        return json.dumps(
            {
                "name": self.name,
                "seed": self.seed,
                "affine": self.affine,
                "evolve": self.evolve,
                "diagnostics": self.diagnostics,
                "sigma_choice": self.sigma_choice,
                "out_dir": self.out_dir,
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid("<file>", f"not valid JSON: {exc}") from exc
        if "name" not in raw:
            raise ConfigInvalid("name", "missing")
        if "affine" not in raw:
            raise ConfigInvalid("affine", "missing")
        return cls(
            name=raw["name"],
            seed=int(raw.get("seed", 0)),
            affine=raw["affine"],
            evolve=raw.get("evolve", {}),
            diagnostics=raw.get("diagnostics", {}),
            sigma_choice=raw.get("sigma_choice"),
            out_dir=raw.get("out_dir", "out"),
        )

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path) as fh:
            return cls.from_json(fh.read())

    # -- materialized objects ------------------------------------------------

    def affine_params(self) -> AffineParams:
        aff = self.affine
        for key in ("A0", "A0dot", "Tbar", "alpha"):
            if key not in aff:
                raise ConfigInvalid(f"affine.{key}", "missing")
        try:
            a0 = np.array(aff["A0"], dtype=float).reshape(3, 3)
            a0dot = np.array(aff["A0dot"], dtype=float).reshape(3, 3)
        except (ValueError, TypeError) as exc:
            raise ConfigInvalid("affine.A0", f"expected 9 numbers: {exc}") from exc
        try:
            return AffineParams(A0=a0, A0dot=a0dot, Tbar=float(aff["Tbar"]),
                                alpha=float(aff["alpha"]))
        except Exception as exc:
            raise ConfigInvalid("affine", str(exc)) from exc

    def t_end(self) -> float:
        return float(self.affine.get("t_end", 1000.0))

    def rel_tol(self) -> float:
        return float(self.affine.get("rel_tol", 1e-10))

    def require_sigma(self) -> float:
        if self.sigma_choice is None:
            raise ConfigInvalid("sigma_choice", "missing (required for evolution runs)")
        return float(self.sigma_choice)

    def evolver_config(self) -> EvolverConfig:
        ev = self.evolve
        for key in ("tau_end", "grid_n", "half_width", "epsilon", "lambda"):
            if key not in ev:
                raise ConfigInvalid(f"evolve.{key}", "missing")
        try:
            grid = Grid3(half_width=float(ev["half_width"]), n=int(ev["grid_n"]))
        except ValueError as exc:
            raise ConfigInvalid("evolve.grid_n", str(exc)) from exc
        cfg = EvolverConfig(
            tau_end=float(ev["tau_end"]),
            grid=grid,
            epsilon=float(ev["epsilon"]),
            lam=float(ev["lambda"]),
            sigma_choice=self.require_sigma(),
            order=int(ev.get("order", 2)),
            cfl=float(ev.get("cfl", 0.4)),
            snapshot_stride=int(ev.get("snapshot_stride", 4)),
            k_budget=float(ev.get("k_budget", 0.2)),
            dtau_max=float(ev.get("dtau_max", 0.1)),
        )
        cfg.validate()
        return cfg
