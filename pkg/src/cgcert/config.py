"""Run defaults shared by the command line and the acceptance runs.

Values live in one nested dict; a JSON file with the same layout overrides
any subset of them, and command-line flags override the file.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .lmo import LmoConfig
from .solver import SolverConfig
from .statespace import DomainError

DEFAULTS: dict = {
    "seed": 0,
    "lmo": {"restarts": 10, "sweep_tol": 1e-10, "max_sweeps": 200},
    "solver": {"max_iter": 10_000, "r_threshold": 0.2, "f_tol": 1e-14, "engine": "bpcg",
               "qc_trigger": "fw", "warm_starts": 3, "time_limit": None},
    "sweep": {"target_gap": 1e-3, "target_gap_horodecki": 5e-3, "max_probes": 40,
              "max_iter": 20_000},
    "net": {"n": None, "cap": 10**7, "exact_last_block": True, "phase_reduce": True,
            "bound": "provable"},
    # largest eps (extra white-noise weight) for which detect reports a ball certificate
    "detect": {"sep_slack": 1e-3},
}


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in out:
            raise DomainError(f"unknown setting {key!r}")
        if isinstance(out[key], dict):
            if not isinstance(val, dict):
                raise DomainError(f"setting {key!r} needs a table")
            out[key] = merge(out[key], val)
        else:
            out[key] = val
    return out


def load_settings(path: str | Path | None = None, overrides: dict | None = None) -> dict:
    settings = copy.deepcopy(DEFAULTS)
    if path is not None:
        settings = merge(settings, json.loads(Path(path).read_text()))
    if overrides:
        settings = merge(settings, overrides)
    return settings


def lmo_config(settings: dict) -> LmoConfig:
    return LmoConfig(rng_seed=int(settings["seed"]), **settings["lmo"])


def solver_config(settings: dict, **changes) -> SolverConfig:
    kw = dict(settings["solver"])
    kw.update(changes)
    return SolverConfig(lmo_cfg=lmo_config(settings), **kw)
