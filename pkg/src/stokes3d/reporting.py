"""Run configuration, caching, and deterministic report emission.

Everything written here is reproducible byte-for-byte from (config, seed):
numbers are formatted explicitly (8 decimals in CSV tables, repr for exact
provenance values, exact rational strings for cohomology certificates) and no
wall-clock data enters any artifact.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import PreconditionError
from .lattice import (DEFAULT_ENUMERATION_BUDGET, DEFAULT_RESONANCE_TOL,
                      INFINITE_DEPTH, LatticeSpec, PhysicalParams,
                      ResonantSet, resonant_set)

CACHE_ENV_VAR = "STOKES3D_CACHE_DIR"


@dataclass
class RunConfig:
    """Parsed run configuration; see README for the JSON schema."""

    lattice: LatticeSpec
    params: PhysicalParams
    speed: tuple[float, float] | None
    design_targets: list[tuple[int, int]] | None
    design_knobs: tuple[str, ...]
    momentum: tuple[float, float] | None
    resonance_tol: float
    flow_tol: float
    drift_tol: float
    web_radius: float
    model_file: str | None
    seed: int
    out_dir: str
    budget: int
    n_starts: int
    flow_overrides: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True).encode()
        ).hexdigest()[:16]


def _depth_from(value) -> float:
    if value in ("inf", "infinite", None):
        return INFINITE_DEPTH
    return float(value)


def load_config(path, seed=None, out_dir=None, budget=None) -> RunConfig:
    with open(path) as fh:
        raw = json.load(fh)
    tols = raw.get("tolerances", {})
    for key, val in tols.items():
        if not (isinstance(val, (int, float)) and val > 0):
            raise PreconditionError(f"tolerance {key!r} must be positive")
    p = raw.get("params", {})
    params = PhysicalParams(
        gravity=float(p.get("gravity", 1.0)),
        surface_tension=float(p.get("surface_tension", 1.0)),
        depth=_depth_from(p.get("depth", "inf")),
    )
    lattice = LatticeSpec.from_matrix(raw.get("lattice", [[1, 0], [0, 1]]))
    speed = raw.get("speed")
    targets = raw.get("design_targets")
    cfg = RunConfig(
        lattice=lattice,
        params=params,
        speed=tuple(speed) if speed else None,
        design_targets=[tuple(t) for t in targets] if targets else None,
        design_knobs=tuple(raw.get("design_knobs", ["c_star"])),
        momentum=tuple(raw["momentum"]) if raw.get("momentum") else None,
        resonance_tol=float(tols.get("resonance", DEFAULT_RESONANCE_TOL)),
        flow_tol=float(tols.get("flow", 1e-9)),
        drift_tol=float(tols.get("drift", 1e-8)),
        web_radius=float(raw.get("web_radius", 3.0)),
        model_file=raw.get("model_file"),
        seed=int(seed if seed is not None else raw.get("seed", 0)),
        out_dir=str(out_dir if out_dir is not None else raw.get("out_dir", "out")),
        budget=int(budget if budget is not None
                   else raw.get("budget", DEFAULT_ENUMERATION_BUDGET)),
        n_starts=int(raw.get("n_starts", 0)),
        flow_overrides=raw.get("flow", {}),
        raw=raw,
    )
    return cfg


def fmt(x: float) -> str:
    """Fixed 8-decimal float format used by every CSV table."""
    return f"{x:.8f}"


def write_csv(path, header: list[str], rows: list[list[str]]):
    lines = [",".join(header)]
    lines += [",".join(r) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def provenance(config: RunConfig) -> dict:
    return {
        "config_hash": config.config_hash,
        "seed": config.seed,
        "package": "stokes3d 0.1.0",
        "numpy": np.__version__,
    }


# -- resonance cache -------------------------------------------------------------

def cache_dir(config: RunConfig) -> Path:
    env = os.environ.get(CACHE_ENV_VAR)
    base = Path(env) if env else Path(config.out_dir) / ".cache"
    base.mkdir(parents=True, exist_ok=True)
    return base


def resonance_cache_key(c_star, params: PhysicalParams, lattice: LatticeSpec,
                        tol: float, budget: int) -> str:
    payload = {
        "c_star": [repr(float(c_star[0])), repr(float(c_star[1]))],
        "g": repr(params.gravity),
        "kappa": repr(params.surface_tension),
        "depth": "inf" if params.infinite_depth else repr(params.depth),
        "lattice": [[repr(x) for x in row] for row in lattice.generators],
        "tol": repr(tol),
        "budget": budget,
    }
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode()
    ).hexdigest()[:24]


_CACHE_COUNTERS = {"hits": 0, "misses": 0}


def cached_resonant_set(config: RunConfig, c_star=None) -> ResonantSet:
    """resonant_set with a JSON file cache keyed by the full input data."""
    c_star = c_star if c_star is not None else config.speed
    if c_star is None:
        raise PreconditionError("no speed given (set `speed` or design targets)")
    key = resonance_cache_key(c_star, config.params, config.lattice,
                              config.resonance_tol, config.budget)
    path = cache_dir(config) / f"resonances-{key}.json"
    if path.exists():
        data = json.loads(path.read_text())
        _CACHE_COUNTERS["hits"] += 1
        vectors = tuple(config.lattice.dual_vector(k) for k in data["indices"])
        return ResonantSet(
            c_star=(float(c_star[0]), float(c_star[1])), params=config.params,
            lattice=config.lattice, vectors=vectors,
            tol=config.resonance_tol, enumeration_radius=data["radius"],
        )
    _CACHE_COUNTERS["misses"] += 1
    rs = resonant_set(c_star, config.params, config.lattice,
                      tol=config.resonance_tol, budget=config.budget)
    path.write_text(json.dumps(
        {"indices": rs.indices(), "radius": rs.enumeration_radius}
    ))
    return rs


def cache_counters() -> dict:
    return dict(_CACHE_COUNTERS)


# -- SVG web plot -----------------------------------------------------------------

def web_svg(lines: list[dict], extent: float) -> str:
    """Minimal SVG of the bifurcation lines in the speed plane.

    Each record holds the unit normal and offset of one line; the segment is
    the chord inside the square [-extent, extent]^2.
    """
    size = 640.0
    half = size / 2.0
    scale = half / extent

    def to_px(x, y):
        return half + scale * x, half - scale * y

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(size)}" '
        f'height="{int(size)}" viewBox="0 0 {int(size)} {int(size)}">',
        f'<rect width="{int(size)}" height="{int(size)}" fill="white"/>',
    ]
    x0, y0 = to_px(-extent, 0)
    x1, y1 = to_px(extent, 0)
    parts.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" '
                 f'y2="{y1:.2f}" stroke="#bbbbbb" stroke-width="1"/>')
    x0, y0 = to_px(0, -extent)
    x1, y1 = to_px(0, extent)
    parts.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" '
                 f'y2="{y1:.2f}" stroke="#bbbbbb" stroke-width="1"/>')
    L = extent * 3.0
    for rec in lines:
        nx, ny = rec["normal"]
        off = rec["offset"]
        # point on the line plus the tangent direction
        px, py = off * nx, off * ny
        tx, ty = -ny, nx
        a = to_px(px - L * tx, py - L * ty)
        b = to_px(px + L * tx, py + L * ty)
        parts.append(
            f'<line x1="{a[0]:.2f}" y1="{a[1]:.2f}" x2="{b[0]:.2f}" '
            f'y2="{b[1]:.2f}" stroke="#205080" stroke-width="0.8" '
            f'opacity="0.75"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
