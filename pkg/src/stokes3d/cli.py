"""Command-line front end.

Subcommands: web, resonances, design, classify, cuplength, straighten, flow,
report.  One JSON config file (--config), plus --seed/--out/--budget
overrides; the cache directory honors the STOKES3D_CACHE_DIR environment
variable.  Exit codes: 0 success, 2 precondition violation, 3 numerical
failure, 4 budget exceeded.  All outputs are reproducible byte-for-byte from
(config, seed).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import cohomology, dynamics, geometry, models
from .errors import BudgetError, NumericalError, PreconditionError
from .kernel import KernelSpace, momentum
from .lattice import design_resonance, enumerate_dual, omega
from .reporting import (RunConfig, cached_resonant_set, fmt, load_config,
                        provenance, web_svg, write_csv)

EXIT_OK = 0
EXIT_PRECONDITION = 2
EXIT_NUMERICAL = 3
EXIT_BUDGET = 4


def _out(config: RunConfig) -> Path:
    p = Path(config.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _engine(config: RunConfig) -> dynamics.EngineConfig:
    over = config.flow_overrides
    kwargs = {}
    for name in ("flow_dt", "flow_t_max", "reproject_every", "straighten_steps",
                 "regime_radius"):
        if name in over:
            kwargs[name] = over[name]
    if "dt" in over:
        kwargs["flow_dt"] = over["dt"]
    if "t_max" in over:
        kwargs["flow_t_max"] = over["t_max"]
    return dynamics.EngineConfig(grad_tol=config.flow_tol,
                                 drift_tol=config.drift_tol, **kwargs)


def _space(config: RunConfig) -> KernelSpace:
    rs = cached_resonant_set(config)
    if len(rs) == 0:
        raise PreconditionError(
            "no bifurcation at this speed: the resonant set is empty"
        )
    return KernelSpace.from_resonances(rs)


def _load_model(config: RunConfig, space: KernelSpace) -> models.ModelHamiltonian:
    if not config.model_file:
        raise PreconditionError("this command needs `model_file` in the config")
    return models.read_model(config.model_file, space)


# -- commands ---------------------------------------------------------------------

def cmd_web(config: RunConfig) -> int:
    """Bifurcation lines of all dual vectors up to the configured radius."""
    out = _out(config)
    radius = config.web_radius
    vectors = enumerate_dual(config.lattice, radius, config.budget)
    rows = []
    lines = []
    for v in vectors:
        om = omega(v.vector, config.params)
        dist = om / v.norm
        nx, ny = v.vector[0] / v.norm, v.vector[1] / v.norm
        rows.append([str(v.index[0]), str(v.index[1]), fmt(om), fmt(dist),
                     fmt(nx), fmt(ny)])
        lines.append({"normal": (nx, ny), "offset": dist})
    write_csv(out / "web.csv",
              ["k1", "k2", "omega", "distance", "normal_x", "normal_y"], rows)
    extent = max((r["offset"] for r in lines), default=1.0) * 1.5
    (out / "web.svg").write_text(web_svg(lines, extent))
    print(f"web: {len(rows)} lines within |j| <= {radius:g}"
          + (f", nearest at distance {fmt(min(r['offset'] for r in lines))}"
             if lines else ""))
    return EXIT_OK


def cmd_resonances(config: RunConfig) -> int:
    rs = cached_resonant_set(config)
    out = _out(config)
    rows = []
    for v in rs.vectors:
        rows.append([str(v.index[0]), str(v.index[1]), fmt(v.vector[0]),
                     fmt(v.vector[1]), fmt(omega(v.vector, config.params)),
                     repr(rs.residual(v))])
    write_csv(out / "resonances.csv",
              ["k1", "k2", "j1", "j2", "omega", "residual"], rows)
    print(f"resonances: {len(rs)} wave vectors at tol {rs.tol:g} "
          f"(radius {rs.enumeration_radius:.6g})")
    return EXIT_OK


def cmd_design(config: RunConfig) -> int:
    if not config.design_targets:
        raise PreconditionError("design needs `design_targets` in the config")
    res = design_resonance(config.design_targets, config.design_knobs,
                           params=config.params, lattice=config.lattice,
                           tol=config.resonance_tol, budget=config.budget)
    out = _out(config)
    payload = {
        "c_star": [repr(x) for x in res.c_star],
        "gravity": repr(res.params.gravity),
        "surface_tension": repr(res.params.surface_tension),
        "depth": ("inf" if res.params.infinite_depth else repr(res.params.depth)),
        "lattice": [[repr(x) for x in row] for row in res.lattice.generators],
        "resonances": res.resonances.indices(),
        "max_residual": repr(float(np.abs(res.residuals).max())),
        "provenance": provenance(config),
    }
    (out / "design.json").write_text(json.dumps(payload, indent=2) + "\n")
    print(f"design: c* = ({fmt(res.c_star[0])}, {fmt(res.c_star[1])}), "
          f"kappa = {fmt(res.params.surface_tension)}, "
          f"resonances {res.resonances.indices()}")
    return EXIT_OK


def _classification(config: RunConfig):
    space = _space(config)
    if config.momentum is None:
        raise PreconditionError("classify needs `momentum` in the config")
    return space, geometry.classify_momentum(config.momentum, space)


def _verdict_message(cls) -> str:
    v = cls.verdict
    if v is geometry.Verdict.ZERO_MOMENTUM:
        return "zero momentum: u = 0"
    if v is geometry.Verdict.OUTSIDE_CONE:
        return "no Stokes wave with this momentum (outside the cone)"
    if v is geometry.Verdict.BOUNDARY_CONE:
        return "boundary momentum: every Stokes wave is 2-dimensional"
    if v is geometry.Verdict.INTERIOR_COLLINEAR_UNIQUE:
        return (f"interior momentum collinear with the unique resonant vector "
                f"{cls.collinear_vector.index}")
    if v is geometry.Verdict.INTERIOR_COLLINEAR_DOUBLE:
        return "interior momentum on a doubly-resonant direction"
    return "interior momentum non-collinear with every resonant vector"


def cmd_classify(config: RunConfig) -> int:
    space, cls = _classification(config)
    out = _out(config)
    record = {
        "momentum": list(cls.momentum),
        "verdict": cls.verdict.value,
        "dims": list(cls.dims),
        "topology": cls.topology.label,
        "multiplicity_bound": cls.multiplicity_bound,
        "n_vectors": cls.n_vectors,
        "classes": {
            "minus": [[m.index for m in c.members] for c in cls.classes_minus],
            "zero": [[m.index for m in c.members] for c in cls.classes_zero],
            "plus": [[m.index for m in c.members] for c in cls.classes_plus],
        },
        "provenance": provenance(config),
    }
    (out / "classification.json").write_text(json.dumps(record, indent=2) + "\n")
    lines = [
        f"verdict: {cls.verdict.value}",
        _verdict_message(cls),
        f"dims (V-, V0, V+): {cls.dims}",
        f"level-set topology: {cls.topology.label}",
        f"multiplicity bound: {cls.multiplicity_bound}",
    ]
    (out / "classification.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


def _weight_matrices(config: RunConfig):
    raw = config.raw.get("weights")
    if raw:
        return raw["K1"], raw["K2"]
    _, cls = _classification(config)
    if cls.verdict not in (geometry.Verdict.INTERIOR_COLLINEAR_UNIQUE,
                           geometry.Verdict.INTERIOR_NONCOLLINEAR):
        raise PreconditionError(
            f"cup-length certificate needs an interior verdict, got "
            f"{cls.verdict.value}"
        )
    k_minus = [m.index for c in cls.classes_minus for m in c.members]
    k_plus = [m.index for c in cls.classes_plus for m in c.members]
    return k_minus, k_plus


def cmd_cuplength(config: RunConfig) -> int:
    K1, K2 = _weight_matrices(config)
    out = _out(config)
    res = cohomology.witness_class(K1, K2)
    lines = [
        f"weights K1 = {[tuple(k) for k in K1]}",
        f"weights K2 = {[tuple(k) for k in K2]}",
        f"annihilator generators: "
        f"({'; '.join(str(g) for g in res.ideal.generators)})",
        f"witness class: {res.witness}",
    ]
    if not res.noncollinear:
        lines.append("hypothesis violated: collinear weight pair present")
        lines.append(f"membership verdict (reported, not asserted): "
                     f"{res.certificate}")
    else:
        cl = len(K1) + len(K2) - 2
        verdict = "NOT IN" if res.outside_ideal else "IN"
        lines.append(f"certificate: {res.witness} {verdict} ideal; "
                     f"{res.certificate}")
        lines.append(f"cup-length lower bound: {cl}")
        lines.append(f"critical value bound: {cl + 1}")
    (out / "cuplength.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


def cmd_straighten(config: RunConfig) -> int:
    space = _space(config)
    model = _load_model(config, space)
    engine = _engine(config)
    out = _out(config)
    rng = np.random.default_rng(config.seed)
    if not model.c_dependent:
        text = "straighten: model is speed-free; max residual 0 (identity)"
        (out / "straighten.txt").write_text(text + "\n")
        print(text)
        return EXIT_OK
    worst = 0.0
    n_samples = int(config.raw.get("straighten_samples", 50))
    for i in range(n_samples):
        kind = i % 3
        if kind == 0:
            v = space.random_point(rng, 0.03)
        elif kind == 1:
            ci = i % space.n_classes
            z = space.random_point(rng, 0.03).z
            mask = space.class_of != ci
            z[mask] *= 1e-3
            v = space.point(z)
        else:
            ci = i % space.n_classes
            z = space.random_point(rng, 0.03).z
            z[space.class_of != ci] = 0.0
            v = space.point(z)
        zeta = dynamics.moser_straighten(v, model, config=engine)
        resid = float(np.hypot(
            *(dynamics.reduced_momentum(zeta, model, engine) - momentum(v))))
        worst = max(worst, resid / max(v.norm_sq(), 1e-30))
    text = (f"straighten: {n_samples} samples across far/near/on-block "
            f"regimes; max residual {worst:.3e} (x ||v||^2)")
    (out / "straighten.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_flow(config: RunConfig) -> int:
    space = _space(config)
    model = _load_model(config, space)
    engine = _engine(config)
    out = _out(config)
    if config.momentum is None:
        raise PreconditionError("flow needs `momentum` in the config")
    a = np.asarray(config.momentum, dtype=float)
    cls = geometry.classify_momentum(config.momentum, space)
    if cls.verdict not in (geometry.Verdict.INTERIOR_COLLINEAR_UNIQUE,
                           geometry.Verdict.INTERIOR_NONCOLLINEAR,
                           geometry.Verdict.INTERIOR_COLLINEAR_DOUBLE):
        raise PreconditionError(
            f"flow needs an interior momentum, got {cls.verdict.value}"
        )
    rng = np.random.default_rng(config.seed)
    n_starts = config.n_starts or 10 * space.n_vectors

    # conservation probe run at the configured step policy
    probe_rng = np.random.default_rng(config.seed + 1)
    pos = {v.index: i for i, v in enumerate(space.vectors)}

    def block_sample(classes) -> np.ndarray:
        z = np.zeros(space.n_vectors, dtype=complex)
        for c in classes:
            for m in c.members:
                z[pos[m.index]] = (probe_rng.standard_normal()
                                   + 1j * probe_rng.standard_normal())
        nrm = space.point(z).norm()
        return z / nrm if nrm > 0 else z

    v1 = space.point(block_sample(cls.classes_minus)
                     + block_sample(cls.classes_plus))
    if cls.classes_zero:
        v0 = space.point(block_sample(cls.classes_zero))
        probe = geometry.join_parametrize(v1, v0, 0.5, a)
    else:
        probe = geometry.join_parametrize(v1, space.zero(), 0.0, a)
    if model.c_dependent:
        probe = dynamics.moser_straighten(probe, model, config=engine)
    res = dynamics.run_flow(probe, model, engine, t_max=10.0, record=True)
    drift = max(
        abs(h - res.trajectory.momentum1[0]) + abs(k - res.trajectory.momentum2[0])
        for h, k in zip(res.trajectory.momentum1, res.trajectory.momentum2)
    )
    if drift > config.drift_tol:
        raise NumericalError(
            f"momentum drift {drift:g} exceeds tolerance {config.drift_tol:g} "
            "under the configured step policy"
        )

    orbits = dynamics.find_critical_orbits(
        model, a, cls, n_starts=n_starts, tol=config.flow_tol, config=engine,
        rng=rng)
    rows = []
    for i, o in enumerate(orbits):
        rows.append([str(i), o.kind, fmt(o.value)]
                    + [fmt(m) for m in o.moduli] + [repr(o.grad_residual)])
    write_csv(out / "orbits.csv",
              ["orbit", "type", "H"]
              + [f"mod_{v.index[0]}_{v.index[1]}" for v in space.vectors]
              + ["residual"], rows)

    width = 10.0 * config.flow_tol
    bound = cls.multiplicity_bound
    three_d = [o for o in orbits if o.kind == "3d"]
    if cls.verdict is geometry.Verdict.INTERIOR_COLLINEAR_UNIQUE:
        zero_cls = [i for i, c in enumerate(space.classes)
                    if c is cls.classes_zero[0]][0]
        _, lstar = dynamics.two_d_level(model, a, zero_cls, engine, space)
        vals = dynamics.distinct_critical_values(
            [o for o in three_d if abs(o.value - lstar) > width], width)
    else:
        vals = dynamics.distinct_critical_values(three_d, width)
    count = len(vals)
    if isinstance(bound, int):
        status = "PASS" if count >= bound else "FAIL"
        footer = f"found {count} >= {bound} (bound {bound}): {status}"
    else:
        footer = f"found {count} (bound indeterminate)"
    log = [
        f"starts: {n_starts}, converged orbits: {len(orbits)}",
        f"momentum drift probe over t<=10: {drift:.3e}",
        footer,
    ]
    (out / "flow.log").write_text("\n".join(log) + "\n")
    print("\n".join(log))
    return EXIT_OK


def cmd_report(config: RunConfig) -> int:
    space, cls = _classification(config)
    out = _out(config)
    bundle = {
        "resonances": {
            "indices": [list(v.index) for v in space.vectors],
            "c_star": [repr(float(x)) for x in space.c_star],
        },
        "classification": {
            "verdict": cls.verdict.value,
            "dims": list(cls.dims),
            "topology": cls.topology.label,
            "multiplicity_bound": cls.multiplicity_bound,
        },
        "provenance": provenance(config),
    }
    if cls.verdict in (geometry.Verdict.INTERIOR_COLLINEAR_UNIQUE,
                       geometry.Verdict.INTERIOR_NONCOLLINEAR):
        cert = cohomology.orbit_bound_certificate(cls)
        bundle["cohomology"] = {
            "weights_minus": [list(k) for k in cert.weight_minus],
            "weights_plus": [list(k) for k in cert.weight_plus],
            "annihilator": [str(g) for g in cert.annihilator.generators],
            "witness": str(cert.witness),
            "membership": str(cert.membership),
            "cuplength": cert.cuplength,
            "bound": cert.bound,
        }
    if config.model_file:
        model = _load_model(config, space)
        engine = _engine(config)
        rng = np.random.default_rng(config.seed)
        orbits = dynamics.find_critical_orbits(
            model, np.asarray(config.momentum), cls,
            n_starts=config.n_starts or 10 * space.n_vectors,
            tol=config.flow_tol, config=engine, rng=rng)
        bundle["orbits"] = [
            {"type": o.kind, "H": fmt(o.value),
             "moduli": [fmt(m) for m in o.moduli]}
            for o in orbits
        ]
    (out / "report.json").write_text(json.dumps(bundle, indent=2) + "\n")
    print(f"report written to {out / 'report.json'}")
    return EXIT_OK


COMMANDS = {
    "web": cmd_web,
    "resonances": cmd_resonances,
    "design": cmd_design,
    "classify": cmd_classify,
    "cuplength": cmd_cuplength,
    "straighten": cmd_straighten,
    "flow": cmd_flow,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="stokes3d",
        description="resonance geometry and orbit-count bounds for 3d "
                    "gravity-capillary traveling waves",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--budget", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config, seed=args.seed, out_dir=args.out,
                             budget=args.budget)
        return COMMANDS[args.command](config)
    except PreconditionError as exc:
        print(f"precondition violation: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except BudgetError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
