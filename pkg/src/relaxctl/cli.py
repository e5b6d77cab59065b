"""Command-line experiment runner.

Every run writes its outputs plus a manifest.json holding the full resolved
configuration, seed and rng scheme, enough to reproduce the outputs
bit-exactly.  Exit codes: 0 success, 2 validation error, 3 simulation error,
4 acceptance-check failure under --check.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, rng
from .caratheodory import sliding_from_relaxed
from .chattering import chatter, chatter_error, convergence_study
from .controls import (
    SlidingControl,
    StrictControl,
    TimeGrid,
    control_from_json,
    embed_strict,
    make_action_grid,
    rademacher_control,
)
from .costs import estimate_cost
from .errors import RelaxctlError, SimulationError, ValidationError
from .models import lookup_model, validate_model
from .optimize import coordinate_descent, grid_search, value_gap
from .simulate import simulate_naive_relaxed, simulate_relaxed, simulate_strict

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SIMULATION = 3
EXIT_CHECK_FAILED = 4


def _fmt(x) -> str:
    """17 significant digits: round-trip exact for doubles."""
    return format(float(x), ".17g")


def _default_seed() -> int:
    env = os.environ.get("RELAXCTL_SEED")
    return int(env) if env is not None else 0


def _write_csv(path: Path, header, rows):
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(
                ",".join(
                    _fmt(v) if isinstance(v, (int, float, np.floating)) and not isinstance(v, bool) else str(v)
                    for v in row
                )
                + "\n"
            )


def _write_manifest(outdir: Path, config: dict):
    manifest = dict(config)
    manifest["version"] = __version__
    manifest["rng_scheme"] = rng.SCHEME_ID
    with open(outdir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _parse_control(spec: str, grid, timegrid):
    """dirac:<atom value> | uniform | file:<path>."""
    if spec.startswith("dirac:"):
        value = float(spec.split(":", 1)[1])
        i = grid.index_of(value)
        w = np.zeros((timegrid.K, grid.p))
        w[:, i] = 1.0
        return SlidingControl(grid=grid, timegrid=timegrid, weights=w)
    if spec == "uniform":
        w = np.full((timegrid.K, grid.p), 1.0 / grid.p)
        return SlidingControl(grid=grid, timegrid=timegrid, weights=w)
    if spec.startswith("file:"):
        control = control_from_json(Path(spec.split(":", 1)[1]).read_text())
        if isinstance(control, StrictControl):
            control = embed_strict(control)
        return control
    raise ValidationError(f"cannot parse control spec {spec!r}")


def _parse_atoms(text: str):
    return make_action_grid([float(v) for v in text.split(",")])


def _merge_config(args) -> dict:
    """flags > config file > defaults."""
    config = {}
    if getattr(args, "config", None):
        config.update(json.loads(Path(args.config).read_text()))
    for key, value in vars(args).items():
        if key in ("func", "config"):
            continue
        if value is not None:
            config[key] = value
    config.setdefault("seed", _default_seed())
    config.setdefault("threads", 1)
    config.setdefault("out", "out")
    return config


def _outdir(config) -> Path:
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _ensemble_summary_rows(ensemble):
    tg = ensemble.timegrid
    rows = []
    for k in range(tg.K + 1):
        x = ensemble.states[:, k, 0]
        rows.append(
            (
                k,
                tg.times[k],
                float(np.mean(x)),
                float(np.var(x)),
                float(ensemble.mf_psi[k][0]),
                float(ensemble.mf_phi[k][0]),
            )
        )
    return rows


def cmd_simulate(config) -> int:
    model = lookup_model(config["model"])
    timegrid = TimeGrid(T=config.get("T", model.horizon), K=config["K"])
    grid = _parse_atoms(config.get("atoms", "-1,1"))
    control = _parse_control(config.get("control", "uniform"), grid, timegrid)
    regime = config.get("regime", "relaxed")
    seed, n = config["seed"], config["N"]
    if regime == "relaxed":
        ensemble, _ = simulate_relaxed(model, control, n, timegrid, seed)
    elif regime == "naive":
        ensemble = simulate_naive_relaxed(model, control, n, timegrid, seed)
    elif regime == "strict":
        strict = StrictControl(
            grid=grid,
            timegrid=timegrid,
            assignment=np.argmax(control.weights, axis=1),
        )
        ensemble = simulate_strict(model, strict, n, timegrid, seed)
    else:
        raise ValidationError(f"unknown regime {regime!r}")
    out = _outdir(config)
    _write_csv(
        out / "summary.csv",
        ("step", "time", "mean", "variance", "meanfield_psi", "meanfield_phi"),
        _ensemble_summary_rows(ensemble),
    )
    if config.get("full"):
        rows = []
        for j in range(ensemble.N):
            for k in range(timegrid.K + 1):
                rows.append(
                    (j, k, timegrid.times[k])
                    + tuple(ensemble.states[j, k, :].tolist())
                )
        _write_csv(
            out / "paths.csv",
            ("particle", "step", "time") + tuple(f"x_{i+1}" for i in range(model.d)),
            rows,
        )
    _write_manifest(out, {**config, "rng_manifest": ensemble.rng_manifest})
    xT = ensemble.states[:, timegrid.K, 0]
    print(
        f"simulate {model.name} regime={regime} N={ensemble.N} K={timegrid.K}: "
        f"mean(X_T)={_fmt(np.mean(xT))} var(X_T)={_fmt(np.var(xT))} "
        f"box_exits={ensemble.box_exits}"
    )
    return EXIT_OK


def cmd_cost(config) -> int:
    model = lookup_model(config["model"])
    timegrid = TimeGrid(T=config.get("T", model.horizon), K=config["K"])
    grid = _parse_atoms(config.get("atoms", "-1,1"))
    control = _parse_control(config.get("control", "uniform"), grid, timegrid)
    ensemble, _ = simulate_relaxed(model, control, config["N"], timegrid, config["seed"])
    cost = estimate_cost(model, ensemble, control)
    out = _outdir(config)
    with open(out / "cost.json", "w") as f:
        json.dump(cost.to_json_dict(), f, indent=2)
        f.write("\n")
    _write_manifest(out, config)
    print(f"cost {model.name}: J = {_fmt(cost.mean)} +/- {_fmt(cost.stderr)}")
    return EXIT_OK


def cmd_chatter(config) -> int:
    model = lookup_model(config["model"])
    timegrid = TimeGrid(T=config.get("T", model.horizon), K=config["K"])
    grid = _parse_atoms(config.get("atoms", "-1,1"))
    control = _parse_control(config.get("control", "uniform"), grid, timegrid)
    ns = [int(v) for v in str(config.get("ns", "2,4,8,16")).split(",")]
    rows = convergence_study(model, control, ns, config["N"], config["seed"])
    out = _outdir(config)
    _write_csv(
        out / "chatter.csv",
        (
            "n",
            "J_strict",
            "J_strict_stderr",
            "J_relaxed",
            "J_relaxed_stderr",
            "J_diff",
            "J_diff_stderr",
            "sup_diff",
        ),
        [
            (
                r.n,
                r.j_strict,
                r.j_strict_stderr,
                r.j_relaxed,
                r.j_relaxed_stderr,
                r.j_diff,
                r.j_diff_stderr,
                "NA" if r.sup_diff is None else _fmt(r.sup_diff),
            )
            for r in rows
        ],
    )
    _write_manifest(out, config)
    print(
        f"chatter {model.name}: |J_diff| at n={rows[-1].n} is {_fmt(abs(rows[-1].j_diff))}"
    )
    if config.get("check"):
        first, last = rows[0], rows[-1]
        if not abs(last.j_diff) <= abs(first.j_diff):
            print("check FAILED: cost gap did not shrink with n", file=sys.stderr)
            return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_reduce(config) -> int:
    model = lookup_model(config["model"])
    timegrid = TimeGrid(T=config.get("T", model.horizon), K=config["K"])
    grid = _parse_atoms(config.get("atoms", "-1,-0.5,0,0.5,1"))
    control = _parse_control(config.get("control", "uniform"), grid, timegrid)
    ensemble, _ = simulate_relaxed(model, control, config["N"], timegrid, config["seed"])
    reduced = sliding_from_relaxed(model, control, ensemble)
    support_before = (control.weights > 0).sum(axis=1)
    support_after = (reduced.weights > 0).sum(axis=1)
    out = _outdir(config)
    report = {
        "support_before": support_before.tolist(),
        "support_after": support_after.tolist(),
        "max_support_after": int(support_after.max()),
        "reduced_control": reduced.to_json_dict(),
    }
    with open(out / "reduction.json", "w") as f:
        json.dump(report, f, indent=2)
        f.write("\n")
    _write_manifest(out, config)
    print(
        f"reduce {model.name}: max support {int(support_before.max())} -> "
        f"{int(support_after.max())}"
    )
    bound = model.d + model.d * model.d + 2
    if config.get("check") and int(support_after.max()) > bound:
        print(f"check FAILED: support exceeds {bound}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_optimize(config) -> int:
    model = lookup_model(config["model"])
    timegrid = TimeGrid(T=config.get("T", model.horizon), K=config["K"])
    grid = _parse_atoms(config.get("atoms", "-1,1"))
    report = grid_search(
        model,
        grid,
        timegrid,
        weight_resolution=config.get("resolution", 4),
        blocks=config.get("blocks", 1),
        N=config["N"],
        seed=config["seed"],
        threads=config["threads"],
    )
    refined = coordinate_descent(
        model,
        report.best_control,
        iterations=config.get("iterations", 10),
        step=config.get("step", 0.05),
        N=config["N"],
        seed=config["seed"],
        blocks=config.get("blocks", 1),
    )
    out = _outdir(config)
    with open(out / "optimize.json", "w") as f:
        json.dump(refined.to_json_dict(), f, indent=2)
        f.write("\n")
    _write_csv(
        out / "trace.csv",
        ("iteration", "mean", "stderr"),
        report.trace + refined.trace,
    )
    _write_manifest(out, config)
    weights = refined.best_control.weights[0]
    print(
        f"optimize {model.name}: best weights {np.array2string(weights, precision=4)} "
        f"cost {_fmt(refined.best_cost.mean)} +/- {_fmt(refined.best_cost.stderr)}"
    )
    if config.get("check") and config["model"] == "rademacher_ode":
        ok = (
            np.abs(weights - 0.5).max() <= 0.05
            and refined.best_cost.mean <= 1e-3
        )
        if not ok:
            print("check FAILED: optimum not at (0.5, 0.5) / cost > 1e-3", file=sys.stderr)
            return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_counterexample(config) -> int:
    """The controlled-diffusion separation experiment.

    Strict rapidly-switching control vs the naive mixture (frozen state) vs
    the martingale-measure mixture (Brownian state), all from one seed.
    """
    model = lookup_model("diffusion_counterexample")
    timegrid = TimeGrid(T=config.get("T", 1.0), K=config["K"])
    grid = make_action_grid([-1.0, 1.0])
    n_rad = config.get("n_rademacher", 64)
    seed, n = config["seed"], config["N"]
    x0 = float(model.x0[0])

    u_n = rademacher_control(grid, n_rad, timegrid)
    half = SlidingControl(
        grid=grid, timegrid=timegrid, weights=np.full((timegrid.K, 2), 0.5)
    )
    ens_strict = simulate_strict(model, u_n, n, timegrid, seed)
    ens_naive = simulate_naive_relaxed(model, half, n, timegrid, seed)
    ens_relaxed, _ = simulate_relaxed(model, half, n, timegrid, seed)

    def sq_dev(ens):
        v = (ens.states[:, timegrid.K, 0] - x0) ** 2
        return float(np.mean(v)), float(np.std(v, ddof=1) / np.sqrt(n))

    strict_m, strict_se = sq_dev(ens_strict)
    relaxed_m, relaxed_se = sq_dev(ens_relaxed)
    naive_max = float(np.abs(ens_naive.states - x0).max())
    sep = (ens_strict.states[:, timegrid.K, 0] - ens_naive.states[:, timegrid.K, 0]) ** 2
    sep_m, sep_se = float(np.mean(sep)), float(np.std(sep, ddof=1) / np.sqrt(n))

    out = _outdir(config)
    _write_csv(
        out / "counterexample.csv",
        ("regime", "statistic", "value", "stderr"),
        [
            (f"strict_rademacher_{n_rad}", "E[(X_T-x0)^2]", strict_m, strict_se),
            ("naive", "max|X-x0|", naive_max, 0.0),
            ("relaxed", "E[(X_T-x0)^2]", relaxed_m, relaxed_se),
            ("separation", "E|X_strict_T-X_naive_T|^2", sep_m, sep_se),
        ],
    )
    _write_manifest(out, config)
    print(
        f"counterexample: strict {_fmt(strict_m)}+/-{_fmt(strict_se)} "
        f"naive max dev {_fmt(naive_max)} relaxed {_fmt(relaxed_m)}+/-{_fmt(relaxed_se)}"
    )
    if config.get("check"):
        T = timegrid.T
        ok = (
            naive_max == 0.0
            and abs(strict_m - T) <= 3 * strict_se
            and abs(relaxed_m - T) <= 3 * relaxed_se
            and abs(sep_m - T) <= 3 * sep_se
        )
        if not ok:
            print("check FAILED: separation criteria violated", file=sys.stderr)
            return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_value_gap(config) -> int:
    model = lookup_model(config["model"])
    timegrid = TimeGrid(T=config.get("T", model.horizon), K=config["K"])
    grid = _parse_atoms(config.get("atoms", "-1,1"))
    report = value_gap(
        model,
        grid,
        timegrid,
        N=config["N"],
        seed=config["seed"],
        blocks=config.get("blocks", 1),
        weight_resolution=config.get("resolution", 4),
        threads=config["threads"],
    )
    out = _outdir(config)
    payload = {
        "gap": report.gap,
        "best_strict_cost": report.best_strict_cost.to_json_dict(),
        "best_relaxed_cost": report.best_relaxed_cost.to_json_dict(),
        "bridge": [
            {"n": n, "mean": m, "stderr": s} for (n, m, s) in report.bridge
        ],
        "best_relaxed": report.best_relaxed.to_json_dict(),
    }
    with open(out / "value_gap.json", "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")
    _write_csv(
        out / "bridge.csv",
        ("n", "mean", "stderr"),
        report.bridge,
    )
    _write_manifest(out, config)
    print(
        f"value-gap {model.name}: strict {_fmt(report.best_strict_cost.mean)} "
        f"relaxed {_fmt(report.best_relaxed_cost.mean)} gap {_fmt(report.gap)}"
    )
    if config.get("check"):
        means = [m for (_, m, _) in report.bridge]
        if not all(
            means[i] + 1e-12 >= means[i + 1] - 3 * report.bridge[i + 1][2]
            for i in range(len(means) - 1)
        ):
            print("check FAILED: chattering bridge not decreasing", file=sys.stderr)
            return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_validate_model(config) -> int:
    model = lookup_model(config["model"])
    report = validate_model(model, samples=config.get("samples", 200), seed=config["seed"])
    out = _outdir(config)
    with open(out / "validation.json", "w") as f:
        json.dump(
            {
                "model": report.model,
                "passed": report.passed,
                "checks": [
                    {
                        "name": c.name,
                        "max_abs": c.max_abs,
                        "worst_lipschitz_ratio": c.worst_lipschitz_ratio,
                        "bound_ok": c.bound_ok,
                        "lipschitz_ok": c.lipschitz_ok,
                    }
                    for c in report.checks
                ],
            },
            f,
            indent=2,
        )
        f.write("\n")
    _write_manifest(out, config)
    print(report.summary())
    if config.get("check") and not report.passed:
        return EXIT_CHECK_FAILED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relaxctl",
        description="Relaxed mean-field stochastic control experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model_required=True):
        p.add_argument("--model", required=model_required)
        p.add_argument("--config", help="JSON config file (flags override it)")
        p.add_argument("--N", type=int)
        p.add_argument("--K", type=int)
        p.add_argument("--T", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--out")
        p.add_argument("--check", action="store_true", default=None)
        p.add_argument("--atoms", help="comma-separated atom values")

    p = sub.add_parser("simulate", help="simulate an ensemble, write summary CSV")
    common(p)
    p.add_argument("--control", help="dirac:<atom> | uniform | file:<path>")
    p.add_argument("--regime", choices=("strict", "naive", "relaxed"))
    p.add_argument("--full", action="store_true", default=None, help="write all paths")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("cost", help="Monte Carlo cost of a control")
    common(p)
    p.add_argument("--control")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("chatter", help="chattering convergence study")
    common(p)
    p.add_argument("--control")
    p.add_argument("--ns", help="comma-separated slice counts")
    p.set_defaults(func=cmd_chatter)

    p = sub.add_parser("reduce", help="Caratheodory support reduction")
    common(p)
    p.add_argument("--control")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("optimize", help="lattice search plus coordinate descent")
    common(p)
    p.add_argument("--resolution", type=int)
    p.add_argument("--blocks", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--step", type=float)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("counterexample", help="naive vs martingale-measure separation")
    common(p, model_required=False)
    p.add_argument("--n-rademacher", dest="n_rademacher", type=int)
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("value-gap", help="strict vs relaxed infimum comparison")
    common(p)
    p.add_argument("--resolution", type=int)
    p.add_argument("--blocks", type=int)
    p.set_defaults(func=cmd_value_gap)

    p = sub.add_parser("validate-model", help="sampled bound/Lipschitz check")
    common(p)
    p.add_argument("--samples", type=int)
    p.set_defaults(func=cmd_validate_model)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else 0
    config = _merge_config(args)
    try:
        return args.func(config)
    except SimulationError as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except (RelaxctlError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
