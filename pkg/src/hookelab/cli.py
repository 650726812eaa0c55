"""Command-line entry point.

Exit status: 0 success, 1 validation failure, 2 usage or config error,
3 run aborted (admissibility loss or non-finite state).
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import io
from .diagnostics import decay_study, kappa_study, make_record, KAPPA_CAVEAT
from .errors import AdmissibilityError, ConfigError, NonFiniteStateError
from .integrator import SimState, StepConfig, simulate
from .nonlinear import GaussianBump, RandomBand, kinematics_from_gradient, make_initial_data
from .params import SimParams
from .propagator import iter_linear_trajectory
from .spectral import Grid, gradient, set_workers, to_physical


def params_from(cfg: dict) -> SimParams:
    return SimParams(
        mu=cfg["mu"],
        lam=cfg["lam"],
        kappa=cfg["kappa"],
        pressure_amp=cfg["pressure_amp"],
        pressure_exp=cfg["pressure_exp"],
    )


def initial_spec(cfg: dict):
    if cfg["init"] == "gaussian_bump":
        return GaussianBump(
            amplitude=cfg["init_amplitude"],
            width=cfg["init_width"],
            velocity_amplitude=cfg["init_velocity_amplitude"],
        )
    return RandomBand(
        seed=cfg["seed"],
        band=cfg["init_band"],
        amplitude=cfg["init_amplitude"],
        velocity_amplitude=cfg["init_velocity_amplitude"],
    )


def step_config(cfg: dict) -> StepConfig:
    return StepConfig(
        dt=cfg["dt"] if cfg["dt"] > 0 else None,
        scheme=cfg["scheme"],
        dealias=cfg["dealias"],
        admissibility_check_every=cfg["admissibility_check_every"],
    )


def kappa_step_config(cfg: dict, grid: Grid):
    """Per-kappa step that resolves the fastest retained acoustic frequency."""
    xi_max = math.sqrt(3) * (grid.n // 3) * 2 * math.pi / grid.box_len

    def make(p: SimParams) -> StepConfig:
        omega = p.sound_speed * xi_max
        return StepConfig(
            dt=cfg["kappa_wave_cfl"] / (2 * omega),
            scheme=cfg["scheme"],
            dealias=cfg["dealias"],
            admissibility_check_every=cfg["admissibility_check_every"],
        )

    return make


def _plot_loglog(path, series, xlabel, ylabel):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    for label, x, y in series:
        ax.loglog(x, y, marker="o", ms=3, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


# --- subcommands ----------------------------------------------------------------


def cmd_simulate(cfg, args) -> int:
    p = params_from(cfg)
    grid = Grid(cfg["n"], cfg["box_len"])
    data = make_initial_data(initial_spec(cfg), p, grid)
    print(f"E(0) = {data.energy0:.6g}")
    print(f"smallness ratio (diagnostic, unit constant) = {data.smallness_ratio:.6g}")
    print(f"min J(0) = {data.min_j:.6g}")
    records_path = os.path.join(args.out, "simulate.csv")
    try:
        run = simulate(data, step_config(cfg), p, cfg["t_end"], cfg["record_every"], keep_states=False)
    except (AdmissibilityError, NonFiniteStateError) as exc:
        io.emit_records(records_path, exc.partial.records)
        print(f"aborted: {exc}", file=sys.stderr)
        return 3
    io.emit_records(records_path, run.records)
    # final state from the last step
    last = run.records[-1]
    print(f"t = {last.t:.6g}  E = {last.energy:.6g}  min J = {last.min_j:.6g}  dt = {run.dt:.6g}")
    if args.plot:
        t = np.array([r.t for r in run.records])
        e = np.array([r.energy for r in run.records])
        _plot_loglog(os.path.join(args.out, "simulate.svg"), [("E(t)", 1 + t, e)], "1 + t", "E")
    return 0


def cmd_linear(cfg, args) -> int:
    p = params_from(cfg)
    grid = Grid(cfg["n"], cfg["box_len"])
    data = make_initial_data(initial_spec(cfg), p, grid)
    s0 = SimState.from_physical(data.eta0, data.u0, grid)
    times = np.linspace(0.0, cfg["t_end"], max(cfg["linear_samples"], 1))
    records = []
    for t, (eta_hat, u_hat) in zip(times, iter_linear_trajectory((s0.eta_hat, s0.u_hat), times, p, grid)):
        kin = kinematics_from_gradient(to_physical(gradient(eta_hat, grid), grid), check=False)
        records.append(make_record((eta_hat, u_hat), t, p, grid, kin.min_j, data.energy0))
    io.emit_records(os.path.join(args.out, "linear.csv"), records)
    snap = io.vector_fields(eta=to_physical(eta_hat, grid), u=to_physical(u_hat, grid))
    io.write_snapshot(os.path.join(args.out, "linear_final.cvef"), grid, snap)
    print(f"E(0) = {records[0].energy:.6g}  E({times[-1]:.6g}) = {records[-1].energy:.6g}")
    return 0


def cmd_decay(cfg, args) -> int:
    from .propagator import RadialProfile

    p = params_from(cfg).replace(kappa=cfg["decay_kappa"])
    profile = RadialProfile.gaussian(cfg["decay_profile"])
    ks = args.k if args.k else [0, 1, 2]
    series = []
    for k in ks:
        st = decay_study(
            p, k, cfg["decay_t_min"], cfg["decay_t_max"], cfg["decay_samples"], profile=profile
        )
        rows = [
            [t, v, st.fit.exponent, st.expected, st.fit.residual]
            for t, v in zip(st.times, st.norm_sq)
        ]
        io.write_csv(
            os.path.join(args.out, f"decay_k{k}.csv"),
            ["t", "norm_sq", "fitted_slope", "expected_slope", "fit_residual"],
            rows,
        )
        flag = "  (not a clean power law)" if st.fit.misfit else ""
        print(f"k={k}: fitted slope {st.fit.exponent:.4f}, expected {st.expected:.4f}{flag}")
        series.append((f"k={k}", 1 + st.times, st.norm_sq))
    if args.plot:
        _plot_loglog(os.path.join(args.out, "decay.svg"), series, "1 + t", "squared norm")
    return 0


def cmd_kappa(cfg, args) -> int:
    base = params_from(cfg)
    grid = Grid(cfg["n"], cfg["box_len"])
    spec = initial_spec(cfg)
    # zero displacement keeps both the data and E(0) independent of kappa
    if isinstance(spec, RandomBand):
        spec = RandomBand(spec.seed, spec.band, 0.0, cfg["init_velocity_amplitude"])
    else:
        spec = GaussianBump(0.0, spec.width, spec.center, cfg["init_velocity_amplitude"])

    def factory(p):
        return make_initial_data(spec, p, grid)

    study = kappa_study(
        factory,
        kappa_step_config(cfg, grid),
        base,
        cfg["kappa_list"],
        cfg["kappa_t_end"],
        threads=args.threads,
        record_every=cfg["record_every"],
    )
    rows = [
        [r.kappa, r.sup_gap, r.gap_dissipation, "aborted" if r.aborted else "ok", study.slope]
        for r in study.rows
    ]
    io.write_csv(
        os.path.join(args.out, "kappa_study.csv"),
        ["kappa", "sup_gap_energy", "gap_dissipation_integral", "status", "fitted_slope"],
        rows,
    )
    with open(os.path.join(args.out, "kappa_study_caveat.txt"), "w", encoding="utf-8") as fh:
        fh.write(KAPPA_CAVEAT + "\n")
    for r in study.rows:
        status = f"aborted: {r.message}" if r.aborted else f"sup gap E = {r.sup_gap:.6g}"
        print(f"kappa = {r.kappa:g}: {status}")
    slope = f"{study.slope:.4f}" if study.slope_defined else "undefined"
    print(f"fitted slope of log sup gap vs log kappa: {slope} (reference -0.5)")
    print(KAPPA_CAVEAT)
    if args.plot and study.slope_defined:
        ok = [r for r in study.rows if not r.aborted and r.sup_gap > 0]
        _plot_loglog(
            os.path.join(args.out, "kappa_study.svg"),
            [("sup gap E", [r.kappa for r in ok], [r.sup_gap for r in ok])],
            "kappa",
            "sup gap E",
        )
    return 0


def cmd_validate(cfg, args) -> int:
    from .validation import run_checks

    results = run_checks(cfg, seed=cfg["seed"])
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    failed = sum(not ok for _, ok, _ in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


COMMANDS = {
    "simulate": cmd_simulate,
    "linear": cmd_linear,
    "decay-study": cmd_decay,
    "kappa-study": cmd_kappa,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads")
    common.add_argument("--plot", action="store_true", help="write an SVG log-log plot")

    parser = argparse.ArgumentParser(
        prog="hookelab", description="Compressible Hookean viscoelastic laboratory."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="nonlinear run")
    sub.add_parser("linear", parents=[common], help="exact linear trajectory")
    decay = sub.add_parser("decay-study", parents=[common], help="whole-space linear decay rates")
    decay.add_argument("--k", type=int, nargs="+", help="derivative orders (default 0 1 2)")
    sub.add_parser("kappa-study", parents=[common], help="nonlinear-linear gap versus kappa")
    sub.add_parser("validate", parents=[common], help="invariant self-checks")
    sub.add_parser("config", help="print the documented default configuration")
    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "config":
        sys.stdout.write(io.describe_config())
        return 0
    try:
        cfg = io.load_config(args.config) if args.config else io.default_config()
    except ConfigError as exc:
        print(f"config error: {args.config}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.threads < 1:
        print("--threads must be >= 1", file=sys.stderr)
        return 2
    set_workers(args.threads)
    os.makedirs(args.out, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
