"""Command-line interface for the spin-chain simulator."""

import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np

from . import __version__
from .analysis import FitError, detect_crossover, fit_powerlaw, oscillation_metric
from .config import (
    OUTPUT_ENV,
    ConfigError,
    RunConfig,
    apply_overrides,
    config_hash,
    load_config,
    physics_hash,
    validate_config,
)
from .evolve import IntegrationError
from .floquet import (
    DriveConfig,
    FloquetError,
    floquet_for_drive,
    horizon_periods,
    initial_state,
    late_time_average,
    long_time_average,
    quasienergies,
    sigma_x_expectation,
    delta_c,
    special_frequencies,
    stroboscopic_run,
)
from .fpt import identity_report
from .hilbert import build_basis, count_blockaded, enumerate_blockaded
from .models import degenerate_ramp_model, pxp_ramp_model
from .notify import SweepNotice, post_notice
from .ramp import RampFamily, RampProtocol, SweepPoint, run_ramp, default_plan, sweep_grid, sweep_tau
from .records import (
    CheckpointStore,
    RecordError,
    ResultRecord,
    header_line,
    read_csv,
    result_name,
    write_csv,
    write_json,
    write_recipe,
)
from .spectra import spectrum_scan

logger = logging.getLogger(__name__)


def _configure_logging(verbose: int) -> None:
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _config(ctx) -> RunConfig:
    return ctx.obj["config"]


def _finish(ctx, record: ResultRecord) -> None:
    """Write the run summary and exit 1 on any failed verdict."""
    config = _config(ctx)
    path = write_json(config.output_dir / f"{record.command}.run.json", record.to_dict())
    click.echo(f"Summary: {path} ({record.elapsed:.1f}s)")
    if not record.passed:
        failed = [name for name, ok in record.verdicts.items() if not ok]
        click.echo(f"Tolerance checks failed: {', '.join(failed)}", err=True)
        sys.exit(1)


def _ramp_model(config: RunConfig):
    m = config.model
    basis = build_basis(m.L, m.l_max)
    if m.kind == "pxp":
        return pxp_ramp_model(enumerate_blockaded(basis), m.w)
    return degenerate_ramp_model(basis, m.V0)


def _drive(config: RunConfig, h0: float) -> DriveConfig:
    f = config.floquet
    if f.omega_d is not None:
        return DriveConfig(h0=h0, omega_d=f.omega_d, V0=config.model.V0)
    if f.h0_over_omega is not None:
        return DriveConfig.from_ratio(h0, f.h0_over_omega, config.model.V0)
    return DriveConfig.at_special(h0, f.p, config.model.V0)


@click.group()
@click.version_option(version=__version__)
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Path to a run config (TOML)",
)
@click.option("--set", "overrides", multiple=True, metavar="SECTION.KEY=VALUE", help="Override a config value")
@click.option(
    "--output-dir",
    type=click.Path(file_okay=False, path_type=Path),
    envvar=OUTPUT_ENV,
    default=None,
    help=f"Output root (env {OUTPUT_ENV})",
)
@click.option("--workers", type=int, default=None, help="Parallel sweep workers")
@click.option("-v", "--verbose", count=True, help="Log progress (-vv for step-size detail)")
@click.pass_context
def cli(ctx, config_path: Path | None, overrides: tuple[str, ...], output_dir: Path | None,
        workers: int | None, verbose: int):
    """Ramp and Floquet dynamics of a spin chain with a degenerate point.

    Exact diagonalization at desk scale, with perturbative Floquet checks.
    """
    _configure_logging(verbose)
    ctx.ensure_object(dict)
    try:
        config = apply_overrides(load_config(config_path), list(overrides))
        if output_dir is not None:
            config.output_dir = output_dir
        if workers is not None:
            config.workers = workers
        validate_config(config)
    except ConfigError as e:
        raise click.UsageError(str(e))
    ctx.obj["config"] = config
    ctx.obj["hash"] = physics_hash(config)


@cli.command()
@click.pass_context
def spectrum(ctx):
    """Spectrum of the degenerate chain on a grid of transverse fields."""
    config = _config(ctx)
    m, s = config.model, config.spectrum
    if m.kind != "degenerate":
        raise click.UsageError("spectrum scans the degenerate model; set model.kind=degenerate")

    start = time.monotonic()
    basis = build_basis(m.L, m.l_max)
    h_grid = np.linspace(s.h_min, s.h_max, s.points)
    click.echo(f"Scanning {s.points} fields at L={m.L}, V0={m.V0}...")
    table = spectrum_scan(basis, m.V0, h_grid, config.workers)

    name = result_name("spectrum", m.kind, m.L, V0=m.V0)
    path = write_csv(
        config.output_dir / f"{name}.csv",
        header_line("spectrum", ctx.obj["hash"], L=m.L, V0=m.V0),
        ["h", "n", "energy"],
        table.rows(),
    )
    write_recipe(path, "Energy levels vs transverse field", "h / V0", ["energy / V0 grouped by n"],
                 [f"divide h and energy by V0={m.V0!r}"])
    click.echo(f"Wrote {path}")

    record = ResultRecord("spectrum", ctx.obj["hash"], {"csv": path.name})
    zero = np.nonzero(np.isclose(h_grid, 0.0, atol=1e-14))[0]
    if zero.size:
        levels = table.energies[zero[0]]
        tol = 1e-10 * max(1.0, float(np.abs(levels).max()))
        found = int(np.count_nonzero(np.abs(levels) <= tol))
        expected = count_blockaded(m.L)
        click.echo(f"Zero-energy manifold at h=0: {found} states (blockade count {expected})")
        record.outputs["zero_manifold"] = found
        record.verdicts["degeneracy"] = found == expected
    record.elapsed = time.monotonic() - start
    _finish(ctx, record)


@cli.command()
@click.pass_context
def ramp(ctx):
    """One ramp: F(t) and Q(t) along the protocol."""
    config = _config(ctx)
    m, r = config.model, config.ramp

    start = time.monotonic()
    model = _ramp_model(config)
    protocol = RampProtocol(
        kind=r.kind,
        amplitude=r.amplitude,
        tau=r.tau,
        t_start=r.start_fraction * r.tau,
        t_end=r.end_fraction * r.tau,
        w=m.w,
    )
    click.echo(f"Ramping {r.kind} at L={m.L}, tau={r.tau} with {r.engine}...")
    try:
        trace = run_ramp(model, protocol, r.samples, default_plan(protocol, r.engine, r.steps_per_tau, r.norm_tol))
    except IntegrationError as e:
        click.echo(f"Ramp failed: {e}", err=True)
        sys.exit(1)

    name = result_name("ramp", m.kind, m.L, kind=r.kind, amp=r.amplitude, tau=r.tau)
    rows = zip(trace.t_over_tau, trace.F, trace.Q / trace.energy_scale, trace.Q, trace.E_G, trace.degenerate)
    path = write_csv(
        config.output_dir / f"{name}.csv",
        header_line("ramp", ctx.obj["hash"], L=m.L, kind=r.kind, tau=r.tau, engine=r.engine),
        ["t_over_tau", "F", "Q_over_scale", "Q", "E_G", "degenerate_ground"],
        [tuple(row) for row in rows],
    )
    write_recipe(path, "Fidelity and residual energy along the ramp", "t_over_tau", ["F", "Q_over_scale"],
                 ["rows with degenerate_ground=1 use the ground-manifold projector"])
    click.echo(f"Wrote {path}")

    record = ResultRecord(
        "ramp",
        ctx.obj["hash"],
        {"csv": path.name, "F_end": float(trace.F[-1]), "Q_end": float(trace.Q[-1]),
         "max_norm_drift": trace.max_drift},
        {"norm_drift": trace.max_drift <= r.norm_tol, "residual_energy_bound": bool(np.all(trace.Q >= -1e-9))},
        time.monotonic() - start,
    )
    _finish(ctx, record)


def _sweep_point_key(config: RunConfig, tau: float) -> str:
    return config_hash({"model": config.model, "ramp": config.ramp, "tau": tau})


def _point_from_dict(values: dict) -> SweepPoint:
    return SweepPoint(
        tau=float(values["tau"]),
        Q=float(values["Q"]),
        F=float(values["F"]),
        status=values["status"],
        message=values["message"],
        max_drift=float(values["max_drift"]),
    )


@cli.command("ramp-sweep")
@click.pass_context
def ramp_sweep(ctx):
    """Terminal Q and F over a range of ramp times, with checkpoint/resume."""
    config = _config(ctx)
    m, r, sw = config.model, config.ramp, config.sweep

    start = time.monotonic()
    taus = list(sw.taus) if sw.taus else sweep_grid(sw.tau_min, sw.tau_max, sw.tau_points)
    model = _ramp_model(config)
    family = RampFamily(r.kind, r.amplitude, r.start_fraction, r.end_fraction, m.w)

    name = result_name("sweep", m.kind, m.L, kind=r.kind, amp=r.amplitude, end=r.end_fraction)
    store = CheckpointStore(config.output_dir / "checkpoints" / f"{name}.json")
    done = {}
    for tau in taus:
        values = store.get(_sweep_point_key(config, tau))
        if values is not None:
            done[tau] = _point_from_dict(values)
    click.echo(f"Sweeping {len(taus)} ramp times ({len(done)} from checkpoint), {config.workers} workers...")

    def on_point(point: SweepPoint) -> None:
        if point.tau not in done:
            store.put(_sweep_point_key(config, point.tau), asdict(point))

    points = sweep_tau(model, family, taus, r.engine, r.steps_per_tau, r.norm_tol, config.workers, done, on_point)

    scale = model.energy_scale
    path = write_csv(
        config.output_dir / f"{name}.csv",
        header_line("ramp-sweep", ctx.obj["hash"], L=m.L, kind=r.kind, engine=r.engine),
        ["tau", "Q", "Q_over_scale", "Q_over_scale_L", "F", "max_drift", "status"],
        [(p.tau, p.Q, p.Q / scale, p.Q / (scale * m.L), p.F, p.max_drift, p.status) for p in points],
    )
    write_recipe(path, "Residual energy and fidelity vs ramp time", "tau (log)",
                 ["Q_over_scale (log)", "Q_over_scale_L (log)", "F"],
                 ["fit Q ~ a / tau^b with the fit command"])
    click.echo(f"Wrote {path}")

    failed = [p for p in points if p.status == "failed"]
    drifted = [p for p in points if p.status == "drift"]
    elapsed = time.monotonic() - start
    post_notice(config.notify.url, SweepNotice("ramp-sweep", ctx.obj["hash"], len(points),
                                               [p.tau for p in failed + drifted], elapsed))
    drifts = [p.max_drift for p in points if math.isfinite(p.max_drift)]
    outputs = {"csv": path.name, "points": len(points), "failed": [p.tau for p in failed],
               "drift": [p.tau for p in drifted], "max_norm_drift": max(drifts, default=0.0)}
    record = ResultRecord("ramp-sweep", ctx.obj["hash"], outputs,
                          {"all_points": not failed, "norm_drift": not drifted}, elapsed)
    _finish(ctx, record)


def _periods(config: RunConfig) -> int:
    f = config.floquet
    if not f.long_horizon:
        return f.m_max
    return max(f.m_max, horizon_periods(f.m0, f.window, f.horizon_factor))


def _run_drive(config: RunConfig, h0: float, theta: float):
    f = config.floquet
    basis = build_basis(config.model.L, config.model.l_max)
    drive = _drive(config, h0)
    U = floquet_for_drive(basis, drive)
    trace = stroboscopic_run(
        U,
        initial_state(basis, theta),
        _periods(config),
        {"delta_c": delta_c, "sigma_x": sigma_x_expectation},
    )
    average = long_time_average(trace, f.m0, f.window, f.stride, f.average_mode)
    return drive, U, trace, average


@cli.command()
@click.option("--special-table", is_flag=True, help="Print omega_p* = h0/p for p=1..8 and exit")
@click.pass_context
def floquet(ctx, special_table: bool):
    """Stroboscopic Delta C(mT) under the square-pulse drive."""
    config = _config(ctx)
    m, f = config.model, config.floquet

    if special_table:
        click.echo(f"Special frequencies for h0={f.h0}:")
        for p, omega in special_frequencies(f.h0):
            click.echo(f"  p={p}: omega*={omega!r}")
        return

    start = time.monotonic()
    click.echo(f"Driving L={m.L} at h0={f.h0}, V0={m.V0}, theta={f.theta} for {_periods(config)} periods...")
    try:
        drive, U, trace, average = _run_drive(config, f.h0, f.theta)
    except FloquetError as e:
        click.echo(f"Floquet run failed: {e}", err=True)
        sys.exit(1)

    name = result_name("floquet", m.kind, m.L, h0=f.h0, omega=drive.omega_d, theta=f.theta)
    header = header_line("floquet", ctx.obj["hash"], L=m.L, h0=f.h0, omega_d=drive.omega_d, theta=f.theta)
    path = write_csv(
        config.output_dir / f"{name}.csv",
        header,
        ["m", "delta_c", "sigma_x"],
        [(int(k), float(dc), float(sx)) for k, dc, sx in zip(trace.m, trace.delta_c, trace.values["sigma_x"])],
    )
    notes = [f"long-time average over m in ({f.m0}, {f.m0 + f.window}] = {average!r}"]
    late = None
    if f.long_horizon:
        late = late_time_average(trace, f.window, f.stride, f.average_mode)
        notes.append(f"late-window average over m in ({trace.m_max - f.window}, {trace.m_max}] = {late!r}")
    write_recipe(path, "Stroboscopic Delta C", "m", ["delta_c"], notes)

    spectrum = quasienergies(U)
    qpath = write_csv(
        config.output_dir / f"{name}.quasi.csv",
        header,
        ["alpha", "theta", "quasienergy", "arccos_quasienergy"],
        [(a, float(th), float(e), float(ea)) for a, (th, e, ea) in
         enumerate(zip(spectrum.phases, spectrum.quasienergies, spectrum.arccos_energies))],
    )
    click.echo(f"Wrote {path}, {qpath}")
    click.echo(f"Long-time average Delta C = {average:.6g}")
    if late is not None:
        click.echo(f"Late-window average Delta C over {trace.m_max} periods = {late:.6g}")

    summary = {
        "h0": f.h0, "omega_d": drive.omega_d, "theta": f.theta, "L": m.L, "V0": m.V0,
        "average_delta_c": average, "average_mode": f.average_mode,
        "periods": trace.m_max, "late_average_delta_c": late,
        "max_norm_drift": trace.max_drift, "branch_warning": spectrum.near_branch_cut,
    }
    write_json(config.output_dir / f"{name}.json", {"config": ctx.obj["hash"], "version": __version__, **summary})
    record = ResultRecord("floquet", ctx.obj["hash"], {"csv": path.name, **summary},
                          {"norm_drift": trace.max_drift < 1e-8}, time.monotonic() - start)
    _finish(ctx, record)


@cli.command("floquet-sweep")
@click.pass_context
def floquet_sweep(ctx):
    """Long-time averages of Delta C over drive amplitudes and initial angles."""
    config = _config(ctx)
    m, f = config.model, config.floquet

    start = time.monotonic()
    grid = [(h0, theta) for h0 in f.h0_values for theta in f.thetas]
    name = result_name("floquet-sweep", m.kind, m.L, V0=m.V0)
    store = CheckpointStore(config.output_dir / "checkpoints" / f"{name}.json")
    click.echo(f"Sweeping {len(grid)} drive points, {config.workers} workers...")

    def run_point(point: tuple[float, float]) -> dict:
        h0, theta = point
        key = config_hash({"model": config.model, "floquet": config.floquet, "h0": h0, "theta": theta})
        cached = store.get(key)
        if cached is not None:
            return cached
        try:
            drive, _, _, average = _run_drive(config, h0, theta)
            values = {"h0": h0, "omega_d": drive.omega_d, "theta": theta, "average": average, "status": "ok"}
        except FloquetError as e:
            logger.warning("h0=%g theta=%g failed: %s", h0, theta, e)
            values = {"h0": h0, "omega_d": math.nan, "theta": theta, "average": math.nan, "status": "failed"}
        store.put(key, values)
        return values

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        results = list(pool.map(run_point, grid))

    path = write_csv(
        config.output_dir / f"{name}.csv",
        header_line("floquet-sweep", ctx.obj["hash"], L=m.L, V0=m.V0),
        ["h0", "omega_d", "theta", "average_delta_c", "status"],
        [(float(v["h0"]), float(v["omega_d"]), float(v["theta"]), float(v["average"]), v["status"])
         for v in results],
    )
    write_recipe(path, "Long-time averaged Delta C", "h0 / V0", ["average_delta_c grouped by theta"])
    click.echo(f"Wrote {path}")

    failed = [v for v in results if v["status"] != "ok"]
    elapsed = time.monotonic() - start
    post_notice(config.notify.url, SweepNotice("floquet-sweep", ctx.obj["hash"], len(results),
                                               [float(v["h0"]) for v in failed], elapsed))
    record = ResultRecord("floquet-sweep", ctx.obj["hash"], {"csv": path.name, "points": len(results)},
                          {"all_points": not failed}, elapsed)
    _finish(ctx, record)


@cli.command("fpt-check")
@click.pass_context
def fpt_check(ctx):
    """Residuals of the perturbative Floquet identities at the configured points."""
    config = _config(ctx)
    m = config.model

    start = time.monotonic()
    basis = build_basis(m.L, m.l_max)
    reports = []
    for V0, h0, T in config.fpt.points:
        report = identity_report(basis, V0, h0, T, config.tolerances)
        status = "PASS" if report.passed else "FAIL"
        worst = max(report.residuals, key=lambda k: report.residuals[k] / report.tolerances[k])
        click.echo(f"  V0={V0:g} h0={h0:g} T={T:g}: {status} (worst {worst}={report.residuals[worst]:.2e})")
        if report.branch_warning:
            click.echo("    warning: Floquet phases near the branch cut", err=True)
        reports.append(report)

    path = write_json(
        config.output_dir / f"{result_name('fpt-check', m.kind, m.L)}.json",
        {"config": ctx.obj["hash"], "version": __version__, "points": [r.to_dict() for r in reports]},
    )
    click.echo(f"Wrote {path}")
    verdicts = {f"point{i}": r.passed for i, r in enumerate(reports)}
    _finish(ctx, ResultRecord("fpt-check", ctx.obj["hash"], {"json": path.name}, verdicts,
                              time.monotonic() - start))


@cli.command()
@click.argument("sweep_csv", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.pass_context
def fit(ctx, sweep_csv: Path):
    """Power-law fit, decade segmentation and oscillation metric of a sweep CSV."""
    config = _config(ctx)
    fc = config.fit

    start = time.monotonic()
    try:
        _, columns, rows = read_csv(sweep_csv)
    except (OSError, StopIteration) as e:
        raise click.ClickException(f"Cannot read {sweep_csv}: {e}")
    if "tau" not in columns or fc.column not in columns:
        raise click.UsageError(f"{sweep_csv} needs columns tau and {fc.column}")
    ti, vi = columns.index("tau"), columns.index(fc.column)
    si = columns.index("status") if "status" in columns else None
    pairs = [(float(row[ti]), float(row[vi])) for row in rows if si is None or row[si] == "ok"]
    pairs = [(t, v) for t, v in pairs if math.isfinite(v)]
    taus = np.array([t for t, _ in pairs])
    values = np.array([v for _, v in pairs])

    report = {"config": ctx.obj["hash"], "version": __version__, "source": sweep_csv.name, "column": fc.column}
    window = (fc.tau_min, fc.tau_max) if fc.tau_min is not None and fc.tau_max is not None else None
    try:
        result = fit_powerlaw(taus, values, window)
    except FitError as e:
        click.echo(f"Fit failed: {e}", err=True)
        sys.exit(1)
    report["fit"] = result.to_dict()
    click.echo(f"Q ~ a/tau^b: a={result.a:.6g} b={result.b:.4f} (r2={result.r2:.4f}, {result.n_points} points)")

    try:
        report["oscillation"] = oscillation_metric(taus, values).to_dict()
    except FitError as e:
        logger.info("No oscillation metric: %s", e)

    stem = sweep_csv.stem
    try:
        crossover = detect_crossover(taus, values, tuple(fc.exponents))
        seg_path = write_csv(
            config.output_dir / f"{stem}.segments.csv",
            header_line("fit", ctx.obj["hash"], source=sweep_csv.name),
            ["tau_lo", "tau_hi", "b", "a", "r2", "exponent"],
            [(s.tau_lo, s.tau_hi, s.fit.b, s.fit.a, s.fit.r2, s.exponent) for s in crossover.segments],
        )
        report["boundaries"] = crossover.boundaries
        report["regimes"] = [list(r) for r in crossover.regimes()]
        click.echo(f"Regimes: {', '.join(f'b~{e:g} on [{lo:g}, {hi:g}]' for lo, hi, e in crossover.regimes())}")
        click.echo(f"Wrote {seg_path}")
    except FitError as e:
        logger.info("No crossover segmentation: %s", e)

    path = write_json(config.output_dir / f"{stem}.fit.json", report)
    click.echo(f"Wrote {path}")
    _finish(ctx, ResultRecord("fit", ctx.obj["hash"], {"json": path.name}, {}, time.monotonic() - start))


def main():
    try:
        cli(obj={})
    except RecordError as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
