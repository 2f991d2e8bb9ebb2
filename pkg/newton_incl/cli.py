from __future__ import annotations

import logging
import time
from fractions import Fraction
from typing import List, Optional

import numpy as np
import typer
from rich import print as rprint
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from .catalog import UnknownProblemError, catalog_entries, resolve_problem
from .certify import (
    Certificate,
    CertificateError,
    RobinsonConditionError,
    RobustnessBall,
    RobustnessError,
    SampledEstimate,
    certify_problem,
    robustness_ball,
)
from .engine import VerificationRun, verify_certificate
from .majorant import MajorantError
from .problems import InclusionProblem, ProblemFormatError
from .report import RunReport, write_report
from .settings import settings
from .solver import (
    CONVERGED_RESIDUAL,
    CONVERGED_STEP,
    MAX_ITER,
    STEP_FAILURE,
    SolveConfig,
    SolveTrace,
    newton_solve,
)

app = typer.Typer(add_completion=False)

EXIT_OK = 0
EXIT_BAD_INPUT = 1
EXIT_MAX_ITER = 2
EXIT_STEP_FAILURE = 3
EXIT_RHO_TOO_LARGE = 4
EXIT_BOUND_VIOLATION = 5

STATUS_EXIT = {
    CONVERGED_RESIDUAL: EXIT_OK,
    CONVERGED_STEP: EXIT_OK,
    MAX_ITER: EXIT_MAX_ITER,
    STEP_FAILURE: EXIT_STEP_FAILURE,
}

BAD_INPUT = (
    ProblemFormatError,
    UnknownProblemError,
    CertificateError,
    RobinsonConditionError,
    MajorantError,
    ValueError,
)


def fmt(v: Optional[float]) -> str:
    """Fixed 12 significant digits."""
    if v is None:
        return "-"
    return f"{float(v):.11e}"


def parse_number(s: str) -> float:
    """Decimal, scientific or rational ("1/3") input, parsed exactly before conversion."""
    try:
        return float(Fraction(s.strip()))
    except (ValueError, ZeroDivisionError) as e:
        raise typer.BadParameter(f"Invalid number {s!r}. Use e.g. 0.25, 1e-3 or 1/3") from e


def parse_vector(s: str, n: int) -> np.ndarray:
    parts = [p for p in s.split(",") if p.strip()]
    if len(parts) != n:
        raise typer.BadParameter(f"--x0 needs {n} comma-separated values, got {len(parts)}")
    return np.array([parse_number(p) for p in parts])


def _fail(message: str, code: int) -> typer.Exit:
    Console(stderr=True).print(f"[red]error:[/red] {message}")
    return typer.Exit(code)


def _load(source: str) -> InclusionProblem:
    try:
        return resolve_problem(source)
    except (ProblemFormatError, UnknownProblemError, OSError) as e:
        raise _fail(str(e), EXIT_BAD_INPUT) from e


def _emit(report: RunReport, json_out: Optional[str]) -> None:
    if json_out == "-":
        typer.echo(report.to_json(), nl=False)
    elif json_out:
        path = write_report(report, json_out)
        rprint(f"[green]Report written.[/green] {path}")


@app.callback()
def main(
    log_level: Optional[str] = typer.Option(None, "--log-level", help="DEBUG | INFO | WARNING | ERROR"),
):
    level = (log_level or settings.log_level).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


# -- solve --------------------------------------------------------------------------------


def trace_table(trace: SolveTrace, title: str = "Newton iterations") -> Table:
    t = Table(title=title)
    t.add_column("k", justify="right")
    t.add_column("||step||", justify="right")
    t.add_column("residual", justify="right")
    for _, row in trace.to_frame().iterrows():
        step = None if np.isnan(row["step_norm"]) else row["step_norm"]
        t.add_row(str(int(row["k"])), fmt(step), fmt(row["residual"]))
    return t


@app.command()
def solve(
    source: str = typer.Argument(..., help="Catalog name or path to a problem JSON file"),
    x0: Optional[str] = typer.Option(None, "--x0", help="Start point as comma-separated values"),
    max_iter: Optional[int] = typer.Option(None, "--max-iter"),
    tol: Optional[float] = typer.Option(None, "--tol", help="Residual tolerance d(0, F(x) - C)"),
    json_out: Optional[str] = typer.Option(None, "--json", help="Write the JSON report here ('-' for stdout)"),
):
    problem = _load(source)
    started = time.perf_counter()
    try:
        start = problem.x_tilde if x0 is None else parse_vector(x0, problem.n)
        config = SolveConfig(
            max_iter=max_iter or settings.max_iter,
            residual_tol=settings.residual_tol if tol is None else tol,
            step_tol=settings.step_tol,
            feas_tol=settings.feas_tol,
            opt_tol=settings.opt_tol,
        )
        trace = newton_solve(problem, start, config)
    except typer.BadParameter as e:
        raise _fail(str(e), EXIT_BAD_INPUT) from e
    except BAD_INPUT as e:
        raise _fail(str(e), EXIT_BAD_INPUT) from e

    code = STATUS_EXIT[trace.status]
    report = RunReport(
        command="solve",
        problem=problem.name or source,
        flags={"x0": [float(v) for v in start], "max_iter": config.max_iter, "tol": config.residual_tol},
        trace=trace.to_dict(),
        exit_code=code,
        timing={"seconds": time.perf_counter() - started},
    )
    if json_out != "-":
        rprint(trace_table(trace))
        colour = "green" if code == EXIT_OK else "red"
        rprint(f"[{colour}]{trace.status}[/{colour}] after {trace.iterations} steps; x = {trace.x.tolist()}")
        if trace.message and code != EXIT_OK:
            rprint(trace.message)
    _emit(report, json_out)
    raise typer.Exit(code)


# -- certify ------------------------------------------------------------------------------


def _certificate(
    problem: InclusionProblem,
    family: str,
    L: Optional[str],
    gamma: Optional[str],
    samples: Optional[int],
    seed: Optional[int],
    workers: int,
) -> tuple[Certificate, Optional[SampledEstimate]]:
    family = family.lower()
    if family not in ("quadratic", "smale"):
        raise typer.BadParameter(f"Unknown family {family!r}. Use 'quadratic' or 'smale'")
    own, other = (L, gamma) if family == "quadratic" else (gamma, L)
    if other is not None:
        flag = "--gamma" if family == "quadratic" else "--L"
        raise typer.BadParameter(f"{flag} does not apply to the {family} family")

    key = "L" if family == "quadratic" else "gamma"
    provenance = "user_supplied"
    if own is None and key in problem.expected:
        constant: Optional[float] = float(problem.expected[key])
        provenance = "exact"
    elif own is None or own.strip().lower() == "estimate":
        constant = None
    else:
        constant = parse_number(own)
    return certify_problem(
        problem,
        family,
        constant,
        samples=samples or settings.samples,
        seed=settings.seed if seed is None else seed,
        workers=workers,
        constant_provenance=provenance,
    )


def certificate_table(cert: Certificate, estimate: Optional[SampledEstimate]) -> Table:
    t = Table(title=f"{cert.family} certificate ({cert.label})")
    t.add_column("quantity")
    t.add_column("value", justify="right")
    t.add_column("provenance")
    for k, v in cert.params.items():
        t.add_row(k, fmt(v), cert.provenance.get(k, ""))
    name = "2bL" if cert.family == "quadratic" else "alpha"
    t.add_row(f"{name} (<= {fmt(cert.condition_bound)})", fmt(cert.condition), "")
    t.add_row("t_star", fmt(cert.t_star), "")
    t.add_row("t_bar", fmt(cert.t_bar), "")
    t.add_row("beta", fmt(cert.beta), "")
    t.add_row("rho_max = beta/2", fmt(cert.rho_max), "")
    t.add_row("variant rho bound", fmt(cert.variant_rho_bound), "")
    t.add_row("Q", fmt(cert.Q), "")
    if estimate is not None:
        t.add_row(f"{estimate.name} samples", str(estimate.n_samples), f"seed {estimate.seed}")
    return t


def ball_table(ball: RobustnessBall) -> Table:
    t = Table(title=f"Robustness ball rho = {fmt(ball.rho)}")
    t.add_column("quantity")
    t.add_column("value", justify="right")
    t.add_column("variant closed form", justify="right")
    t.add_row("g(0)", fmt(ball.g.f(0.0)), "")
    t.add_row("t_star_rho", fmt(ball.t_star_rho), fmt(ball.variant_t_star_rho))
    t.add_row("Q_rho", fmt(ball.Q_rho), fmt(ball.variant_Q_rho))
    return t


def verdict(cert: Certificate) -> str:
    if not cert.hypothesis_ok:
        return "[red]FAIL[/red]: hypothesis does not hold"
    qualifier = " (boundary case, no robustness ball)" if not cert.strict_ok else ""
    if cert.empirical:
        return f"[yellow]OK, empirical[/yellow]: sampled constant is a lower bound{qualifier}"
    return f"[green]OK[/green]: hypothesis holds{qualifier}"


@app.command()
def certify(
    source: str = typer.Argument(..., help="Catalog name or path to a problem JSON file"),
    family: str = typer.Option("quadratic", "--family", help="quadratic | smale"),
    L: Optional[str] = typer.Option(None, "--L", help="Lipschitz constant, or 'estimate'"),
    gamma: Optional[str] = typer.Option(None, "--gamma", help="Smale gamma, or 'estimate'"),
    samples: Optional[int] = typer.Option(None, "--samples"),
    seed: Optional[int] = typer.Option(None, "--seed", envvar="NEWTON_INCL_SEED"),
    rho: Optional[str] = typer.Option(None, "--rho", help="Robustness radius"),
    workers: int = typer.Option(1, "--workers"),
    json_out: Optional[str] = typer.Option(None, "--json", help="Write the JSON report here ('-' for stdout)"),
):
    problem = _load(source)
    started = time.perf_counter()
    try:
        cert, estimate = _certificate(problem, family, L, gamma, samples, seed, workers)
        rho_val = None if rho is None else parse_number(rho)
    except typer.BadParameter as e:
        raise _fail(str(e), EXIT_BAD_INPUT) from e
    except BAD_INPUT as e:
        raise _fail(str(e), EXIT_BAD_INPUT) from e

    ball = None
    if rho_val is not None:
        try:
            ball = robustness_ball(cert, rho_val)
        except RobustnessError as e:
            raise _fail(f"{e} (rho_max = {fmt(cert.rho_max)})", EXIT_RHO_TOO_LARGE) from e

    report = RunReport(
        command="certify",
        problem=problem.name or source,
        flags={"family": cert.family, "seed": settings.seed if seed is None else seed, "rho": rho_val},
        certificate=cert.to_dict(),
        estimate=estimate.to_dict() if estimate else None,
        robustness=ball.to_dict() if ball else None,
        timing={"seconds": time.perf_counter() - started},
    )
    if json_out != "-":
        rprint(certificate_table(cert, estimate))
        if ball is not None:
            rprint(ball_table(ball))
        rprint(verdict(cert))
    _emit(report, json_out)


# -- verify -------------------------------------------------------------------------------


def matrix_table(run: VerificationRun) -> Table:
    df = run.matrix().fillna("-")
    t = Table(title="Bound verification")
    for col in df.columns:
        t.add_column(str(col))
    for _, row in df.iterrows():
        t.add_row(*[str(v) for v in row.tolist()])
    return t


def _verify_exit(run: VerificationRun) -> int:
    statuses: List[str] = [r.trace.status for r in run.runs]
    if STEP_FAILURE in statuses:
        return EXIT_STEP_FAILURE
    if MAX_ITER in statuses:
        return EXIT_MAX_ITER
    return EXIT_OK if run.passed else EXIT_BOUND_VIOLATION


@app.command()
def verify(
    source: str = typer.Argument(..., help="Catalog name or path to a problem JSON file"),
    family: str = typer.Option("quadratic", "--family", help="quadratic | smale"),
    L: Optional[str] = typer.Option(None, "--L", help="Lipschitz constant, or 'estimate'"),
    gamma: Optional[str] = typer.Option(None, "--gamma", help="Smale gamma, or 'estimate'"),
    samples: Optional[int] = typer.Option(None, "--samples"),
    seed: Optional[int] = typer.Option(None, "--seed", envvar="NEWTON_INCL_SEED"),
    rho: Optional[str] = typer.Option(None, "--rho", help="Robustness radius for perturbed starts"),
    perturb: int = typer.Option(0, "--perturb", help="Number of random starts in B(x_tilde, rho)"),
    workers: int = typer.Option(1, "--workers"),
    json_out: Optional[str] = typer.Option(None, "--json", help="Write the JSON report here ('-' for stdout)"),
):
    problem = _load(source)
    started = time.perf_counter()
    seed_val = settings.seed if seed is None else seed
    try:
        cert, estimate = _certificate(problem, family, L, gamma, samples, seed, workers)
        rho_val = None if rho is None else parse_number(rho)
        if perturb < 0:
            raise typer.BadParameter("--perturb must be nonnegative")
        if perturb and rho_val is None:
            raise typer.BadParameter("--perturb needs --rho")
    except typer.BadParameter as e:
        raise _fail(str(e), EXIT_BAD_INPUT) from e
    except BAD_INPUT as e:
        raise _fail(str(e), EXIT_BAD_INPUT) from e
    if not cert.hypothesis_ok:
        raise _fail(f"Certificate hypothesis fails ({cert.condition} > {cert.condition_bound})", EXIT_BAD_INPUT)

    config = SolveConfig(
        max_iter=settings.max_iter,
        residual_tol=settings.residual_tol,
        step_tol=settings.step_tol,
        feas_tol=settings.feas_tol,
        opt_tol=settings.opt_tol,
    )
    try:
        run = verify_certificate(
            problem, cert, rho_val, perturb, seed_val, config, workers=max(workers, settings.workers)
        )
    except RobustnessError as e:
        raise _fail(f"{e} (rho_max = {fmt(cert.rho_max)})", EXIT_RHO_TOO_LARGE) from e
    except BAD_INPUT as e:
        raise _fail(str(e), EXIT_BAD_INPUT) from e

    code = _verify_exit(run)
    report = RunReport(
        command="verify",
        problem=problem.name or source,
        flags={"family": cert.family, "seed": seed_val, "rho": rho_val, "perturb": perturb},
        certificate=cert.to_dict(),
        estimate=estimate.to_dict() if estimate else None,
        robustness=run.ball.to_dict() if run.ball else None,
        runs=[r.to_dict() for r in run.runs],
        verification={"passed": run.passed, "failed_starts": [r.label for r in run.runs if not r.passed]},
        exit_code=code,
        timing={"seconds": time.perf_counter() - started},
    )
    if json_out != "-":
        rprint(certificate_table(cert, estimate))
        rprint(matrix_table(run))
        for r in run.runs:
            for v in r.report.violations[:5]:
                rprint(f"[red]violation[/red] {r.label} {v.check} k={v.k}: {fmt(v.lhs)} > {fmt(v.rhs)}")
        if code == EXIT_OK:
            rprint(f"[green]All bounds hold[/green] ({cert.label}) on {len(run.runs)} start(s).")
        else:
            rprint(f"[red]Verification failed[/red] on {sum(not r.passed for r in run.runs)} start(s).")
    _emit(report, json_out)
    raise typer.Exit(code)


# -- catalog ------------------------------------------------------------------------------


@app.command("catalog")
def catalog_cmd(
    json_out: Optional[str] = typer.Option(None, "--json", help="Write the JSON report here ('-' for stdout)"),
):
    entries = catalog_entries()
    rows = []
    for e in entries:
        p = e.problem
        rows.append(
            {
                "name": e.name,
                "description": e.description,
                "n": p.n,
                "cone": p.cone.to_dict(),
                "x_tilde": [float(v) for v in p.x_tilde],
                "R": p.R,
                "expected": dict(p.expected),
            }
        )
    if json_out != "-":
        t = Table(title="Built-in problems")
        for col in ("name", "n", "p", "q", "R", "L", "gamma", "b", "description"):
            t.add_column(col)
        for r in rows:
            exp = r["expected"]
            t.add_row(
                r["name"],
                str(r["n"]),
                str(r["cone"]["p"]),
                str(r["cone"]["q"]),
                f"{r['R']:g}",
                f"{exp['L']:.6g}" if "L" in exp else "-",
                f"{exp['gamma']:.6g}" if "gamma" in exp else "-",
                f"{exp['b']:.6g}" if "b" in exp else "-",
                r["description"],
            )
        rprint(t)
    _emit(RunReport(command="catalog", problems=rows), json_out)
