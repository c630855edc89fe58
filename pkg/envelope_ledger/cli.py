"""Operator surface: scenarios, audits, escape demos, tree evaluation, economics and games.

Exit codes: 0 success, 1 unexpected protocol rejection, 2 broken invariant,
3 bad input or precondition.
"""
import functools
import logging
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from pathlib import Path
from typing import Callable, List, Optional

import typer
from omegaconf import DictConfig
from pydantic import BaseModel, Field, ValidationError
from rich.console import Console
from rich.table import Table

from envelope_ledger import assumptions as assumption_ledger
from envelope_ledger.conditions import cond_hash, evaluate, gas_cost, leaf_count, lint, load_snapshot, load_tree
from envelope_ledger.config import TEMPLATES, build_template, configure_logging, load_config, resolve_scenario
from envelope_ledger.crypto_core import derive_address
from envelope_ledger.data import AUDIT_REPORT_SCHEMA, GAME_REPORT_SCHEMA, PPM, SUITE_ID, Record
from envelope_ledger.economics import (
    CostModel,
    EconomicsTable,
    GasEnvironment,
    break_even,
    economics_table,
    environments_from_config,
    format_usd,
    op_cost_usd,
)
from envelope_ledger.errors import ContractViolation, InputError, InvariantViolation, ProtocolRejection
from envelope_ledger.games import (
    ADVERSARIAL_GAMES,
    MUTANTS,
    STATISTICAL_GAMES,
    BlindingInversion,
    GameResult,
    StatisticalResult,
    observables_audit,
    run_eig,
    run_g_agent_key,
    run_g_encumber,
    run_g_fwdback,
    run_g_settle,
)
from envelope_ledger.ledger_models import (
    AblmAdapter,
    AccountClass,
    NceeVerdict,
    PslmAdapter,
    build_setup,
    ks_escape,
    ncee_audit,
    replay_trace,
)
from envelope_ledger.registry import AdminRegistry, EnvelopeRegistry, ManagedRegistry, PausableRegistry
from envelope_ledger.scenarios import ScenarioReport, require_clean, run_scenario

app = typer.Typer(add_completion=False, help="Non-custodial enforced encumbrance simulator.")
econ_app = typer.Typer(help="Break-even economics.")
app.add_typer(econ_app, name="econ")
console = Console()

SEED_OPTION = typer.Option(None, "--seed", envvar="ENVELOPE_SEED", help="Seed; defaults to the configured seed.")
REPORT_OPTION = typer.Option(None, "--report", help="Write a JSON report to this path.")
OVERRIDE_OPTION = typer.Option([], "--override", "-o", help="Hydra override, e.g. games.trials=100.")

AUDIT_MODELS = (
    "ablm",
    "ablm-eoa",
    "ablm-erc4337",
    "ablm-eip7702",
    "pslm",
    "pslm-timelock",
    "pslm-break-glass",
    "pslm-admin",
    "pslm-pausable",
    "pslm-managed",
)


class AuditReport(Record):
    schema_id: str = Field(AUDIT_REPORT_SCHEMA, alias="schema")
    suite: str = SUITE_ID
    verdicts: List[NceeVerdict]

    class Config:
        allow_population_by_field_name = True


class GamesReport(Record):
    schema_id: str = Field(GAME_REPORT_SCHEMA, alias="schema")
    suite: str = SUITE_ID
    game: str
    seed: int
    mutant: Optional[str] = None
    results: List[GameResult] = []
    statistical: List[StatisticalResult] = []

    class Config:
        allow_population_by_field_name = True


def _guarded(command: Callable) -> Callable:
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except InvariantViolation as e:
            console.print(f"[bold red]Invariant violated:[/bold red] {e}")
            raise typer.Exit(2) from e
        except (InputError, ContractViolation) as e:
            console.print(f"[bold red]Input error:[/bold red] {e}")
            raise typer.Exit(3) from e
        except ProtocolRejection as e:
            console.print(f"[bold red]{type(e).__name__}:[/bold red] {e}")
            raise typer.Exit(1) from e

    return wrapper


def _write_report(path: Optional[Path], report: BaseModel) -> None:
    if path is None:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.json(by_alias=True, indent=2))
    logging.info(f"Report written to {path}")


def _seed(cfg: DictConfig, seed: Optional[int]) -> int:
    return cfg.seed if seed is None else seed


@app.callback()
def main(verbose: bool = typer.Option(False, "--verbose", "-v", help="Log registry internals.")):
    configure_logging(logging.DEBUG if verbose else logging.INFO)


@app.command("run-scenario")
@_guarded
def run_scenario_command(
    path: Path = typer.Argument(..., help="Scenario file (JSON or YAML), or the name of one under scenario_dir."),
    template: Optional[str] = typer.Option(None, help=f"Deployment template: {', '.join(TEMPLATES)}."),
    seed: Optional[int] = SEED_OPTION,
    report: Optional[Path] = REPORT_OPTION,
    override: List[str] = OVERRIDE_OPTION,
):
    """Apply a scripted lifecycle to a fresh registry."""
    cfg = load_config(override)
    deployment = build_template(cfg, template or cfg.template)
    result = run_scenario(resolve_scenario(cfg, path), seed=seed, template=deployment, tree_depth=cfg.tree_depth)
    _render_scenario(result)
    _write_report(report, result)
    require_clean(result)
    if result.unexpected:
        first = result.unexpected[0]
        console.print(f"[red]step {first.index} ({first.op}) did not go as scripted[/red]")
        raise typer.Exit(1)


def _render_scenario(report: ScenarioReport) -> None:
    if report.escape is not None:
        _render_escape(report.escape)
        return
    table = Table(title=f"Scenario {report.scenario} (seed {report.seed})")
    for column in ("#", "at", "op", "outcome", "expected", "invariants"):
        table.add_column(column)
    for step in report.steps:
        outcome = "ok" if step.ok else step.error
        style = "green" if step.as_expected else "red"
        invariants = "pass" if not step.invariant_violations else "; ".join(step.invariant_violations)
        table.add_row(
            str(step.index), str(step.at), step.op, f"[{style}]{outcome}[/{style}]", step.expected or "ok", invariants
        )
    console.print(table)
    for label, status in report.envelopes.items():
        console.print(f"envelope [bold]{label}[/bold]: {status.value}")
    for address, amount in report.payouts.items():
        console.print(f"payout {address}: {amount}")
    console.print(f"final state digest {report.final_digest}")


@app.command("audit-ncee")
@_guarded
def audit_ncee(
    model: str = typer.Argument(..., help=f"One of: {', '.join(AUDIT_MODELS)}."),
    depth: Optional[int] = typer.Option(None, help="Search depth; defaults to audit.depth."),
    report: Optional[Path] = REPORT_OPTION,
    override: List[str] = OVERRIDE_OPTION,
):
    """Check self-custody, transition restriction, irrevocability and permissionless enforcement."""
    cfg = load_config(override)
    depth = cfg.audit.depth if depth is None else depth
    verdicts = [ncee_audit(adapter, depth) for adapter in _adapters(cfg, model)]
    for verdict in verdicts:
        _render_verdict(verdict)
    _write_report(report, AuditReport(verdicts=verdicts))


def _adapters(cfg: DictConfig, model: str):
    if model not in AUDIT_MODELS:
        raise InputError(f"unknown model {model!r}; choose from {', '.join(AUDIT_MODELS)}")
    if model == "ablm":
        return [AblmAdapter(account_class) for account_class in AccountClass]
    if model.startswith("ablm-"):
        return [AblmAdapter(AccountClass(model[len("ablm-") :]))]
    tree_depth = cfg.audit.tree_depth
    variant = model[len("pslm-") :] if model.startswith("pslm-") else "strict"

    def factory(template) -> EnvelopeRegistry:
        if variant == "admin":
            return AdminRegistry(
                admin=derive_address("registry-admin"), policy_disabled=True, template=template, tree_depth=tree_depth
            )
        if variant == "pausable":
            return PausableRegistry(
                pauser=derive_address("registry-pauser"), policy_disabled=True, template=template, tree_depth=tree_depth
            )
        if variant == "managed":
            return ManagedRegistry(
                manager=derive_address("registry-manager"),
                policy_disabled=True,
                template=template,
                tree_depth=tree_depth,
            )
        return EnvelopeRegistry(template=template, tree_depth=tree_depth)

    template = build_template(cfg, variant if variant in TEMPLATES else "strict")
    return [PslmAdapter(template, factory, seed=cfg.seed)]


def _render_verdict(verdict: NceeVerdict) -> None:
    table = Table(title=f"{verdict.mechanism} (depth {verdict.depth}, {verdict.explored_states} states)")
    table.add_column("property")
    table.add_column("verdict")
    table.add_column("witness / detail")
    for label, prop in (
        ("P1 self-custody", verdict.p1_self_custody),
        ("P2 transition restriction", verdict.p2_transition_restriction),
        ("P3 irrevocability", verdict.p3_irrevocability),
        ("P4 permissionless enforcement", verdict.p4_permissionless),
    ):
        shown = " -> ".join(prop.witness) if prop.witness else prop.detail
        table.add_row(label, "[green]holds[/green]" if prop.holds else "[red]fails[/red]", shown)
    console.print(table)


@app.command("ks-demo")
@_guarded
def ks_demo(
    account_class: AccountClass = typer.Argument(..., help="eoa, erc4337 or eip7702."),
    report: Optional[Path] = REPORT_OPTION,
):
    """Print an owner-only escape from an active restriction."""
    setup = build_setup(account_class, owner_sk=0xA11CE, balance=10**18, tokens={"USDC": 5_000 * 10**6})
    trace = ks_escape(setup)
    replay_trace(setup, trace)
    _render_escape(trace)
    _write_report(report, trace)


def _render_escape(trace) -> None:
    table = Table(title=f"Key-sovereignty escape: {trace.account_class.value}")
    table.add_column("#")
    table.add_column("transaction")
    table.add_column("signed by")
    table.add_column("writes")
    for index, step in enumerate(trace.steps):
        table.add_row(str(index), step.tx.kind, step.authorizer, ", ".join(step.writes))
    console.print(table)
    for outcome in trace.outcomes:
        console.print(
            f"{outcome.amount} {outcome.asset} now at {outcome.destination} "
            f"(in scope: {outcome.destination_in_scope}, restriction active: {outcome.restriction_active})"
        )


@app.command("eval-tree")
@_guarded
def eval_tree(
    tree_path: Path = typer.Argument(..., help="Condition tree file."),
    snapshot_path: Path = typer.Argument(..., help="Oracle snapshot file."),
):
    """Evaluate a condition tree against one oracle snapshot."""
    tree = load_tree(tree_path)
    snapshot = load_snapshot(snapshot_path)
    result = evaluate(tree, snapshot)
    console.print(f"cond_hash {cond_hash(tree).hex()}")
    console.print(f"{leaf_count(tree)} leaves, enforcement gas {gas_cost(tree):,}")
    console.print(f"condition at {snapshot.block_timestamp}: [bold]{'TRUE' if result else 'FALSE'}[/bold]")
    for warning in lint(tree):
        console.print(f"[yellow]{warning.code.value}[/yellow] {warning.path or ''} {warning.message}")


def _environments(cfg: DictConfig) -> List[GasEnvironment]:
    return environments_from_config(cfg.economics.environments, Decimal(str(cfg.economics.eth_price_usd)))


def _render_economics(table_model: EconomicsTable) -> None:
    table = Table(
        title=f"Break-even on the {table_model.basis} basis ({table_model.gas:,} gas, r = {table_model.r_custody})"
    )
    for column in ("environment", "gas price (gwei)", "cost (USD)", "break-even (USD)"):
        table.add_column(column)
    for row in table_model.rows:
        table.add_row(row.environment, str(row.gas_price_gwei), row.op_cost_usd, row.break_even_usd)
    console.print(table)


@app.command("econ-table")
@_guarded
def econ_table(
    r_custody_ppm: Optional[int] = typer.Option(
        None, help="Custody-risk rate in ppm; defaults to economics.r_custody_ppm."
    ),
    aggregated: bool = typer.Option(False, help="Use the amortized aggregated-verification cost."),
    report: Optional[Path] = REPORT_OPTION,
    override: List[str] = OVERRIDE_OPTION,
):
    """Break-even position size per gas environment."""
    cfg = load_config(override)
    ppm = cfg.economics.r_custody_ppm if r_custody_ppm is None else r_custody_ppm
    result = economics_table(CostModel(), _environments(cfg), Fraction(ppm, PPM), aggregated=aggregated)
    _render_economics(result)
    _write_report(report, result)


@econ_app.command("break-even")
@_guarded
def econ_break_even(
    gas_price_gwei: str = typer.Option(..., help="Gas price in gwei, e.g. 25 or 0.05."),
    eth_price_usd: str = typer.Option("2500", help="ETH price in USD."),
    r_custody_ppm: int = typer.Option(10_000, help="Custody-risk rate in ppm."),
    basis: str = typer.Option("create", help="create or aggregated."),
):
    """Break-even position size for one environment."""
    try:
        env = GasEnvironment(
            label="custom", gas_price_gwei=Decimal(gas_price_gwei), eth_price_usd=Decimal(eth_price_usd)
        )
    except (InvalidOperation, ValidationError) as e:
        raise InputError(f"bad price: {e}") from e
    model = CostModel()
    cost = op_cost_usd(model, env, basis)
    value = break_even(model, env, Fraction(r_custody_ppm, PPM), basis=basis)
    console.print(f"{basis} costs {format_usd(cost)}; break-even position {format_usd(value)}")


@app.command("games")
@_guarded
def games(
    game: str = typer.Argument(..., help="encumber, settle, agent, fwdback, eig or observables."),
    trials: Optional[int] = typer.Option(None, help="Trials per strategy; defaults from the configuration."),
    seed: Optional[int] = SEED_OPTION,
    mutant: Optional[str] = typer.Option(None, help=f"Run against a build missing one check: {', '.join(MUTANTS)}."),
    report: Optional[Path] = REPORT_OPTION,
    override: List[str] = OVERRIDE_OPTION,
):
    """Play the security games and count adversary wins."""
    cfg = load_config(override)
    seed = _seed(cfg, seed)
    if mutant is not None and mutant not in MUTANTS:
        raise InputError(f"unknown mutant {mutant!r}; choose from {', '.join(MUTANTS)}")
    pool_size = cfg.games.key_pool
    if game in ADVERSARIAL_GAMES:
        runner = {"encumber": run_g_encumber, "settle": run_g_settle, "agent": run_g_agent_key}[game]
        results = runner(
            trials=trials or cfg.games.trials,
            seed=seed,
            mutant=mutant,
            pool_size=pool_size,
            tree_depth=cfg.games.tree_depth,
        )
        _render_games(game, results)
        _write_report(report, GamesReport(game=game, seed=seed, mutant=mutant, results=results))
    elif game in STATISTICAL_GAMES:
        runner = run_g_fwdback if game == "fwdback" else run_eig
        n = trials or cfg.games.statistical_trials
        scored = [
            runner(trials=n, seed=seed, pool_size=pool_size),
            runner(BlindingInversion(), trials=n, seed=seed, pool_size=pool_size),
        ]
        _render_statistical(game, scored)
        _write_report(report, GamesReport(game=game, seed=seed, statistical=scored))
    elif game == "observables":
        audit = observables_audit(trials=trials or cfg.games.trials, seed=seed, pool_size=pool_size)
        console.print(f"adversary view fields: {', '.join(audit.view_fields)}")
        console.print(
            f"blinding hidden: {audit.blinding_hidden}; marker invariant under key substitution: {audit.sk_invariant}"
        )
        _write_report(report, audit)
    else:
        raise InputError(f"unknown game {game!r}")


def _render_games(game: str, results: List[GameResult]) -> None:
    table = Table(title=f"Game {game}")
    for column in ("strategy", "build", "trials", "wins"):
        table.add_column(column)
    for result in results:
        style = "red" if result.wins else "green"
        wins = f"[{style}]{result.wins}[/{style}]"
        table.add_row(result.strategy, result.mutant or "intact", str(result.trials), wins)
    console.print(table)
    for result in results:
        if result.win_traces:
            console.print(f"{result.strategy} first win: {' -> '.join(result.win_traces[0].steps)}")


def _render_statistical(game: str, scored: List[StatisticalResult]) -> None:
    table = Table(title=f"Game {game}")
    for column in ("distinguisher", "trials", "rate", "expected", "sigma", "band"):
        table.add_column(column)
    for result in scored:
        table.add_row(
            result.strategy,
            str(result.trials),
            f"{result.rate:.4f}",
            f"{result.expected_rate:.2f}",
            f"{result.sigma:.4f}",
            result.band,
        )
    console.print(table)


@app.command("assumptions")
def assumptions():
    """List the assumptions and how the simulator models each."""
    table = Table(title="Assumptions")
    for column in ("key", "kind", "statement", "modeled by", "post-quantum"):
        table.add_column(column)
    for entry in assumption_ledger.LEDGER:
        post_quantum = "yes" if entry.post_quantum else "no"
        table.add_row(entry.key, entry.kind.value, entry.statement, entry.modeled_by, post_quantum)
    console.print(table)
