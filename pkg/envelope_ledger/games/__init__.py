from typing import Dict, Tuple

from envelope_ledger.games import agent, encumber, settle
from envelope_ledger.games.agent import run_g_agent_key
from envelope_ledger.games.encumber import run_g_encumber
from envelope_ledger.games.harness import (
    MUTANTS,
    GameResult,
    GameWorld,
    StatisticalResult,
    Strategy,
    WinTrace,
    build_registry,
    key_pool,
    run_strategy,
)
from envelope_ledger.games.privacy import (
    AdversaryView,
    BlindingInversion,
    ObservablesAudit,
    RecomputeDistinguisher,
    observables_audit,
    run_eig,
    run_g_fwdback,
)
from envelope_ledger.games.settle import run_g_settle

ADVERSARIAL_GAMES: Dict[str, Tuple[Strategy, ...]] = {
    encumber.GAME: encumber.STRATEGIES,
    settle.GAME: settle.STRATEGIES,
    agent.GAME: agent.STRATEGIES,
}
STATISTICAL_GAMES = ("fwdback", "eig")


def detection_map() -> Dict[Tuple[str, str], str]:
    """(game, strategy) -> the mutant build that strategy must win against."""
    return {
        (game, strategy.name): strategy.detects
        for game, strategies in ADVERSARIAL_GAMES.items()
        for strategy in strategies
        if strategy.detects is not None
    }
