import logging
from pathlib import Path
from typing import Sequence, Union

from hydra import compose, initialize_config_dir
from hydra.errors import HydraException
from omegaconf import DictConfig, OmegaConf
from omegaconf.errors import OmegaConfBaseException
from rich.logging import RichHandler

from envelope_ledger.errors import InputError
from envelope_ledger.registry import (
    BreakGlassTemplate,
    DeploymentTemplate,
    StrictTemplate,
    TimelockTemplate,
    signer_set,
)

PROJECT_ROOT = Path(__file__).resolve().parent.parent
CONFIG_DIR = PROJECT_ROOT / "configs"
CONFIG_NAME = "ledger"
TEMPLATES = ("strict", "timelock", "break-glass")


def configure_logging(level: int = logging.INFO) -> None:
    logging.basicConfig(
        format="%(message)s",
        level=level,
        datefmt="%Y-%m-%d %H:%M:%S",
        handlers=[RichHandler(rich_tracebacks=True)],
        force=True,
    )


def load_config(overrides: Sequence[str] = (), *, config_dir: Path = CONFIG_DIR) -> DictConfig:
    """Compose ``configs/ledger.yaml`` with Hydra-style ``key=value`` overrides."""
    try:
        with initialize_config_dir(version_base=None, config_dir=str(config_dir), job_name="envelope-ledger"):
            cfg = compose(config_name=CONFIG_NAME, overrides=list(overrides))
    except (HydraException, OmegaConfBaseException) as e:
        raise InputError(f"bad configuration: {e}") from e
    missing = sorted(OmegaConf.missing_keys(cfg))
    if missing:
        raise InputError(f"configuration leaves required value(s) unset: {', '.join(missing)}")
    return cfg


def resolve_scenario(cfg: DictConfig, name: Union[str, Path]) -> Path:
    """``name`` itself when it exists, otherwise a scenario of that name under ``scenario_dir``."""
    path = Path(name)
    if path.exists():
        return path
    directory = Path(cfg.scenario_dir)
    if not directory.is_absolute():
        directory = PROJECT_ROOT / directory
    for candidate in (directory / path, directory / f"{path}.json", directory / f"{path}.yaml"):
        if candidate.is_file():
            return candidate
    return path


def build_template(cfg: DictConfig, kind: str) -> DeploymentTemplate:
    if kind == "strict":
        return StrictTemplate()
    if kind == "timelock":
        return TimelockTemplate(
            signers=signer_set(cfg.timelock.signers, "timelock"),
            threshold=cfg.timelock.threshold,
            timelock_seconds=cfg.timelock.timelock_seconds,
        )
    if kind == "break-glass":
        return BreakGlassTemplate(
            signers=signer_set(cfg.break_glass.signers, "break-glass"),
            threshold=cfg.break_glass.threshold,
        )
    raise InputError(f"unknown deployment template {kind!r}; choose from {', '.join(TEMPLATES)}")
