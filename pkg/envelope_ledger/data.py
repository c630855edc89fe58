import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Type, TypeVar, Union

import yaml
from pydantic import BaseModel, ValidationError

from envelope_ledger.crypto_core import DEFAULT_SUITE, FieldElement
from envelope_ledger.errors import InputError

PPM = 1_000_000
SECONDS_PER_YEAR = 31_536_000
DAY = 86_400

SCENARIO_SCHEMA = "envelope-scenario/v1"
REPORT_SCHEMA = "envelope-report/v1"
SNAPSHOT_SCHEMA = "envelope-registry-snapshot/v1"
TREE_SCHEMA = "condition-tree/v1"
GAME_REPORT_SCHEMA = "envelope-games/v1"
AUDIT_REPORT_SCHEMA = "envelope-audit/v1"

SUITE_ID = DEFAULT_SUITE.identifier

M = TypeVar("M", bound=BaseModel)


class Record(BaseModel):
    """Immutable record whose field elements serialize as 0x-prefixed hex."""

    class Config:
        allow_mutation = False
        json_encoders = {FieldElement: FieldElement.hex}


def load_document(path: Union[str, Path]) -> Any:
    """Read a JSON or YAML document; the suffix decides the parser."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    try:
        with open(path) as f:
            if path.suffix.lower() == ".json":
                return json.load(f)
            return yaml.safe_load(f)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise InputError(f"cannot parse {path}: {e}") from e


def parse_model(model: Type[M], document: Any, *, source: str = "document") -> M:
    try:
        return model.parse_obj(document)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise InputError(f"{first['msg']} ({len(e.errors())} error(s))", location=f"{source}:{location}") from e


def jsonable(model: BaseModel) -> Dict[str, Any]:
    return json.loads(model.json())


def canonical_digest(model: BaseModel) -> str:
    """SHA-256 over the model's sorted-key JSON rendering."""
    payload = json.dumps(jsonable(model), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()
