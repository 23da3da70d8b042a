import logging
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Dict, List

from pydantic import ValidationError

from src.domain.models.scenario_models import ScenarioSpec, find_line
from src.utils.exceptions import ScenarioNotFoundError, ScenarioParseError

logger = logging.getLogger(__name__)

BUILTIN_DIR = Path(__file__).resolve().parents[1] / "data" / "scenarios"
_TOML_LINE_RE = re.compile(r"at line (\d+)")


class ScenarioCatalog:
    def __init__(self, data_dir: Path = BUILTIN_DIR):
        self._data_dir = Path(data_dir)

    def _builtin_files(self) -> Dict[str, Path]:
        return {path.stem: path for path in sorted(self._data_dir.glob("*.toml"))}

    def names(self) -> List[str]:
        """Names of the shipped scenarios."""
        return list(self._builtin_files())

    def describe(self) -> Dict[str, str]:
        return {name: self.load(name).description for name in self.names()}

    def resolve(self, identifier: str) -> Path:
        """A path to an existing file wins over a builtin of the same name."""
        candidate = Path(identifier)
        if candidate.is_file():
            return candidate
        builtin = self._builtin_files().get(identifier)
        if builtin is None:
            raise ScenarioNotFoundError(identifier)
        return builtin

    def load(self, identifier: str) -> ScenarioSpec:
        path = self.resolve(identifier)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ScenarioNotFoundError(f"{identifier} ({e.strerror})") from e
        return parse_scenario(text, default_name=path.stem)


def parse_scenario(text: str, default_name: str = "scenario") -> ScenarioSpec:
    """Parses scenario text; errors carry the offending line when it can be located."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        match = _TOML_LINE_RE.search(str(e))
        raise ScenarioParseError(str(e), int(match.group(1)) if match else None) from e
    data.setdefault("name", default_name)
    try:
        return ScenarioSpec(**data, source=text)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        key = next((part for part in reversed(first["loc"]) if isinstance(part, str)), None)
        line = find_line(text, key) if key else None
        raise ScenarioParseError(f"{location}: {first['msg']}", line) from e


# Single instance used by the CLI
scenario_catalog = ScenarioCatalog()
