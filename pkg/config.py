import os
from pathlib import Path
from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from errors import ConfigurationError

API_KEY_ENV = "PSW_LLM_API_KEY"
DEFAULT_CONFIG_FILE = "psw.conf"


class Settings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    endpoint: str = "https://api.openai.com/v1"
    model_id: str = "gpt-4-0125-preview"
    temperature: float = Field(0.0, ge=0.0, le=2.0)
    max_depth: int = Field(64, ge=1, le=512)
    expansion_cap: int = Field(5_000_000, ge=1)
    repetitions: int = Field(5, ge=1)
    retry_attempts: int = Field(3, ge=1)
    retry_backoff_seconds: float = Field(1.0, ge=0.0)
    transcript_dir: str = "runs"
    fixture_dir: str = "fixtures"
    database_url: str = "sqlite:///./runs/psw.db"


def read_config_file(path: Union[str, Path]) -> dict:
    """Flat `key = value` lines; `#` starts a comment."""
    values = {}
    for number, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"{path}:{number}: expected 'key = value'")
        values[key.strip()] = value.strip().strip('"')
    return values


def load_settings(path: Optional[Union[str, Path]] = None, **overrides) -> Settings:
    if path is None and Path(DEFAULT_CONFIG_FILE).is_file():
        path = DEFAULT_CONFIG_FILE
    values = read_config_file(path) if path is not None else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return Settings(**values)
    except ValidationError as e:
        raise ConfigurationError(f"invalid configuration: {e.errors()[0]['loc'][0]}: {e.errors()[0]['msg']}") from e


def api_key() -> Optional[str]:
    return os.getenv(API_KEY_ENV) or None
