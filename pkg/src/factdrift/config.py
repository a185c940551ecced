"""Flat key-value configuration with typed accessors.

Format: one ``key = value`` per line, ``#`` comments, blank lines ignored.
Repeatable keys (``experiment``) accumulate. Secrets never live here; API
tokens come from environment variables.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
from datetime import date
from pathlib import Path

from .errors import ConfigError

_REPEATABLE = {"experiment"}

_KNOWN_KEYS = {
    "seed",
    "tokenizer",
    "filter_threshold",
    "classifier_backend",
    "classifier_url",
    "classifier_script",
    "classifier_max_in_flight",
    "chat_backend",
    "chat_url",
    "chat_model",
    "chat_temperature",
    "chat_max_tokens",
    "chat_script",
    "judge_backend",
    "judge_url",
    "judge_model",
    "judge_script",
    "template_dir",
    "max_attempts",
    "c_s",
    "c_o",
    "k1",
    "b",
    "k",
    "n",
    "decay",
    "decay_scale_days",
    "decay_at_scale",
    "decay_offset_days",
    "current_date",
    "clusters",
    "per_cluster",
    "experiment",
}

_DEFAULTS: dict[str, str] = {
    "seed": "0",
    "tokenizer": "default",
    "filter_threshold": "50",
    "classifier_backend": "keep_all",
    "classifier_max_in_flight": "4",
    "chat_backend": "offline",
    "chat_temperature": "0.3",
    "chat_max_tokens": "100",
    "judge_backend": "offline",
    "max_attempts": "3",
    "c_s": "256",
    "c_o": "32",
    "k1": "1.2",
    "b": "0.75",
    "k": "20",
    "n": "5",
    "decay": "true",
    "decay_scale_days": "365",
    "decay_at_scale": "0.5",
    "decay_offset_days": "0",
    "clusters": "10",
    "per_cluster": "1000",
}


@dataclass
class Config:
    values: dict[str, str] = dataclass_field(default_factory=dict)
    lists: dict[str, list[str]] = dataclass_field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: dict | None = None) -> "Config":
        """Parse a config file, apply flag overrides, and validate eagerly so
        bad settings fail before any stage runs."""
        cfg = cls()
        if path is not None:
            cfg._parse_file(Path(path))
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            cfg._set(key, str(value), where="override")
        cfg.validate()
        return cfg

    def _parse_file(self, path: Path) -> None:
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            self._set(key.strip(), value.strip(), where=f"{path}:{lineno}")

    def _set(self, key: str, value: str, where: str) -> None:
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"{where}: unknown config key {key!r}")
        if key in _REPEATABLE:
            self.lists.setdefault(key, []).append(value)
        else:
            self.values[key] = value

    def validate(self) -> None:
        self.get_int("seed")
        self.get_int("filter_threshold")
        self.get_int("classifier_max_in_flight")
        self.get_float("chat_temperature")
        self.get_int("chat_max_tokens")
        self.get_int("max_attempts")
        self.get_int("c_s")
        self.get_int("c_o")
        self.get_float("k1")
        self.get_float("b")
        self.get_int("k")
        self.get_int("n")
        self.get_bool("decay")
        self.get_float("decay_scale_days")
        self.get_float("decay_at_scale")
        self.get_float("decay_offset_days")
        self.get_int("clusters")
        self.get_int("per_cluster")
        if "current_date" in self.values:
            self.get_date("current_date")
        for entry in self.get_list("experiment"):
            parse_experiment_entry(entry, date(2000, 1, 1))
        for backend, allowed in (
            ("classifier_backend", ("keep_all", "http", "scripted")),
            ("chat_backend", ("offline", "http", "scripted")),
            ("judge_backend", ("offline", "http", "scripted")),
        ):
            if self.get_str(backend) not in allowed:
                raise ConfigError(
                    f"{backend} must be one of {allowed}, got {self.get_str(backend)!r}"
                )

    def _raw(self, key: str) -> str | None:
        if key in self.values:
            return self.values[key]
        return _DEFAULTS.get(key)

    def get_str(self, key: str, default: str | None = None) -> str | None:
        raw = self._raw(key)
        return raw if raw is not None else default

    def get_int(self, key: str) -> int:
        raw = self._raw(key)
        try:
            return int(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"config key {key!r} must be an integer, got {raw!r}") from None

    def get_float(self, key: str) -> float:
        raw = self._raw(key)
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"config key {key!r} must be a number, got {raw!r}") from None

    def get_bool(self, key: str) -> bool:
        raw = self._raw(key)
        if isinstance(raw, str) and raw.casefold() in ("true", "yes", "1", "on"):
            return True
        if isinstance(raw, str) and raw.casefold() in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"config key {key!r} must be a boolean, got {raw!r}")

    def get_date(self, key: str) -> date:
        raw = self._raw(key)
        try:
            return date.fromisoformat(raw)
        except (TypeError, ValueError):
            raise ConfigError(
                f"config key {key!r} must be a YYYY-MM-DD date, got {raw!r}"
            ) from None

    def get_list(self, key: str) -> list[str]:
        return list(self.lists.get(key, []))


def parse_experiment_entry(entry: str, current_date: date) -> dict:
    """Parse one ``experiment`` value: ``r=1,o=1,d=2,ordering=score_desc,mode=short``."""
    fields = {"r": 1, "o": 0, "d": 0, "ordering": "score_desc", "mode": "short"}
    for part in entry.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"bad experiment field {part!r} in {entry!r}")
        key, _, value = part.partition("=")
        key = key.strip()
        value = value.strip()
        if key in ("r", "o", "d"):
            try:
                fields[key] = int(value)
            except ValueError:
                raise ConfigError(f"experiment count {key}={value!r} is not an integer") from None
        elif key in ("ordering", "mode"):
            fields[key] = value
        else:
            raise ConfigError(f"unknown experiment field {key!r} in {entry!r}")
    return {
        "r_count": fields["r"],
        "o_count": fields["o"],
        "d_count": fields["d"],
        "ordering": fields["ordering"],
        "answer_mode": fields["mode"],
        "current_date": current_date,
    }
