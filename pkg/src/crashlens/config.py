"""Run configuration: application package prefixes, rule sets, output limits."""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .trace import DEFAULT_NORMALIZATION_RULES, NormalizationRule, NormalizationRules


@dataclass(frozen=True)
class AppConfig:
    """Knobs for one analysis run.

    app_package_prefixes defines which packages count as system classes;
    everything else (JDK, frameworks, generated code) is ignored when ranking
    and when listing classes in summaries.
    """

    app_package_prefixes: tuple[str, ...]
    normalization_rules: NormalizationRules = DEFAULT_NORMALIZATION_RULES
    top_n_files: int = 5
    top_n_uris: int = 5
    top_n_users_per_uri: int = 5
    sample_trace_count: int = 3
    sample_crash_id_count: int = 10
    strict: bool = False

    def __post_init__(self):
        if not self.app_package_prefixes:
            raise ConfigError("app_package_prefixes must not be empty")
        if self.top_n_files < 1:
            raise ConfigError("top_n_files must be >= 1")
        for name in ("top_n_uris", "top_n_users_per_uri", "sample_trace_count",
                     "sample_crash_id_count"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")

    def is_app_package(self, package: str) -> bool:
        return any(
            package == prefix or package.startswith(prefix + ".")
            for prefix in self.app_package_prefixes
        )


_INT_KEYS = (
    "top_n_files",
    "top_n_uris",
    "top_n_users_per_uri",
    "sample_trace_count",
    "sample_crash_id_count",
)


def load_config(path: str | Path) -> AppConfig:
    """Read an AppConfig from a TOML file.

    Keys map one-to-one to AppConfig fields; normalization_rules is a list
    of {pattern, replacement} tables and replaces the defaults entirely when
    present.
    """
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return config_from_mapping(data, source=str(path))


def config_from_mapping(data: dict, source: str = "<mapping>") -> AppConfig:
    known = {"app_package_prefixes", "normalization_rules", "strict", *_INT_KEYS}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys in {source}: {sorted(unknown)}")

    prefixes = data.get("app_package_prefixes")
    if not isinstance(prefixes, list) or not all(isinstance(p, str) for p in prefixes):
        raise ConfigError(f"{source}: app_package_prefixes must be a list of strings")

    kwargs: dict = {"app_package_prefixes": tuple(prefixes)}
    if "normalization_rules" in data:
        rules = []
        for entry in data["normalization_rules"]:
            if not isinstance(entry, dict) or set(entry) != {"pattern", "replacement"}:
                raise ConfigError(
                    f"{source}: each normalization rule needs pattern and replacement"
                )
            rules.append(NormalizationRule(entry["pattern"], entry["replacement"]))
        kwargs["normalization_rules"] = tuple(rules)
    for key in _INT_KEYS:
        if key in data:
            if not isinstance(data[key], int) or isinstance(data[key], bool):
                raise ConfigError(f"{source}: {key} must be an integer")
            kwargs[key] = data[key]
    if "strict" in data:
        if not isinstance(data["strict"], bool):
            raise ConfigError(f"{source}: strict must be a boolean")
        kwargs["strict"] = data["strict"]
    return AppConfig(**kwargs)
