"""Plain-text key-value run configuration.

Schema: one `key = value` pair per line, `#` starts a comment, blank lines
ignored. Keys mirror the CLI flags (either - or _ spelling):

    seed        int        base RNG seed
    dtype       f32|f64    array precision
    len         int        sequence length
    filter-len  int        filter tap count
    block-size  int        block size for the blocked paths
    width       int        channel count d
    group-size  int        channels per filter group
    ranks       int        simulated rank count
    scheme      str        cpsim scheme name
    layout      seq|zigzag sharding layout
    pipe        int        pipeline segments for a2a-pipe
    pattern     list       comma-separated variant tags, e.g. SE,LI
    depth       int        layout repeat count
    csv         path       output path

Command-line flags win over config values; config values win over defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, fields


class ConfigError(ValueError):
    """Malformed or unknown configuration content."""


def _parse_pattern(text: str) -> tuple:
    tags = tuple(t.strip().upper() for t in text.split(",") if t.strip())
    if not tags:
        raise ConfigError("pattern must list at least one variant tag")
    return tags


_LAYOUT_NAMES = {"seq": "sequential", "sequential": "sequential", "zigzag": "zigzag"}


def _parse_layout(text: str) -> str:
    if text not in _LAYOUT_NAMES:
        raise ConfigError(f"layout must be seq or zigzag, got {text!r}")
    return _LAYOUT_NAMES[text]


def _parse_dtype(text: str) -> str:
    if text not in ("f32", "f64"):
        raise ConfigError(f"dtype must be f32 or f64, got {text!r}")
    return text


@dataclass
class RunConfig:
    seed: int | None = None
    dtype: str | None = None
    len: int | None = None
    filter_len: int | None = None
    block_size: int | None = None
    width: int | None = None
    group_size: int | None = None
    ranks: int | None = None
    scheme: str | None = None
    layout: str | None = None
    pipe: int | None = None
    pattern: tuple | None = None
    depth: int | None = None
    csv: str | None = None


_PARSERS = {
    "seed": int,
    "dtype": _parse_dtype,
    "len": int,
    "filter_len": int,
    "block_size": int,
    "width": int,
    "group_size": int,
    "ranks": int,
    "scheme": str,
    "layout": _parse_layout,
    "pipe": int,
    "pattern": _parse_pattern,
    "depth": int,
    "csv": str,
}

assert set(_PARSERS) == {f.name for f in fields(RunConfig)}


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        norm = key.lower().replace("-", "_")
        if norm not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            setattr(cfg, norm, _PARSERS[norm](value))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def resolve(flag_value, config_value, default):
    """Flag beats config beats default."""
    if flag_value is not None:
        return flag_value
    if config_value is not None:
        return config_value
    return default
