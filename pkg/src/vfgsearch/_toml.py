"""Minimal TOML reader for the flat config files this tool consumes
(scalar values, one-line arrays, [section] tables). Python 3.10 has no
tomllib and the deployment environment provides no TOML package."""

from __future__ import annotations


class TomlError(ValueError):
    pass


def _parse_scalar(text: str, line_no: int):
    text = text.strip()
    if not text:
        raise TomlError(f"line {line_no}: empty value")
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_scalar(part, line_no) for part in inner.split(",")]
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if text.startswith("'") and text.endswith("'") and len(text) >= 2:
        return text[1:-1]
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    raise TomlError(f"line {line_no}: cannot parse value {text!r}")


def loads(text: str) -> dict:
    root: dict = {}
    table = root
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if not name:
                raise TomlError(f"line {line_no}: empty table name")
            table = root.setdefault(name, {})
            continue
        if "=" not in line:
            raise TomlError(f"line {line_no}: expected key = value")
        key, _, value = line.partition("=")
        # strip trailing comments outside strings
        if "#" in value and '"' not in value and "'" not in value:
            value = value.split("#", 1)[0]
        table[key.strip()] = _parse_scalar(value, line_no)
    return root


def load(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
