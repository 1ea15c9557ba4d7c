"""Key-value configuration files.

The file is INI-style with a single ``[simulation]`` section. Keys follow the
usual parameter names (case matters: ``N`` is the grid side, ``n`` the agent
count). Keys that are experimental factors accept comma-separated levels::

    [simulation]
    N = 50
    n = 4
    r = 2
    T = 200
    k = 2, 3, 4
    k_msg = 5
    w_max = 0.8
    theta = 0.20
    p_base = 0.0, 0.1, 0.3
    ell = 0, 1, 3
    episodes = 200
    seed = 0
    epsilon = 0.1
    miss_log_decrement = 2.0
    hit_log_increment = 20.0
    c1_boost = 4.0
    protocols = C0, C1, C2, C3
"""

from __future__ import annotations

import configparser
from pathlib import Path
from typing import Any

SECTION = "simulation"

_SCALARS = {
    "N": int, "n": int, "r": int, "T": int, "k_msg": int, "w_max": float, "theta": float,
    "episodes": int, "seed": int, "epsilon": float, "miss_log_decrement": float,
    "hit_log_increment": float, "c1_boost": float, "workers": int,
}
_LISTS = {"k": int, "p_base": float, "ell": int, "protocols": str}


class ConfigError(ValueError):
    pass


def parse_config(text: str, source: str = "<string>") -> dict[str, Any]:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep N and n apart
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}") from e
    if not cp.has_section(SECTION):
        raise ConfigError(f"{source}: missing [{SECTION}] section")
    out: dict[str, Any] = {}
    for key, raw in cp.items(SECTION):
        try:
            if key in _SCALARS:
                out[key] = _SCALARS[key](raw.strip())
            elif key in _LISTS:
                out[key] = [_LISTS[key](x.strip()) for x in raw.split(",") if x.strip()]
            else:
                raise ConfigError(f"{source}: unknown key {key!r}")
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"{source}: bad value for {key!r}: {raw!r}") from e
    return out


def load_config(path) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    return parse_config(text, str(path))
