"""Run configuration: flat ``section.key = value`` text files.

Lines starting with ``#`` and trailing ``# ...`` comments are ignored.
Every key must be listed in ``SCHEMA``; values are parsed and range
checked there, so a bad file fails before any work starts.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt(parse: Callable) -> Callable:
    def inner(text: str):
        return None if text.strip().lower() in ("", "none", "null") else parse(text)
    return inner


def _list(parse: Callable) -> Callable:
    def inner(text: str):
        return [parse(x) for x in text.split(",") if x.strip()]
    return inner


def _choice(*options: str) -> Callable:
    def inner(text: str):
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {t!r}")
        return t
    return inner


def _cell(text: str):
    parts = [int(x) for x in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected 'row,col', got {text!r}")
    return tuple(parts)


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _unit(x):
    return 0 < x <= 1


# key -> (parser, default, check, description)
SCHEMA: dict[str, tuple[Callable, Any, Callable | None, str]] = {
    "env.type": (_choice("four_rooms", "minipac"), "four_rooms", None, "environment"),
    "env.grid_size": (int, 11, lambda x: x >= 5, "Four Rooms side length"),
    "env.goal": (_opt(_cell), None, None, "Four Rooms goal cell 'row,col'"),
    "env.layout": (_opt(str), None, None, "MiniPac layout file (default board if unset)"),
    "env.scheme": (_choice("EAT", "HUNT"), "EAT", None, "MiniPac reward scheme"),
    "env.pill_duration": (int, 8, _pos, "turns the ghost stays edible"),
    "policy.kind": (_opt(_choice("value_iteration", "scripted", "file")), None, None,
                    "expert policy source (default: value_iteration / scripted for MiniPac)"),
    "policy.temperature": (_opt(float), None, _pos, "softmax temperature (default 0.1 / 0.25)"),
    "policy.discount": (float, 0.95, lambda x: 0 < x < 1, "value-iteration discount"),
    "policy.tolerance": (float, 1e-10, _pos, "value-iteration stopping residual"),
    "policy.path": (_opt(str), None, None, "policy JSON written by 'ssx train'"),
    "root.state": (str, "start", None, "'start', 'random' or an encoded state"),
    "root.min_ghost_distance": (int, 3, _nonneg, "for random roots"),
    "root.pill_eaten": (_opt(_bool), None, None, "for random roots"),
    "ssx.k": (int, 4, lambda x: 1 <= x <= 10, "number of meta-states (at most 10, one colour each)"),
    "ssx.eta": (float, 1.0, _nonneg, "out-path regulariser"),
    "ssx.eps_phi": (_opt(float), None, lambda x: x is None or x > 0, "clustering tolerance"),
    "ssx.restarts": (int, 5, lambda x: x >= 1, "clustering restarts"),
    "ssx.lambda": (_opt(float), None, _pos, "diversity weight (default 50 / 0.1 for MiniPac)"),
    "ssx.eps_g": (float, 0.1, _pos, "minimum marginal gain"),
    "ssx.min_gain_ratio": (float, 0.1, lambda x: 0 <= x < 1, "relative gain threshold"),
    "ssx.max_strategic_per_meta": (_opt(int), 2, lambda x: x is None or x >= 1,
                                   "cap on strategic states per meta-state"),
    "ssx.horizon": (_opt(int), None, lambda x: x is None or x >= 1,
                    "local approximation depth N (default: none / 6 for MiniPac)"),
    "ssx.sample_fraction": (float, 1.0, _unit, "fraction of out-path targets walked"),
    "ssx.seed": (int, 0, _nonneg, "clustering seed"),
    "ssx.normalize_counts": (_bool, True, None, "divide counts by |S|^2 in clustering"),
    "ssx.weighted_counts": (_bool, True, None, "weight out-paths by likelihood"),
    "eval.roots": (int, 10, _pos, "number of study roots"),
    "eval.root_source": (_choice("random", "trajectory"), "random", None,
                         "random boards, or boards along a seeded policy rollout"),
    "eval.fractions": (_list(float), [1.0, 0.5], lambda x: x and all(_unit(f) for f in x),
                       "sampling study fractions"),
    "eval.seeds": (_list(int), [0], lambda x: bool(x), "sampling study seeds"),
    "eval.horizons": (_list(int), [3, 4, 5, 6], lambda x: len(x) >= 2 and x == sorted(x),
                      "horizon study N values"),
    "eval.n_perturbations": (int, 10, _pos, "perturbations per root"),
    "eval.n_food_removed": (int, 3, _nonneg, "food pieces removed per perturbation"),
    "eval.n_max": (int, 8, lambda x: x >= 2, "growth study maximum N"),
    "eval.growth_roots": (int, 100, _pos, "roots averaged in the growth study"),
    "eval.k_values": (_list(int), [2, 3, 4, 5, 6, 7, 8],
                      lambda x: bool(x) and x == sorted(x), "k sweep values"),
    "render.samples": (int, 3, _nonneg, "member boards per MiniPac strip"),
    "render.cell": (int, 28, _pos, "cell size in pixels"),
    "output.dir": (_opt(str), None, None, "output directory (overridden by --out)"),
}


@dataclass
class RunConfig:
    values: dict[str, Any]
    source: str = "<defaults>"

    def __getitem__(self, key: str):
        return self.values[key]

    def section(self, name: str) -> dict[str, Any]:
        pre = name + "."
        return {k[len(pre):]: v for k, v in self.values.items() if k.startswith(pre)}

    def canonical(self) -> str:
        """Sorted ``key = value`` text of every resolved value."""
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in sorted(self.values.items()))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def with_overrides(self, **kv) -> "RunConfig":
        vals = dict(self.values)
        for k, v in kv.items():
            if k not in SCHEMA:
                raise ConfigError(f"unknown key {k!r}")
            vals[k] = v
        return RunConfig(vals, self.source)


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def defaults(env_type: str = "four_rooms") -> RunConfig:
    return parse_config(f"env.type = {env_type}\n", "<defaults>")


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    values = {k: spec[1] for k, spec in SCHEMA.items()}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: {key!r} given twice")
        seen.add(key)
        parse, _, check, _ = SCHEMA[key]
        try:
            parsed = parse(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
        if check is not None and parsed is not None and not check(parsed):
            raise ConfigError(f"{source}:{lineno}: {key} = {value} is out of range")
        values[key] = parsed
    cfg = RunConfig(values, source)
    _resolve(cfg)
    return cfg


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


# per-environment defaults for keys left unset
ENV_DEFAULTS = {
    "four_rooms": {"policy.kind": "value_iteration", "policy.temperature": 0.1,
                   "ssx.lambda": 50.0},
    "minipac": {"policy.kind": "scripted", "policy.temperature": 0.25, "ssx.lambda": 0.1,
                "ssx.horizon": 6},
}


def _resolve(cfg: RunConfig) -> None:
    for key, value in ENV_DEFAULTS[cfg["env.type"]].items():
        if cfg.values[key] is None:
            cfg.values[key] = value
    if cfg["env.type"] == "four_rooms" and cfg["policy.kind"] == "scripted":
        raise ConfigError("the scripted policy exists only for MiniPac")
    if cfg["policy.kind"] == "file" and not cfg["policy.path"]:
        raise ConfigError("policy.kind = file needs policy.path")


def reference() -> str:
    """Every key with its default, as a commented config file."""
    lines = []
    for key, (_, default, _, doc) in SCHEMA.items():
        lines.append(f"# {doc}")
        lines.append(f"{key} = {_fmt(default)}")
    return "\n".join(lines) + "\n"
