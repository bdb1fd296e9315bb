"""TOML run configuration, cache keys and atomic file output."""
from __future__ import annotations

import hashlib
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on the interpreter
    import tomli as tomllib

from .metrics import ExperimentConfig
from .presets import PresetError, make_system
from .prob import CoordinationSystem

RECORD_VERSION = 1
_SYSTEM_KEYS = ("c_prior", "a_given_c", "x_given_ac", "b_given_a", "y_given_bc", "x_size")
_CODE_KEYS = ("n", "k", "eps_vh", "eps_h", "M")
_RUN_KEYS = ("trials", "seed", "mode", "sidechannel", "repetition", "literal_step4", "max_seconds")
_RATE_KEYS = ("R_a", "R_o", "R_c", "rho1", "rho2")


class ConfigError(ValueError):
    pass


@dataclass
class RunManifest:
    path: Path | None
    cfg: ExperimentConfig
    system_spec: dict
    rates: dict | None = None
    outputs: dict[str, Path] = field(default_factory=dict)

    def system_record(self) -> dict:
        s = self.cfg.sys
        return {
            "spec": self.system_spec,
            "p_ac": s.p_ac.table.tolist(),
            "p_x_given_ac": s.p_x_given_ac.rows.tolist(),
            "p_b_given_a": s.p_b_given_a.rows.tolist(),
            "p_y_given_bc": s.p_y_given_bc.rows.tolist(),
        }

    def spectrum_key(self) -> str:
        c = self.cfg
        return _digest({"v": RECORD_VERSION, "sys": self.system_record(), "n": c.n, "M": c.M, "seed": c.seed})

    def sets_key(self) -> str:
        c = self.cfg
        return _digest({"spectrum": self.spectrum_key(), "eps_vh": c.eps_vh, "eps_h": c.eps_h, "k": c.k})


def _digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:20]


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _pick(section: dict, keys, name: str) -> dict:
    extra = set(section) - set(keys)
    if extra:
        raise ConfigError(f"unknown key(s) in [{name}]: {sorted(extra)}")
    return dict(section)


def build_system(spec: dict) -> CoordinationSystem:
    try:
        return make_system(**spec)
    except (PresetError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid [system]: {exc}") from exc


def load_config(path, overrides: dict | None = None) -> RunManifest:
    """Parse a config file; ``overrides`` (e.g. from CLI flags) win over file values."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return manifest_from_dict(data, overrides, path)


def manifest_from_dict(data: dict, overrides: dict | None = None, path=None) -> RunManifest:
    extra = set(data) - {"system", "code", "run", "rates"}
    if extra:
        raise ConfigError(f"unknown section(s): {sorted(extra)}")
    system_spec = _pick(data.get("system", {}), _SYSTEM_KEYS, "system")
    code = _pick(data.get("code", {}), _CODE_KEYS, "code")
    run = _pick(data.get("run", {}), _RUN_KEYS, "run")
    rates = data.get("rates")
    if rates is not None:
        rates = _pick(rates, _RATE_KEYS, "rates")
        missing = set(_RATE_KEYS) - set(rates)
        if missing:
            raise ConfigError(f"[rates] is missing {sorted(missing)}")
    if "n" not in code:
        raise ConfigError("[code] must set n")
    merged = {**code, **run, **{k: v for k, v in (overrides or {}).items() if v is not None}}
    sys_ = build_system(system_spec)
    try:
        cfg = ExperimentConfig(sys=sys_, **merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return RunManifest(Path(path) if path else None, cfg, system_spec, rates)


def with_overrides(man: RunManifest, **kw) -> RunManifest:
    return replace(man, cfg=replace(man.cfg, **{k: v for k, v in kw.items() if v is not None}))


def cache_dir() -> Path:
    root = os.environ.get("COORDSIM_CACHE_DIR")
    return Path(root) if root else Path.home() / ".cache" / "coordsim"


def atomic_write(path, text: str) -> Path:
    """Write ``text`` via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_record(path, kind: str, body: dict, provenance: dict) -> Path:
    rec = {"format": f"coordsim-{kind}", "version": RECORD_VERSION, "provenance": provenance, **body}
    return atomic_write(path, json.dumps(rec, sort_keys=True, indent=1) + "\n")


def read_record(path, kind: str) -> dict:
    with open(path) as fh:
        rec = json.load(fh)
    if rec.get("format") != f"coordsim-{kind}" or rec.get("version") != RECORD_VERSION:
        raise ValueError(f"{path} is not a version-{RECORD_VERSION} {kind} record")
    return rec
