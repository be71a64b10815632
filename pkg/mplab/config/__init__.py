import os
import re
import tomllib

import msgspec
from platformdirs import user_config_dir

from mplab.errors import ConfigError, MissingInputError

from .validations import (  # noqa: F401
    Adam,
    AugmentPolicy,
    BeamConfig,
    Cfg,
    Constant,
    Datagen,
    EncoderConfig,
    LanguageModel,
    Paths,
    Sgd,
    SplitSizes,
    TrainConfig,
    Warmup,
)

APPNAME = "mplab"

root_path = os.path.dirname(os.path.dirname(os.path.dirname(__file__)))


def get_user_cfg_path():
    return os.path.join(user_config_dir(APPNAME), "config.toml")


def get_default_config_path():
    return os.path.join(root_path, "data", "config.default.toml")


def current_version():
    """The newest version listed in data/version.py."""
    with open(os.path.join(root_path, "data", "version.py"), encoding="utf-8") as f:
        match = re.search(r'__version__\s*=\s*"([^"]+)"', f.read())
    return match.group(1) if match else "unknown"


def find_config_path(explicit=None):
    """Explicit path, then ./config.toml in the repo root, then the user config dir, then the shipped default."""
    if explicit is not None:
        if not os.path.isfile(explicit):
            raise MissingInputError(explicit, "config file")
        return explicit

    # You can put a config.toml in the root directory for development purposes
    for candidate in (os.path.join(root_path, "config.toml"), get_user_cfg_path(), get_default_config_path()):
        if os.path.exists(candidate):
            return candidate
    return None


def _parse_value(raw):
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def apply_overrides(raw_cfg, overrides):
    """Apply ``section.key=value`` strings to a decoded config dict, in order."""
    for override in overrides:
        key, sep, value = override.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {override!r} is not of the form section.key=value")
        *parents, leaf = key.strip().split(".")
        node = raw_cfg
        for part in parents:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {override!r}: {part} is not a section")
        node[leaf] = _parse_value(value.strip())
    return raw_cfg


def _decode(raw_cfg, source):
    try:
        return msgspec.convert(raw_cfg, type=Cfg)
    except msgspec.ValidationError as e:
        raise ConfigError(f"{source}: {e}") from e


def _parse_config(config_path):
    with open(config_path, "rb") as f:
        try:
            return tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{config_path}: {e}") from e


def load_config(config_path=None, overrides=(), seed=None, workdir=None):
    path = find_config_path(config_path)
    raw_cfg = _parse_config(path) if path else {}
    apply_overrides(raw_cfg, overrides)
    if seed is not None:
        raw_cfg.setdefault("train", {})["seed"] = seed
        raw_cfg.setdefault("datagen", {})["base_seed"] = seed
    if workdir is not None:
        raw_cfg.setdefault("paths", {})["workdir"] = workdir
    return _decode(raw_cfg, path or "<defaults>")


def setup_config(ctx_obj):
    """Build the run-config from the command group's global options."""
    return load_config(
        ctx_obj.get("config_path"),
        ctx_obj.get("overrides", ()),
        seed=ctx_obj.get("seed"),
        workdir=ctx_obj.get("workdir"),
    )


def _drop_unset(node):
    # TOML has no null; unset optional fields are simply absent
    if isinstance(node, dict):
        return {k: _drop_unset(v) for k, v in node.items() if v is not None}
    return node


def dump_config(cfg):
    return msgspec.toml.encode(_drop_unset(msgspec.to_builtins(cfg))).decode()


def parse_config_text(text):
    try:
        return _decode(tomllib.loads(text), "<string>")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(str(e)) from e


def replace(cfg, section, **changes):
    """Copy of ``cfg`` with fields of one section replaced, validated again."""
    raw_cfg = msgspec.to_builtins(cfg)
    raw_cfg[section].update(changes)
    return _decode(raw_cfg, "<replace>")
