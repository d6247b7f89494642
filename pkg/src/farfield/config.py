"""Run configuration: schema validation and merging with command-line flags.

Precedence is flags > config file > built-in defaults. A flag left at
``None`` defers to the config file.
"""

import json
from importlib import resources

import jsonschema

from .beamforming import BeamformerConfig
from .dereverb import WpeConfig
from .errors import ConfigError
from .pipeline import ChainConfig

DEFAULTS = {"seed": 0, "workers": 1, "profile": "train", "bootstrap": 1000,
            "sample_rate": 16000, "allow_rate": False, "encoding": "float32"}


def schema():
    text = resources.files("farfield").joinpath("run_config.schema.json").read_text()
    return json.loads(text)


def validate(cfg):
    try:
        jsonschema.validate(cfg, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid run config at {where}: {exc.message}") from None
    return cfg


def load(path):
    """Read and validate a run config; ``None`` gives an empty config."""
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc.msg})") from None
    return validate(cfg)


def setting(cfg, key, flag=None):
    if flag is not None:
        return flag
    return cfg.get(key, DEFAULTS.get(key))


def chain_config(cfg, **flags):
    """
    Build a ChainConfig from the ``chain`` section and flag overrides.

    Recognised flags: mask_source, order, reference, window_len, hop, mu,
    rank1, reference_channel, diagonal_loading, wpe_enabled, taps, delay,
    iterations, alpha, wpe_loading. ``None`` values are ignored.
    """
    section = dict(cfg.get("chain", {}))
    bf = dict(section.pop("beamformer", {}))
    wpe_present = "wpe" in section
    wpe = section.pop("wpe", {})
    flags = {k: v for k, v in flags.items() if v is not None}

    for key in ("mu", "rank1", "reference_channel", "diagonal_loading"):
        if key in flags:
            bf[key] = flags.pop(key)
    wpe_enabled = flags.pop("wpe_enabled", None)
    wpe_flags = {k: flags.pop(k) for k in ("taps", "delay", "iterations", "alpha") if k in flags}
    if "wpe_loading" in flags:
        wpe_flags["loading"] = flags.pop("wpe_loading")
    if wpe_enabled is None:
        wpe_enabled = not (wpe_present and wpe is None)
    wpe_cfg = None
    if wpe_enabled:
        wpe_cfg = WpeConfig(**{**(wpe or {}), **wpe_flags})
    section.update(flags)
    try:
        return ChainConfig(beamformer=BeamformerConfig(**bf), wpe=wpe_cfg, **section)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def wpe_config(cfg, **flags):
    chain = chain_config(cfg, wpe_enabled=True, **flags)
    return chain.wpe

