# -*- coding: utf-8 -*-
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from grok_lab.config_loader import discover_presets, open_config_json, preset_rel_path
from grok_lab.schemas import ExperimentConfig

# -----------------------------------------------------------------------------
# Preset names shipped under configs/presets/. Keep in sync with the JSON files.
PRESET_NAMES = (
    "zp-baseline-ln-lr1e-4",
    "zp-baseline-rms-lr1e-4",
    "zp-sphere-wd1-lr1e-4",
    "zp-sphere-wd0-lr1e-4",
    "zp-sphere-fourier-wd1-lr1e-4",
    "zp-sphere-fourier-wd0-lr1e-4",
    "zp-baseline-ln-lr6e-4",
    "zp-baseline-rms-lr6e-4",
    "zp-sphere-wd1-lr6e-4",
    "zp-sphere-wd0-lr6e-4",
    "zp-sphere-fourier-wd1-lr6e-4",
    "zp-sphere-fourier-wd0-lr6e-4",
    "zp-ln-cosine-unembed-lr1e-4",
    "zp-uniform-attn-ln",
    "zp-uniform-attn-sphere-wd1",
    "zp-uniform-attn-sphere-wd0",
    "s5-baseline-ln",
    "s5-baseline-rms",
    "s5-sphere-wd1",
    "s5-sphere-wd0",
)
# -----------------------------------------------------------------------------


def available_presets() -> List[str]:
    """Shipped presets plus any presets/*.json found under a user config root."""
    return sorted(set(PRESET_NAMES) | set(discover_presets()))


def preset_filename(name: str) -> str:
    # Keep preset selection strict so typos fail fast.
    known = available_presets()
    if name not in known:
        supported = ", ".join(known)
        raise ValueError(f"Unknown preset '{name}'. Supported: {supported}")
    return preset_rel_path(name)


def _deep_merge(a: Dict[str, Any], b: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(a)
    for k, v in b.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def load_global() -> Dict[str, Any]:
    return open_config_json("global.json")


def load_experiment_dict(source: str) -> Dict[str, Any]:
    """
    Load an experiment document and merge it over global.json's
    experiment_defaults. `source` is either a JSON file path or a preset name.
    """
    path = Path(source)
    if path.suffix == ".json" or path.exists():
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    else:
        doc = open_config_json(preset_filename(source))
    if not isinstance(doc, dict):
        raise ValueError(f"{source}: experiment config must be a JSON object")
    defaults = load_global().get("experiment_defaults", {})
    return _deep_merge(defaults, doc)


def load_experiment(source: str) -> ExperimentConfig:
    return ExperimentConfig.parse_obj(load_experiment_dict(source))


def format_validation_error(exc: ValidationError) -> List[str]:
    """One 'dotted.field.path: message' line per pydantic error."""
    lines = []
    for err in exc.errors():
        loc = ".".join(str(part) for part in err.get("loc", ()) if part != "__root__")
        lines.append(f"{loc or '<root>'}: {err.get('msg')}")
    return lines


def output_indent(cfg: Optional[dict] = None) -> Optional[int]:
    out_cfg = (cfg or {}).get("output", {})
    if not out_cfg.get("pretty", True):
        return None
    return int(out_cfg.get("indent", 2))


def default_jobs(cfg: Optional[dict] = None) -> int:
    return max(1, int((cfg or {}).get("sweep", {}).get("jobs", 1)))


def get_runs_root(experiment: ExperimentConfig, out: Optional[str] = None) -> Path:
    """
    Resolve the output directory for an experiment.
    Priority:
    1) explicit --out
    2) experiment.output_dir
    3) GROK_LAB_RUNS_ROOT/<name>
    4) ./runs/<name> under current working directory
    """
    if out:
        return Path(out)
    if experiment.output_dir:
        return Path(experiment.output_dir)
    env_root = os.environ.get("GROK_LAB_RUNS_ROOT")
    if env_root:
        return Path(env_root) / experiment.name
    return Path.cwd() / "runs" / experiment.name
