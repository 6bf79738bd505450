"""
Config roots, highest priority first: the --config-root override,
$GROK_LAB_CONFIG_ROOT, then the packaged grok_lab/configs. A file missing
from one root falls through to the next, so a user root only needs the files
it changes (its own global.json, extra or replacement presets).
"""
import json
import os
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional

ENV_CONFIG_ROOT = "GROK_LAB_CONFIG_ROOT"
PRESETS_DIR = "presets"

CONFIG_ROOT_OVERRIDE: Optional[Path] = None


def set_config_root_override(path: Optional[Path]) -> None:
    global CONFIG_ROOT_OVERRIDE
    CONFIG_ROOT_OVERRIDE = path


def get_package_config_root() -> Path:
    return Path(resources.files("grok_lab.configs"))


def _env_config_root() -> Optional[Path]:
    env_root = os.environ.get(ENV_CONFIG_ROOT)
    if not env_root:
        return None
    root_path = Path(env_root)
    return root_path if root_path.is_dir() else None


def config_roots() -> List[Path]:
    roots = []
    if CONFIG_ROOT_OVERRIDE:
        roots.append(Path(CONFIG_ROOT_OVERRIDE))
    env_root = _env_config_root()
    if env_root:
        roots.append(env_root)
    roots.append(get_package_config_root())
    return roots


def get_config_path(rel_path: str) -> Path:
    for root in config_roots():
        candidate = root / rel_path
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"Config not found for relative path: {rel_path}")


def open_config_json(rel_path: str) -> dict:
    path = get_config_path(rel_path)
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def preset_rel_path(name: str) -> str:
    return f"{PRESETS_DIR}/{name}.json"


def discover_presets() -> Dict[str, Path]:
    """
    Preset name -> file for every presets/*.json under the active roots.
    A higher-priority root shadows a packaged preset of the same name.
    """
    found: Dict[str, Path] = {}
    for root in reversed(config_roots()):
        preset_dir = root / PRESETS_DIR
        if not preset_dir.is_dir():
            continue
        for path in sorted(preset_dir.glob("*.json")):
            found[path.stem] = path
    return found
