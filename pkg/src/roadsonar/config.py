"""Run configuration: one JSON document of parameter blocks mirroring module defaults.

Flags of the form ``--set block.key=value`` override file values; ``value`` is
parsed as JSON and falls back to a plain string. Unknown blocks or keys are
rejected so a typo cannot silently fall back to a default.
"""

import copy
import json
from pathlib import Path

from ._validation import ParameterError
from .beamform import CFAR_GUARD, CFAR_MIN_FLOOR, CFAR_TRAIN, SPEED_OF_SOUND
from .evaluation import MIN_CLASS_COUNT, N_FOLDS, TEST_FRACTION
from .features import N_COMPONENTS, POOL_KERNEL, WHITEN_EPS
from .signal import BASEBAND_RATE
from .simulate import DAMAGES, MATERIALS, PDM_PEAK, RECORD_SAMPLES

DEFAULTS = {
    "seed": 0,
    "paths": {
        "dataset_dir": "data/recordings",
        "scape_dir": "data/scapes",
        "feature_dir": "data/features",
        "model_dir": "models",
        "output_dir": "results",
    },
    "simulate": {
        "materials": {m: 150 for m in MATERIALS},
        "damages": {d: 0 for d in DAMAGES},
        "noise_db": 20.0,
        "multi_damage_prob": 0.15,
        "frame_rate": 10.0,
        "n_samples": RECORD_SAMPLES,
        "pdm_peak": PDM_PEAK,
    },
    "chirp": {"f_start": 20e3, "f_end": 50e3, "duration": 2.5e-3, "sample_rate": BASEBAND_RATE},
    "geometry": {"seed": 0, "side": 0.08, "min_spacing": 0.008, "speed_of_sound": SPEED_OF_SOUND},
    "cfar": {"enabled": True, "guard": CFAR_GUARD, "train": CFAR_TRAIN, "min_floor": CFAR_MIN_FLOOR},
    "features": {"pool_kernel": POOL_KERNEL, "n_components": N_COMPONENTS, "eps": WHITEN_EPS},
    "split": {"n_folds": N_FOLDS, "test_fraction": TEST_FRACTION, "min_count": MIN_CLASS_COUNT},
    "models": {
        "enabled": ["logreg", "tree", "forest"],
        "logreg": {"C": 0.01, "class_weight": "balanced", "tol": 1e-6, "max_iter": 10_000},
        "tree": {"class_weight": "balanced"},
        "forest": {"n_estimators": 100, "max_features": "sqrt", "class_weight": "balanced"},
    },
    "experiment": {"task": "material", "n_repeats": 2, "fold": 0},
    "render": {"colormap": "heat"},
}

# config keys each subcommand reads, listed in its --help
KEYS_READ = {
    "simulate": ["seed", "paths.dataset_dir", "simulate.*", "chirp.*", "geometry.*"],
    "process": ["paths.dataset_dir", "paths.scape_dir", "chirp.*", "geometry.*", "cfar.*"],
    "featurize": [
        "seed", "paths.dataset_dir", "paths.scape_dir", "paths.feature_dir", "features.*",
        "split.*", "experiment.task", "experiment.fold",
    ],
    "split": ["seed", "paths.dataset_dir", "paths.output_dir", "split.*", "experiment.task"],
    "train": [
        "seed", "paths.dataset_dir", "paths.feature_dir", "paths.model_dir", "models.*",
        "split.min_count", "experiment.task",
    ],
    "evaluate": [
        "paths.dataset_dir", "paths.feature_dir", "paths.model_dir", "paths.output_dir",
        "models.enabled", "split.min_count", "experiment.task",
    ],
    "experiment": [
        "seed", "paths.dataset_dir", "paths.scape_dir", "paths.output_dir", "features.*",
        "split.*", "models.*", "experiment.task", "experiment.n_repeats",
    ],
    "render": ["render.colormap"],
}


def _merge(base, update, where=""):
    for key, value in update.items():
        path = f"{where}{key}"
        if key not in base:
            raise ParameterError(f"unknown config key {path!r}")
        if _free_form(path):
            if not isinstance(value, dict):
                raise ParameterError(f"config key {path!r} must be an object")
            base[key] = {**base[key], **value}
        elif isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ParameterError(f"config key {path!r} must be an object")
            _merge(base[key], value, path + ".")
        else:
            base[key] = value
    return base


def _free_form(path):
    # per-class count tables may name any class
    return path in ("simulate.materials", "simulate.damages")


def parse_override(text):
    """``"block.key=value"`` -> ``(["block", "key"], value)``."""
    if "=" not in text:
        raise ParameterError(f"override {text!r} is not of the form block.key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def load_config(path=None, overrides=()):
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise ParameterError(f"config file {path} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ParameterError(f"config file {path}: {exc}") from None
        _merge(cfg, doc)
    for text in overrides:
        keys, value = parse_override(text)
        nested = value
        for k in reversed(keys):
            nested = {k: nested}
        _merge(cfg, nested)
    if not isinstance(cfg["seed"], int):
        raise ParameterError("seed must be an integer")
    return cfg


def dump_config(cfg):
    return json.dumps(cfg, indent=1, sort_keys=True) + "\n"
