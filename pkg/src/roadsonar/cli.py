"""``roadsonar`` command line: simulate, process, featurize, split, train, evaluate, experiment, render.

Every subcommand takes ``--config FILE`` (JSON) and repeated ``--set block.key=value``
overrides. ``ROADSONAR_THREADS`` caps the BLAS/FFT thread pools.
"""

import argparse
import json
import logging
import os
import sys
import warnings
from collections import Counter
from pathlib import Path

import numpy as np

from ._validation import DegenerateInputError, ParameterError
from .beamform import (
    ArrayGeometry,
    default_geometry,
    read_energyscape,
    write_energyscape,
    write_energyscape_csv,
)
from .config import DEFAULTS, KEYS_READ, dump_config, load_config
from .evaluation import evaluate, split_dataset, youden_thresholds
from .experiment import build_model, run_experiment, task_labels
from .features import ScapeStore, VectorPipeline, subset
from .frontend import CfarParams, FrontEnd
from .ml import load_model, save_model
from .signal import ChirpSpec, generate_chirp, read_pdm
from .simulate import MANIFEST_NAME, DatasetManifest, DatasetSpec, synth_dataset

log = logging.getLogger("roadsonar")

THREADS_ENV = "ROADSONAR_THREADS"
SCAPE_SUFFIX = ".scape"
PLAN_NAME = "fold_plan.json"
FEATURES_NAME = "features.npz"
PIPELINE_NAME = "vector_pipeline.vpm"

# piecewise-linear colour ramp for ``render``: value in [0, 1] -> RGB
COLORMAPS = {
    "heat": [(0.0, (0, 0, 0)), (1 / 3, (255, 0, 0)), (2 / 3, (255, 255, 0)), (1.0, (255, 255, 255))],
    "gray": [(0.0, (0, 0, 0)), (1.0, (255, 255, 255))],
}


class CommandError(Exception):
    """Failure reported to the user as a one-line diagnostic and exit status 1."""


# helpers ----------------------------------------------------------------------


def _atomic_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _atomic_npz(path, **arrays):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp.npz")
    np.savez(tmp, **arrays)
    tmp.replace(path)


def _geometry(cfg):
    g = cfg["geometry"]
    geom = default_geometry(g["seed"], g["side"], g["min_spacing"])
    return ArrayGeometry(geom.positions, g["speed_of_sound"])


def _chirp(cfg):
    return ChirpSpec(**cfg["chirp"]).validate()


def _manifest(cfg):
    path = Path(cfg["paths"]["dataset_dir"]) / MANIFEST_NAME
    if not path.exists():
        raise CommandError(f"no dataset manifest at {path}; run 'roadsonar simulate' first")
    return DatasetManifest.read(path)


def _scape_path(cfg, entry):
    return Path(cfg["paths"]["scape_dir"]) / (Path(entry.path).stem + SCAPE_SUFFIX)


def _scape_store(cfg, manifest):
    paths = [_scape_path(cfg, e) for e in manifest.entries]
    missing = [p for p in paths if not p.exists()]
    if missing:
        raise CommandError(
            f"{len(missing)} energyscape files missing (first: {missing[0]}); run 'roadsonar process'"
        )
    return ScapeStore(paths)


def _labels(cfg, manifest):
    return task_labels(manifest, cfg["experiment"]["task"], cfg["split"]["min_count"])


def _plan(cfg, Y):
    s = cfg["split"]
    return split_dataset(Y, cfg["seed"], s["n_folds"], s["test_fraction"])


def _model_params(cfg, name):
    return dict(cfg["models"].get(name, {}))


# subcommands ------------------------------------------------------------------


def cmd_simulate(cfg, args):
    s = cfg["simulate"]
    spec = DatasetSpec(
        materials=dict(s["materials"]),
        damages=dict(s["damages"]),
        seed=cfg["seed"],
        noise_db=float(s["noise_db"]),
        multi_damage_prob=float(s["multi_damage_prob"]),
        frame_rate=float(s["frame_rate"]),
        n_samples=int(s["n_samples"]),
    )
    out = Path(cfg["paths"]["dataset_dir"])

    def progress(i, n):
        log.info("rendered %d/%d", i, n)

    try:
        manifest = synth_dataset(spec, out, _geometry(cfg), generate_chirp(_chirp(cfg)), progress)
    except OSError as exc:
        raise CommandError(str(exc)) from None
    counts = Counter(lab for e in manifest.entries for lab in e.labels)
    print(f"{len(manifest.entries)} recordings written to {out}")
    width = max(len(c) for c in counts)
    for name in manifest.class_names:
        print(f"  {name:<{width}} {counts[name]:5d} {'#' * max(1, counts[name] // 10)}")
    return 0


def cmd_process(cfg, args):
    manifest = _manifest(cfg)
    c = cfg["cfar"]
    fe = FrontEnd(
        _geometry(cfg),
        _chirp(cfg),
        CfarParams(int(c["guard"]), int(c["train"]), float(c["min_floor"])),
        cleanup=bool(c["enabled"]),
    )
    out_dir = Path(cfg["paths"]["scape_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = []
    n = len(manifest.entries)
    for i, entry in enumerate(manifest.entries):
        src = manifest.resolve(entry)
        try:
            scape = fe(read_pdm(src))
        except (ParameterError, DegenerateInputError, OSError, ValueError) as exc:
            failures.append((str(src), str(exc)))
            log.warning("skipping %s: %s", src, exc)
            continue
        write_energyscape(_scape_path(cfg, entry), scape)
        log.info("[%d/%d] %s -> %s", i + 1, n, src.name, _scape_path(cfg, entry).name)
    done = n - len(failures)
    print(f"{done}/{n} energyscapes written to {out_dir}")
    if failures:
        listing = "; ".join(f"{p} ({why})" for p, why in failures)
        warnings.warn(f"{len(failures)} recordings failed: {listing}", RuntimeWarning, stacklevel=1)
        return 1 if done == 0 else 3
    return 0


def cmd_split(cfg, args):
    manifest = _manifest(cfg)
    labels = _labels(cfg, manifest)
    plan = _plan(cfg, labels.Y)
    path = Path(cfg["paths"]["output_dir"]) / PLAN_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    plan.save(path)
    sizes = [len(v) for _, v in plan.folds]
    print(f"test {len(plan.test)}, validation sizes {sizes}; plan written to {path}")
    return 0


def cmd_featurize(cfg, args):
    manifest = _manifest(cfg)
    labels = _labels(cfg, manifest)
    store = _scape_store(cfg, manifest)
    plan = _plan(cfg, labels.Y)
    k = int(cfg["experiment"]["fold"])
    if not 0 <= k < len(plan.folds):
        raise CommandError(f"experiment.fold={k} outside 0..{len(plan.folds) - 1}")
    train, val = plan.folds[k]
    f = cfg["features"]
    pipe = VectorPipeline(int(f["pool_kernel"]), int(f["n_components"]), float(f["eps"]))
    with warnings.catch_warnings():
        warnings.simplefilter("always", RuntimeWarning)
        pipe.fit(subset(store, train))
    X = pipe.transform(store)
    out = Path(cfg["paths"]["feature_dir"])
    out.mkdir(parents=True, exist_ok=True)
    pipe.save(out / PIPELINE_NAME)
    _atomic_npz(
        out / FEATURES_NAME,
        X=X,
        Y=labels.Y,
        class_names=np.array(labels.class_names),
        train=train,
        validation=val,
        test=plan.test,
    )
    print(f"{X.shape[0]} x {X.shape[1]} features (fold {k}) written to {out}")
    return 0


def _load_features(cfg):
    path = Path(cfg["paths"]["feature_dir"]) / FEATURES_NAME
    if not path.exists():
        raise CommandError(f"no features at {path}; run 'roadsonar featurize' first")
    with np.load(path) as d:
        return {k: d[k] for k in d.files}


def cmd_train(cfg, args):
    d = _load_features(cfg)
    names = [str(c) for c in d["class_names"]]
    X, Y, train, val = d["X"], d["Y"], d["train"], d["validation"]
    out = Path(cfg["paths"]["model_dir"])
    out.mkdir(parents=True, exist_ok=True)
    for name in cfg["models"]["enabled"]:
        model = build_model(name, _model_params(cfg, name), cfg["seed"], names).fit(X[train], Y[train])
        model.set_thresholds(youden_thresholds(model.predict_proba(X[val]), Y[val], names))
        save_model(model, out / f"{name}.npz")
        print(f"{name}: trained on {len(train)} samples, thresholds {np.round(model.thresholds_, 4).tolist()}")
    return 0


def cmd_evaluate(cfg, args):
    d = _load_features(cfg)
    names = [str(c) for c in d["class_names"]]
    X, Y = d["X"], d["Y"]
    results = {}
    for name in cfg["models"]["enabled"]:
        path = Path(cfg["paths"]["model_dir"]) / f"{name}.npz"
        if not path.exists():
            raise CommandError(f"no trained model at {path}; run 'roadsonar train' first")
        model = load_model(path)
        results[name] = {
            split: evaluate(Y[d[split]], model.predict_proba(X[d[split]]), model.thresholds_, names).to_json()
            for split in ("train", "validation", "test")
        }
        r = results[name]
        print(
            f"{name}: F1 train {r['train']['f1_weighted']:.4f} "
            f"validation {r['validation']['f1_weighted']:.4f} test {r['test']['f1_weighted']:.4f}"
        )
    _atomic_text(Path(cfg["paths"]["output_dir"]) / "evaluation.json", json.dumps(results, indent=1) + "\n")
    return 0


def cmd_experiment(cfg, args):
    manifest = _manifest(cfg)
    labels = _labels(cfg, manifest)
    store = _scape_store(cfg, manifest)
    f = cfg["features"]
    models = {name: _model_params(cfg, name) for name in cfg["models"]["enabled"]}
    result = run_experiment(
        store,
        labels.Y,
        labels.class_names,
        task=cfg["experiment"]["task"],
        seed=cfg["seed"],
        n_repeats=int(cfg["experiment"]["n_repeats"]),
        n_folds=int(cfg["split"]["n_folds"]),
        test_fraction=float(cfg["split"]["test_fraction"]),
        models=models,
        pipeline_params={"pool_kernel": int(f["pool_kernel"]), "n_components": int(f["n_components"]), "eps": float(f["eps"])},
        progress=lambda r, k: log.info("repeat %d fold %d finished", r, k),
    )
    out = Path(cfg["paths"]["output_dir"])
    result.write(out)
    print(result.table(), end="")
    if not result.runs:
        raise CommandError("every fold was skipped as degenerate")
    return 0


def apply_colormap(values, name="heat"):
    """Min-max normalise ``values`` and map them through the piecewise-linear ramp ``name``.

    A constant matrix maps to the ramp's first colour.
    """
    if name not in COLORMAPS:
        raise ParameterError(f"unknown colormap {name!r}; expected one of {sorted(COLORMAPS)}")
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    t = (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)
    stops = np.array([s for s, _ in COLORMAPS[name]])
    colours = np.array([c for _, c in COLORMAPS[name]], dtype=float)
    rgb = np.stack([np.interp(t, stops, colours[:, ch]) for ch in range(3)], axis=-1)
    return np.floor(rgb + 0.5).astype(np.uint8)


def write_ppm(path, rgb):
    """Binary portable pixmap (P6), one pixel per matrix cell, row 0 at the top."""
    h, w, _ = rgb.shape
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(rgb, dtype=np.uint8).tobytes())
    tmp.replace(path)


def cmd_render(cfg, args):
    try:
        scape = read_energyscape(args.scape)
    except (OSError, ParameterError, ValueError) as exc:
        raise CommandError(f"cannot read energyscape {args.scape}: {exc}") from None
    out = Path(args.image)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_ppm(out, apply_colormap(scape.values, cfg["render"]["colormap"]))
    csv_path = out.with_suffix(".csv")
    tmp = csv_path.with_name(csv_path.name + ".tmp")
    write_energyscape_csv(tmp, scape)
    tmp.replace(csv_path)
    print(f"{scape.shape[0]} x {scape.shape[1]} heatmap written to {out} and {csv_path}")
    return 0


COMMANDS = {
    "simulate": (cmd_simulate, "render a synthetic dataset of PDM recordings and a manifest"),
    "process": (cmd_process, "decode, matched-filter, beamform, envelope and clean up every recording"),
    "featurize": (cmd_featurize, "fit the vector pipeline on one fold's training part and transform all samples"),
    "split": (cmd_split, "write the test / k-fold plan as JSON"),
    "train": (cmd_train, "train the enabled models and calibrate Youden thresholds on validation"),
    "evaluate": (cmd_evaluate, "score trained models on train, validation and test"),
    "experiment": (cmd_experiment, "full repeated cross-validation protocol with aggregate tables"),
    "render": (cmd_render, "write an energyscape as a PPM heatmap plus CSV"),
}


def _expand_keys(patterns):
    keys = []
    for pat in patterns:
        if pat.endswith(".*"):
            block = pat[:-2]
            keys += [f"{block}.{k}" for k in DEFAULTS[block]]
        else:
            keys.append(pat)
    return keys


def build_parser():
    parser = argparse.ArgumentParser(prog="roadsonar", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, summary) in COMMANDS.items():
        keys = "\n".join(f"  {k}" for k in _expand_keys(KEYS_READ[name]))
        p = sub.add_parser(
            name,
            help=summary,
            description=summary,
            epilog=f"config keys read:\n{keys}",
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="BLOCK.KEY=VALUE",
            help="override one config value (JSON-parsed, repeatable)",
        )
        p.add_argument("--dump-config", action="store_true", help="print the resolved config and exit")
        if name == "render":
            p.add_argument("scape", type=Path, help="energyscape file")
            p.add_argument("image", type=Path, help="output .ppm path; the CSV goes next to it")
    return parser


def _thread_limit():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise CommandError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise CommandError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    logging.captureWarnings(True)
    try:
        cfg = load_config(args.config, args.overrides)
        if args.dump_config:
            print(dump_config(cfg), end="")
            return 0
        func = COMMANDS[args.command][0]
        n_threads = _thread_limit()
        if n_threads is None:
            return func(cfg, args)
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=n_threads):
            return func(cfg, args)
    except (CommandError, ParameterError, DegenerateInputError) as exc:
        print(f"roadsonar {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
