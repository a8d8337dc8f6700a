"""Command-line surface: project, zeroshot, fewshot, eval, reproduce.

Exit codes: 0 success, 2 input error, 3 missing artifact, 4 config error,
5 data insufficiency. Every report is JSON with a ``config`` echo block
sufficient to re-run the command; binary artifacts are NCFS / NCEM / NCAD.
"""

from __future__ import annotations

import argparse
import dataclasses
import itertools
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import adapter as adapter_mod
from . import errors as err
from .embeddings import EmbeddingSetManifest, load_matrix
from .events import parse_aedat2, parse_csv_events, parse_nmnist_bin
from .fusion import FusionConfig, classify_fused, evaluate
from .projection import ProjectionConfig, project, write_framestack

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_MISSING = 3
EXIT_CONFIG = 4
EXIT_INSUFFICIENT = 5

_DATASET_PATTERNS = {"nmnist": "*.bin", "cifar10dvs": "*.aedat", "csv": "*.csv"}

# Published accuracies (%) this harness compares against, by (dataset, setting).
REFERENCE_ACCURACY = {
    ("nmnist", "zero-shot"): 45.41,
    ("nmnist", "16-shot"): 90.40,
    ("cifar10dvs", "zero-shot"): 25.31,
    ("cifar10dvs", "16-shot"): 60.72,
}

BRIDGE_TEXT_CMD = "spikeshot-bridge encode-text --classes <classes.txt> --out <text.ncem>"
BRIDGE_FRAMES_CMD = (
    "spikeshot-bridge encode-frames-batch --manifest {manifest} --out-dir <embeddings-dir>"
)


@dataclass
class RunConfig:
    """Resolved invocation options, echoed into every report."""

    command: str
    dataset_root: str | None = None
    kind: str | None = None
    timesteps: int | None = None
    window_policy: str | None = None
    overwrite_policy: str | None = None
    alphas: str | list[float] | None = None
    logit_scale: float | None = None
    normalize: bool | None = None
    shots: int | None = None
    learning_rate: float | None = None
    epochs: int | None = None
    patience: int | None = None
    bottleneck: int | None = None
    residual_ratio: float | None = None
    seed: int | None = None
    output: str | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if v is not None}


class CliError(Exception):
    """Operator-facing failure with an explicit exit code."""

    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path: Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


def _load_config_file(path: str | None) -> dict[str, str]:
    """Plain key=value lines; '#' starts a comment. Flags override these."""
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise CliError(f"config file not found: {p}", EXIT_MISSING)
    cfg: dict[str, str] = {}
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{p}:{lineno}: expected key=value", EXIT_CONFIG)
        key, value = line.split("=", 1)
        cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


def _cast_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _resolve(args: argparse.Namespace, key: str, default, cast=str):
    """Option precedence: explicit flag > config file > default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    file_cfg = getattr(args, "_file_cfg", {})
    if key in file_cfg:
        try:
            return cast(file_cfg[key])
        except ValueError as exc:
            raise CliError(f"config file option {key}: {exc}", EXIT_CONFIG) from None
    return default


def _require_file(path: str | Path, what: str, hint: str | None = None) -> Path:
    p = Path(path)
    if not p.exists():
        message = f"missing {what}: {p}"
        if hint:
            message += f"\n  produce it with: {hint}"
        raise CliError(message, EXIT_MISSING)
    return p


def _write_report(report: dict, out: str | None) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if out:
        _atomic_write_text(Path(out), text + "\n")
    print(text)


# ---------------------------------------------------------------------------
# project


def _parse_recording(path: Path, kind: str, on_bit_value: int):
    data = path.read_bytes()
    if kind == "nmnist":
        return parse_nmnist_bin(data)
    if kind == "cifar10dvs":
        return parse_aedat2(data, on_bit_value=on_bit_value)
    return parse_csv_events(data.decode("utf-8"), *_csv_dims(path))


def _csv_dims(path: Path) -> tuple[int, int]:
    """CSV recordings carry their sensor size in a sidecar 'WxH' dims file."""
    sidecar = path.parent / "dims.txt"
    if sidecar.exists():
        w, h = sidecar.read_text().strip().split("x")
        return int(w), int(h)
    return 128, 128


def cmd_project(args: argparse.Namespace) -> int:
    root = Path(args.dataset_root)
    if not root.is_dir():
        raise CliError(f"dataset root is not a readable directory: {root}", EXIT_INPUT)
    kind = _resolve(args, "kind", "csv")
    if kind not in _DATASET_PATTERNS:
        raise CliError(f"unknown dataset kind {kind!r}", EXIT_CONFIG)
    timesteps = _resolve(args, "timesteps", 4, int)
    window_policy = _resolve(args, "window_policy", "equal-duration")
    overwrite_policy = _resolve(args, "overwrite_policy", "last-event-wins")
    workers = _resolve(args, "workers", 1, int)
    on_bit = _resolve(args, "aedat_on_bit", 0, int)
    out_dir = Path(args.out)

    try:
        proj_cfg = ProjectionConfig(timesteps, window_policy, overwrite_policy)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None

    files = sorted(root.glob(f"*/{_DATASET_PATTERNS[kind]}"))
    if not files:
        raise CliError(
            f"no {_DATASET_PATTERNS[kind]} recordings under {root}/<class>/", EXIT_INPUT
        )
    class_names = sorted({p.parent.name for p in files})
    class_index = {name: i for i, name in enumerate(class_names)}

    written: list[Path] = []

    def process(path: Path) -> dict:
        stream = _parse_recording(path, kind, on_bit)
        stack = project(stream, proj_cfg)
        sample_id = f"{path.parent.name}__{path.stem}"
        out_path = out_dir / f"{sample_id}.ncfs"
        _atomic_write_bytes(out_path, write_framestack(stack))
        written.append(out_path)
        return {
            "id": sample_id,
            "file": out_path.name,
            "label": class_index[path.parent.name],
        }

    try:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                samples = list(pool.map(process, files))
        else:
            samples = [process(p) for p in files]
    except err.SpikeshotError as exc:
        for p in written:
            p.unlink(missing_ok=True)
        raise CliError(f"projection failed: {exc}", EXIT_INPUT) from None

    samples.sort(key=lambda s: s["id"])
    config = RunConfig(
        command="project",
        dataset_root=str(root),
        kind=kind,
        timesteps=timesteps,
        window_policy=str(proj_cfg.window_policy.value),
        overwrite_policy=str(proj_cfg.overwrite_policy.value),
        output=str(out_dir),
    )
    manifest = {
        "dataset": root.name,
        "kind": kind,
        "class_names": class_names,
        "timesteps": timesteps,
        "samples": samples,
        "config": config.to_dict(),
    }
    manifest_path = out_dir / "manifest.json"
    _atomic_write_text(manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(samples)} frame stacks + {manifest_path}")
    print("next: " + BRIDGE_FRAMES_CMD.format(manifest=manifest_path))
    return EXIT_OK


# ---------------------------------------------------------------------------
# zeroshot


def _simplex_grid(timesteps: int, step: float = 0.25):
    """All non-negative weight vectors on the unit simplex with the given step."""
    units = round(1.0 / step)
    for counts in itertools.product(range(units + 1), repeat=timesteps):
        if sum(counts) == units:
            yield tuple(c * step for c in counts)


def _resolve_alphas(
    spec: str,
    timesteps: int,
    stacks: np.ndarray | None,
    labels: np.ndarray | None,
    weights: np.ndarray | None,
    seed: int,
    val_fraction: float,
) -> tuple[np.ndarray, str]:
    if spec == "uniform":
        return np.full(timesteps, 1.0 / timesteps), "uniform"
    if spec != "grid":
        try:
            alphas = np.asarray([float(v) for v in spec.split(",")], dtype=np.float64)
        except ValueError:
            raise CliError(f"cannot parse alphas {spec!r}", EXIT_CONFIG) from None
        if alphas.size != timesteps:
            raise CliError(
                f"{alphas.size} alphas given but manifest has {timesteps} timesteps",
                EXIT_CONFIG,
            )
        return alphas, "explicit"
    # Grid search: coarse simplex sweep scored on a seeded validation subset.
    if timesteps > 4:
        raise CliError("alpha grid search supports at most 4 timesteps", EXIT_CONFIG)
    rng = np.random.default_rng(seed)
    n = stacks.shape[0]
    n_val = max(1, int(round(val_fraction * n)))
    val_idx = rng.choice(n, size=n_val, replace=False)
    per_timestep = stacks[val_idx] @ weights.T  # (n_val, T, K)
    val_labels = labels[val_idx]
    best_alpha, best_acc = None, -1.0
    for candidate in _simplex_grid(timesteps):
        alphas = np.asarray(candidate)
        logits = np.einsum("t,ntk->nk", alphas, per_timestep)
        acc = float((logits.argmax(axis=1) == val_labels).mean())
        if acc > best_acc:
            best_alpha, best_acc = alphas, acc
    return best_alpha, f"grid(best val acc {best_acc:.4f} on {n_val} samples)"


def _load_embedding_set(
    manifest_path: Path, normalize: bool
) -> tuple[EmbeddingSetManifest, np.ndarray, np.ndarray]:
    manifest = EmbeddingSetManifest.load(manifest_path)
    root = manifest_path.parent
    stacks = []
    labels = []
    for rec in manifest.samples:
        _require_file(root / rec.path, f"visual embeddings for sample {rec.sample_id!r}")
        stacks.append(manifest.load_sample(root, rec, normalize=normalize).values)
        labels.append(rec.label)
    if not stacks:
        raise CliError(f"manifest {manifest_path} lists no samples", EXIT_INPUT)
    return manifest, np.stack(stacks).astype(np.float64), np.asarray(labels, dtype=np.int64)


def _write_predictions_jsonl(
    path: Path, manifest: EmbeddingSetManifest, predictions, include_probabilities: bool
) -> None:
    lines = []
    for rec, pred in zip(manifest.samples, predictions):
        k = pred.probabilities.size
        row = {"id": rec.sample_id, "argmax": pred.argmax, "top5": pred.top_k(min(5, k))}
        if include_probabilities:
            row["probabilities"] = [float(p) for p in pred.probabilities]
        lines.append(json.dumps(row, sort_keys=True))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def cmd_zeroshot(args: argparse.Namespace) -> int:
    text_path = _require_file(
        _resolve(args, "text_embeddings", "text.ncem"),
        "text embeddings (NCEM)",
        hint=BRIDGE_TEXT_CMD,
    )
    manifest_path = _require_file(
        args.manifest, "embedding manifest", hint=BRIDGE_FRAMES_CMD.format(manifest="<manifest>")
    )
    normalize = not _resolve(args, "no_normalize", False, _cast_bool)
    logit_scale = _resolve(args, "logit_scale", 100.0, float)
    alpha_spec = _resolve(args, "alphas", "uniform")
    seed = _resolve(args, "seed", 0, int)
    val_fraction = _resolve(args, "val_fraction", 0.5, float)

    weights = load_matrix(text_path, normalize=normalize, expect_role="text")
    manifest, stacks, labels = _load_embedding_set(manifest_path, normalize)
    if weights.cols != manifest.cols:
        raise CliError(
            f"text embedding dim {weights.cols} != manifest dim {manifest.cols}", EXIT_INPUT
        )

    alphas, alpha_note = _resolve_alphas(
        alpha_spec, manifest.timesteps,
        stacks, labels, weights.values.astype(np.float64), seed, val_fraction,
    )
    try:
        fusion_cfg = FusionConfig(alphas, logit_scale)
    except err.AllZeroWeights as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None

    workers = _resolve(args, "workers", 1, int)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            predictions = list(pool.map(lambda f: classify_fused(weights, f, fusion_cfg), stacks))
    else:
        predictions = [classify_fused(weights, f, fusion_cfg) for f in stacks]
    result = evaluate(predictions, labels.tolist(), num_classes=len(manifest.class_names))

    if args.predictions:
        _write_predictions_jsonl(
            Path(args.predictions), manifest, predictions, bool(args.save_probabilities)
        )

    config = RunConfig(
        command="zeroshot",
        alphas=[float(a) for a in alphas],
        logit_scale=logit_scale,
        normalize=normalize,
        seed=seed,
        output=args.report,
    )
    report = {
        "dataset": manifest.dataset,
        "samples": len(manifest.samples),
        "alpha_selection": alpha_note,
        "config": config.to_dict(),
        **result.to_dict(),
    }
    _write_report(report, args.report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# fewshot


def _accuracy_with_params(weights, stacks, labels, params, fusion_cfg):
    preds = [
        adapter_mod.classify_adapted(weights, f, params, fusion_cfg) for f in stacks
    ]
    return evaluate(preds, labels.tolist(), num_classes=weights.rows), preds


def cmd_fewshot(args: argparse.Namespace) -> int:
    text_path = _require_file(
        _resolve(args, "text_embeddings", "text.ncem"), "text embeddings (NCEM)",
        hint=BRIDGE_TEXT_CMD,
    )
    train_path = _require_file(args.train_manifest, "training embedding manifest")
    test_path = _require_file(args.test_manifest, "test embedding manifest")
    normalize = not _resolve(args, "no_normalize", False, _cast_bool)
    shots = _resolve(args, "shots", 16, int)
    seed = _resolve(args, "seed", 0, int)
    logit_scale = _resolve(args, "logit_scale", 100.0, float)
    hyper = adapter_mod.TrainingConfig(
        learning_rate=_resolve(args, "learning_rate", 1e-3, float),
        epochs=_resolve(args, "epochs", 200, int),
        patience=_resolve(args, "patience", 20, int),
        seed=seed,
        bottleneck=_resolve(args, "bottleneck", None, int),
        residual_ratio=_resolve(args, "residual_ratio", 0.2, float),
        detach_reset=_resolve(args, "detach_reset", False, _cast_bool),
        logit_scale=logit_scale,
    )

    weights = load_matrix(text_path, normalize=normalize, expect_role="text")
    train_manifest = EmbeddingSetManifest.load(train_path)
    test_manifest, test_stacks, test_labels = _load_embedding_set(test_path, normalize)
    fusion_cfg = FusionConfig.uniform(test_manifest.timesteps, logit_scale)

    zero_preds = [classify_fused(weights, f, fusion_cfg) for f in test_stacks]
    zero_result = evaluate(zero_preds, test_labels.tolist(), num_classes=weights.rows)

    curve: list[dict] = []
    if shots == 0:
        # No training requested: emit a pure-bypass checkpoint so the adapter
        # path is exactly the fused zero-shot path.
        params = adapter_mod.AdapterParams.initialize(
            weights.cols, bottleneck=hyper.bottleneck, residual_ratio=0.0,
            lif=hyper.lif, seed=seed,
        )
        adapted_result, adapted_preds = _accuracy_with_params(
            weights, test_stacks, test_labels, params, fusion_cfg
        )
    else:
        try:
            params = adapter_mod.train_few_shot(
                train_manifest, weights, shots, hyper,
                root=str(train_path.parent), normalize=normalize,
                on_epoch=curve.append,
            )
        except err.InsufficientSamples as exc:
            raise CliError(str(exc), EXIT_INSUFFICIENT) from None
        adapted_result, adapted_preds = _accuracy_with_params(
            weights, test_stacks, test_labels, params, fusion_cfg
        )

    bypass_params = dataclasses.replace(params, residual_ratio=0.0)
    bypass_result, bypass_preds = _accuracy_with_params(
        weights, test_stacks, test_labels, bypass_params, fusion_cfg
    )
    bypass_matches = [p.argmax for p in bypass_preds] == [p.argmax for p in zero_preds]

    checkpoint = Path(args.checkpoint)
    _atomic_write_bytes(checkpoint, adapter_mod.write_ncad(params))

    config = RunConfig(
        command="fewshot",
        shots=shots,
        seed=seed,
        logit_scale=logit_scale,
        normalize=normalize,
        learning_rate=hyper.learning_rate,
        epochs=hyper.epochs,
        patience=hyper.patience,
        bottleneck=params.bottleneck,
        residual_ratio=hyper.residual_ratio if shots else 0.0,
        output=str(checkpoint),
    )
    report = {
        "dataset": test_manifest.dataset,
        "zero_shot_accuracy": zero_result.accuracy,
        "adapted_accuracy": adapted_result.accuracy,
        "bypass_accuracy": bypass_result.accuracy,
        "bypass_equals_zero_shot": bypass_matches,
        "per_class_accuracy": adapted_result.to_dict()["per_class_accuracy"],
        "confusion": adapted_result.confusion.tolist(),
        "training_curve": curve,
        "checkpoint": str(checkpoint),
        "config": config.to_dict(),
    }
    _write_report(report, args.report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args: argparse.Namespace) -> int:
    pred_path = _require_file(args.predictions, "predictions JSONL")
    manifest_path = _require_file(args.manifest, "embedding manifest")
    manifest = EmbeddingSetManifest.load(manifest_path)
    by_id = {rec.sample_id: rec.label for rec in manifest.samples}

    chosen: list[int] = []
    labels: list[int] = []
    for lineno, line in enumerate(pred_path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        row = json.loads(line)
        if row["id"] not in by_id:
            raise CliError(
                f"{pred_path}:{lineno}: sample {row['id']!r} not in manifest", EXIT_INPUT
            )
        chosen.append(int(row["argmax"]))
        labels.append(by_id[row["id"]])
    try:
        result = evaluate(chosen, labels, num_classes=len(manifest.class_names))
    except (err.LengthMismatch, err.EmptyEvaluation) as exc:
        raise CliError(str(exc), EXIT_INPUT) from None

    config = RunConfig(command="eval", output=args.report)
    report = {"dataset": manifest.dataset, "config": config.to_dict(), **result.to_dict()}
    _write_report(report, args.report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# reproduce


def cmd_reproduce(args: argparse.Namespace) -> int:
    assets = Path(args.assets)
    seed = _resolve(args, "seed", 0, int)
    tolerance = _resolve(args, "tolerance", 5.0, float)
    datasets = ["nmnist", "cifar10dvs"]

    missing: list[str] = []
    for ds in datasets:
        for rel in (f"{ds}/text.ncem", f"{ds}/train/manifest.json", f"{ds}/test/manifest.json"):
            if not (assets / rel).exists():
                missing.append(str(assets / rel))
    if missing:
        print("missing assets:", file=sys.stderr)
        for m in missing:
            print(f"  {m}", file=sys.stderr)
        print(
            "produce them with the bridge:\n"
            f"  {BRIDGE_TEXT_CMD}\n"
            f"  {BRIDGE_FRAMES_CMD.format(manifest='<projection manifest>')}",
            file=sys.stderr,
        )
        return EXIT_MISSING

    rows = []
    for ds in datasets:
        weights = load_matrix(assets / ds / "text.ncem", expect_role="text")
        _, test_stacks, test_labels = _load_embedding_set(
            assets / ds / "test" / "manifest.json", True
        )
        train_manifest = EmbeddingSetManifest.load(assets / ds / "train" / "manifest.json")
        fusion_cfg = FusionConfig.uniform(test_stacks.shape[1])

        zero_preds = [classify_fused(weights, f, fusion_cfg) for f in test_stacks]
        zero_acc = evaluate(zero_preds, test_labels.tolist(), num_classes=weights.rows).accuracy

        hyper = adapter_mod.TrainingConfig(seed=seed)
        params = adapter_mod.train_few_shot(
            train_manifest, weights, 16, hyper, root=str(assets / ds / "train")
        )
        few_result, _ = _accuracy_with_params(
            weights, test_stacks, test_labels, params, fusion_cfg
        )

        for setting, measured in (("zero-shot", zero_acc), ("16-shot", few_result.accuracy)):
            reference = REFERENCE_ACCURACY[(ds, setting)]
            delta = measured * 100 - reference
            rows.append(
                {
                    "dataset": ds,
                    "setting": setting,
                    "reference_percent": reference,
                    "measured_percent": round(measured * 100, 2),
                    "delta_percent": round(delta, 2),
                    "within_tolerance": abs(delta) <= tolerance,
                }
            )

    print(f"{'dataset':<12} {'setting':<10} {'reference':>9} {'measured':>9} {'delta':>7}  status")
    for r in rows:
        status = "PASS" if r["within_tolerance"] else "DELTA"
        print(
            f"{r['dataset']:<12} {r['setting']:<10} {r['reference_percent']:>8.2f}% "
            f"{r['measured_percent']:>8.2f}% {r['delta_percent']:>+6.2f}%  {status}"
        )
    config = RunConfig(command="reproduce", seed=seed, output=args.report)
    _write_report({"rows": rows, "tolerance_percent": tolerance, "config": config.to_dict()},
                  args.report)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikeshot",
        description="Zero-shot / few-shot classification of event-camera recordings",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser):
        p.add_argument("--config", help="key=value config file (flags take precedence)")
        p.add_argument("--seed", type=int, help="RNG seed (default 0)")

    p = sub.add_parser("project", help="convert recordings to NCFS frame stacks")
    p.add_argument("dataset_root", help="directory of <class>/<recording> files")
    p.add_argument("--kind", choices=sorted(_DATASET_PATTERNS), help="dataset format (default csv)")
    p.add_argument("--timesteps", "-T", type=int, help="frames per recording (default 4)")
    p.add_argument("--window-policy", choices=["equal-duration", "equal-count"])
    p.add_argument("--overwrite-policy", choices=["last-event-wins", "on-dominates"])
    p.add_argument("--aedat-on-bit", type=int, choices=[0, 1],
                   help="address bit value meaning ON (default 0)")
    p.add_argument("--workers", type=int, help="parallel recordings (default 1)")
    p.add_argument("--out", required=True, help="output directory")
    common(p)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("zeroshot", help="fused zero-shot classification from embeddings")
    p.add_argument("--text-embeddings", help="class text NCEM (default text.ncem)")
    p.add_argument("--manifest", required=True, help="embedding manifest JSON")
    p.add_argument("--workers", type=int, help="parallel sample classification (default 1)")
    p.add_argument("--alphas", help="'uniform', comma list, or 'grid' (default uniform)")
    p.add_argument("--val-fraction", type=float, help="validation share for grid search")
    p.add_argument("--logit-scale", type=float, help="softmax temperature (default 100)")
    p.add_argument("--no-normalize", action="store_const", const=True,
                   help="skip row normalization at load")
    p.add_argument("--predictions", help="write per-sample JSONL here")
    p.add_argument("--save-probabilities", action="store_true",
                   help="include probability vectors in the JSONL")
    p.add_argument("--report", help="write the JSON report here (always printed)")
    common(p)
    p.set_defaults(func=cmd_zeroshot)

    p = sub.add_parser("fewshot", help="train the spiking adapter on a few-shot split")
    p.add_argument("--text-embeddings", help="class text NCEM (default text.ncem)")
    p.add_argument("--train-manifest", required=True)
    p.add_argument("--test-manifest", required=True)
    p.add_argument("--shots", type=int, help="examples per class (default 16)")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--bottleneck", type=int, help="hidden width (default C/4)")
    p.add_argument("--residual-ratio", type=float, help="adapter mix-in (default 0.2)")
    p.add_argument("--detach-reset", action="store_const", const=True)
    p.add_argument("--logit-scale", type=float)
    p.add_argument("--no-normalize", action="store_const", const=True)
    p.add_argument("--checkpoint", required=True, help="NCAD output path")
    p.add_argument("--report", help="write the JSON report here (always printed)")
    common(p)
    p.set_defaults(func=cmd_fewshot)

    p = sub.add_parser("eval", help="score a predictions JSONL against manifest labels")
    p.add_argument("--predictions", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--report", help="write the JSON report here (always printed)")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("reproduce", help="compare measured accuracy to the published table")
    p.add_argument("--assets", required=True,
                   help="root holding <dataset>/{text.ncem,train,test}")
    p.add_argument("--tolerance", type=float, help="pass/delta threshold in percent (default 5)")
    p.add_argument("--report", help="write the JSON report here (always printed)")
    common(p)
    p.set_defaults(func=cmd_reproduce)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args._file_cfg = _load_config_file(getattr(args, "config", None))
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (err.InsufficientSamples,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except (err.AllZeroWeights,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except err.SpikeshotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
