"""Bridge CLI: export NCEM embeddings for the classification toolkit.

Subcommands:
  encode-text          class names -> text NCEM (one row per class)
  encode-frames        one NCFS frame stack -> visual NCEM (one row per frame)
  encode-frames-batch  every sample of a projection manifest -> NCEM files
                       plus an embedding manifest the toolkit consumes

Weights are a documented download (--weights); without them the backbone is
seeded randomly (--seed), which keeps the pipeline runnable offline and is
recorded in each output's sidecar JSON.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .encode import (
    DEFAULT_TEMPLATES,
    EncodeSettings,
    ROLE_TEXT,
    ROLE_VISUAL,
    encode_frames,
    encode_text,
    text_metadata,
    visual_metadata,
    write_output,
)
from .model import build_model
from .tokenizer import load_tokenizer


def _read_class_names(path: Path) -> list[str]:
    names = [line.strip() for line in path.read_text().splitlines() if line.strip()]
    if not names:
        raise ValueError(f"no class names in {path}")
    return names


def cmd_encode_text(args) -> int:
    class_names = _read_class_names(Path(args.classes))
    templates = args.template or DEFAULT_TEMPLATES.get(args.dataset, ["a photo of a {class}"])
    model, provenance = build_model(args.weights, args.seed)
    tokenizer = load_tokenizer(args.bpe_vocab)
    values = encode_text(model, tokenizer, class_names, templates)
    write_output(
        Path(args.out),
        values,
        ROLE_TEXT,
        class_names,
        text_metadata(provenance, tokenizer.name, templates),
    )
    print(f"wrote {values.shape[0]}x{values.shape[1]} text embeddings to {args.out}")
    return 0


def cmd_encode_frames(args) -> int:
    model, provenance = build_model(args.weights, args.seed)
    settings = EncodeSettings(interpolation=args.interpolation)
    values = encode_frames(model, Path(args.input).read_bytes(), settings)
    write_output(
        Path(args.out),
        values,
        ROLE_VISUAL,
        None,
        visual_metadata(provenance, settings, str(args.input)),
    )
    print(f"wrote {values.shape[0]}x{values.shape[1]} frame embeddings to {args.out}")
    return 0


def cmd_encode_frames_batch(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = json.loads(manifest_path.read_text())
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model, provenance = build_model(args.weights, args.seed)
    settings = EncodeSettings(interpolation=args.interpolation)

    samples = []
    cols = None
    for sample in manifest["samples"]:
        ncfs_path = manifest_path.parent / sample["file"]
        values = encode_frames(model, ncfs_path.read_bytes(), settings)
        cols = values.shape[1]
        out_name = f"{sample['id']}.ncem"
        write_output(
            out_dir / out_name,
            values,
            ROLE_VISUAL,
            None,
            visual_metadata(provenance, settings, str(ncfs_path)),
        )
        samples.append({"id": sample["id"], "file": out_name, "label": sample["label"]})
        print(f"  {sample['id']}: {values.shape[0]} rows")

    embedding_manifest = {
        "dataset": manifest.get("dataset", "unknown"),
        "class_names": manifest["class_names"],
        "cols": cols,
        "timesteps": manifest["timesteps"],
        "samples": samples,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(embedding_manifest, indent=2, sort_keys=True) + "\n"
    )
    print(f"wrote {len(samples)} embedding files + {out_dir / 'manifest.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikeshot-bridge",
        description="Export NCEM embeddings from the RN50 contrastive backbone",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--weights", help="pretrained checkpoint path (documented download)")
        p.add_argument("--seed", type=int, default=0,
                       help="init seed when no weights are given (default 0)")

    p = sub.add_parser("encode-text", help="class names -> text NCEM")
    p.add_argument("--classes", required=True, help="file with one class name per line")
    p.add_argument("--template", action="append",
                   help="prompt with a {class} placeholder; repeatable, averaged")
    p.add_argument("--dataset", default="", help="pick a default template set")
    p.add_argument("--bpe-vocab", help="BPE merges file (byte fallback when omitted)")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_encode_text)

    p = sub.add_parser("encode-frames", help="one NCFS -> visual NCEM")
    p.add_argument("--in", dest="input", required=True, help="NCFS frame stack")
    p.add_argument("--interpolation", choices=["bilinear", "nearest"], default="bilinear")
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_encode_frames)

    p = sub.add_parser("encode-frames-batch",
                       help="all samples of a projection manifest -> NCEM + manifest")
    p.add_argument("--manifest", required=True, help="projection manifest JSON")
    p.add_argument("--interpolation", choices=["bilinear", "nearest"], default="bilinear")
    p.add_argument("--out-dir", required=True)
    common(p)
    p.set_defaults(func=cmd_encode_frames_batch)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
