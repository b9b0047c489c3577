"""Command-line entry point.

Subcommands: data (validate/split), preprocess, train, eval, predict, cam,
roc, serve.  Exit codes: 0 success, 1 usage error, 2 runtime failure.  Every
run that produces outputs also writes its fully-resolved configuration next
to them, so results are reproducible from the emitted config alone.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path
from typing import Optional

import click
import numpy as np

from . import __version__
from .errors import CovidScreenError
from .manifest import (DatasetManifest, Label, Modality, Split, load_manifest,
                       save_manifest, scan_dataset_root, validate_image)
from .metrics import roc_curve
from .preprocess import Mode, PreprocessConfig, load_image, run_pipeline
from .splits import stratified_split
from .tensorio import write_tensor

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


def _write_run_config(target: Path, payload: dict) -> None:
    payload = dict(payload, tool_version=__version__)
    if target.suffix:
        path = target.with_name(target.name + ".run_config.json")
    else:
        target.mkdir(parents=True, exist_ok=True)
        path = target / "run_config.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _manifest_at(data_path: str) -> Path:
    """Accept either a manifest file or a dataset directory holding one."""
    path = Path(data_path)
    return path / "manifest.csv" if path.is_dir() else path


def _preprocess_config(overrides: dict) -> PreprocessConfig:
    fields = {f.name for f in dataclasses.fields(PreprocessConfig)}
    known = {k: v for k, v in overrides.items() if k in fields}
    for key in ("rotation_range_deg", "translation_range_frac", "target_size"):
        if key in known and isinstance(known[key], list):
            known[key] = tuple(known[key])
    return PreprocessConfig(**known)


@click.group(name="covidscreen")
@click.version_option(__version__)
def cli() -> None:
    """CT/CXR screening toolkit."""


# --- data ------------------------------------------------------------------


@cli.group()
def data() -> None:
    """Manifest validation and dataset splitting."""


def _load_data(manifest_path: Optional[str], root: Optional[str],
               modality: str, verify: bool = True) -> DatasetManifest:
    if manifest_path:
        return load_manifest(manifest_path, verify_files=verify)
    if root:
        return scan_dataset_root(root, Modality(modality))
    raise click.UsageError("provide --manifest or --root")


@data.command("validate")
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@click.option("--root", type=click.Path(), default=None)
@click.option("--modality", type=click.Choice(["ct", "cxr"]), default="ct")
@click.option("--strict/--lenient", default=True)
def data_validate(manifest_path, root, modality, strict) -> None:
    """Check every referenced image against the quality contract."""
    manifest = _load_data(manifest_path, root, modality)
    failures = 0
    for record in manifest.records:
        result = validate_image(record, strict=strict, root=manifest.root)
        if not result.ok:
            failures += 1
            click.echo(f"FAIL {record.image_id}: {'; '.join(result.reasons)}")
    click.echo(f"validated {len(manifest.records)} images, {failures} failures")
    if failures:
        raise CovidScreenError(f"{failures} images failed validation")


@data.command("split")
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@click.option("--root", type=click.Path(), default=None)
@click.option("--modality", type=click.Choice(["ct", "cxr"]), default="ct")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--ratios", default="0.7,0.1,0.2", show_default=True)
@click.option("--group-by-patient/--no-group-by-patient", default=None,
              help="Defaults on for CT (slice leakage), off for CXR.")
@click.option("--out", "out_path", type=click.Path(), required=True)
def data_split(manifest_path, root, modality, seed, ratios, group_by_patient,
               out_path) -> None:
    """Assign train/val/test splits and write the updated manifest."""
    manifest = _load_data(manifest_path, root, modality)
    try:
        ratio_tuple = tuple(float(r) for r in ratios.split(","))
    except ValueError:
        raise click.UsageError(f"cannot parse ratios {ratios!r}")
    if group_by_patient is None:
        group_by_patient = modality == "ct"
    assignment = stratified_split(manifest.records, ratio_tuple, seed,
                                  group_by_patient)
    save_manifest(manifest.with_splits(assignment.assignments), out_path)
    _write_run_config(Path(out_path), {
        "command": "data split", "seed": seed, "ratios": list(ratio_tuple),
        "group_by_patient": group_by_patient, "records": len(manifest.records),
    })
    totals = assignment.totals()
    click.echo(" ".join(f"{split.value}={count}" for split, count in totals.items()))


# --- preprocess --------------------------------------------------------------


@cli.command("preprocess")
@click.option("--in", "in_path", type=click.Path(), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--mode", type=click.Choice(["train", "eval"]), default="eval",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--size", type=int, default=256, show_default=True,
              help="Square target size.")
def preprocess_cmd(in_path, out_dir, mode, seed, size) -> None:
    """Run the pipeline over a directory (or manifest) of images, emitting
    one binary tensor file per image."""
    from .errors import MissingFile

    cfg = PreprocessConfig(target_size=(size, size, 3))
    in_path = Path(in_path)
    if not in_path.exists():
        raise MissingFile(f"input path not found: {in_path}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if in_path.is_file():
        manifest = load_manifest(in_path)
        sources = [(rec.image_id.replace("/", "_"), manifest.resolve_path(rec))
                   for rec in manifest.records]
    else:
        files = sorted(p for p in in_path.rglob("*")
                       if p.suffix.lower() in IMAGE_SUFFIXES)
        sources = [(p.stem, p) for p in files]

    pipeline_mode = Mode(mode)
    for index, (name, path) in enumerate(sources):
        rng = np.random.default_rng([seed, index])
        tensor = run_pipeline(load_image(path), pipeline_mode, rng=rng, cfg=cfg,
                              source_id=name)
        write_tensor(out_dir / f"{name}.cst", tensor.values)
    _write_run_config(out_dir, {
        "command": "preprocess", "mode": mode, "seed": seed,
        "inputs": len(sources), "preprocess": dataclasses.asdict(cfg),
    })
    click.echo(f"wrote {len(sources)} tensors to {out_dir}")


# --- train -------------------------------------------------------------------


def _load_json(path: Optional[str]) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _aux_from_config(aux_cfg: dict):
    from .models import AuxExtractor, AuxKind, constant_aux, load_checkpoint, \
        model_from_checkpoint

    def build(key: str, dim: int):
        path = aux_cfg.get(key)
        if path:
            model = model_from_checkpoint(load_checkpoint(path))
            return AuxExtractor(model, dim, name=key)
        return constant_aux([0.5] * dim, name=f"{key}-stub")

    return {AuxKind.CHEXPERT6: build("chexpert_checkpoint", 6),
            AuxKind.PNEUMONIA2: build("pneumonia_checkpoint", 2)}


@cli.command("train")
@click.option("--model", "model_kind", type=click.Choice(["ct", "cxr"]),
              default="ct", show_default=True)
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--data", "data_path", type=click.Path(), required=True,
              help="Manifest file with train/val splits assigned.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
def train_cmd(model_kind, config_path, data_path, out_dir) -> None:
    """Train a model; writes the best checkpoint, metrics history and config."""
    import torch

    from .models import AuxKind, ModelSpec, build_model, save_checkpoint
    from .training import TrainConfig, train

    config = _load_json(config_path)
    preprocess_cfg = _preprocess_config(config.get("preprocess", {}))
    train_cfg = TrainConfig(**config.get("train", {}))
    spec_cfg = dict(config.get("model", {}))
    spec_cfg["kind"] = model_kind
    if model_kind == "cxr":
        spec_cfg.setdefault("head_width", 1)
    if "attention_kernels" in spec_cfg:
        spec_cfg["attention_kernels"] = tuple(spec_cfg["attention_kernels"])
    spec = ModelSpec(**spec_cfg)

    manifest = load_manifest(_manifest_at(data_path))
    torch.manual_seed(train_cfg.seed)
    model = build_model(spec)
    if model_kind == "cxr":
        for kind, extractor in _aux_from_config(config.get("aux", {})).items():
            model.attach_aux(kind, extractor)

    out = Path(out_dir)
    result = train(model, manifest, preprocess_cfg, train_cfg, out_dir=out)
    save_checkpoint(result.best, out / "best.ckpt")
    save_checkpoint(result.final, out / "last.ckpt")
    _write_run_config(out, {
        "command": "train", "model": model_kind, "data": str(data_path),
        "train": train_cfg.to_dict(), "model_spec": spec.to_dict(),
        "preprocess": dataclasses.asdict(preprocess_cfg),
    })
    best_auc = result.state.best_val_auc
    click.echo(f"best val AUC {best_auc:.4f} after {result.state.epoch} epochs")


# --- eval / predict / cam ----------------------------------------------------


@cli.command("eval")
@click.option("--ckpt", "ckpt_path", type=click.Path(), required=True)
@click.option("--data", "data_path", type=click.Path(), required=True)
@click.option("--report", "report_dir", type=click.Path(), required=True)
@click.option("--split", type=click.Choice(["train", "val", "test"]),
              default="test", show_default=True)
@click.option("--name", default="model", show_default=True)
def eval_cmd(ckpt_path, data_path, report_dir, split, name) -> None:
    """Evaluate a checkpoint on a manifest split; renders table, CSV, ROC
    points and the ROC curve figure."""
    from .evaluation import evaluate, pipeline_config_for
    from .models import AuxKind, DeepCXRNet, constant_aux, load_checkpoint, \
        model_from_checkpoint
    from .reporting import render_table, write_report_files

    checkpoint = load_checkpoint(ckpt_path)
    model = model_from_checkpoint(checkpoint)
    if isinstance(model, DeepCXRNet):
        model.attach_aux(AuxKind.CHEXPERT6, constant_aux([0.5] * 6))
        model.attach_aux(AuxKind.PNEUMONIA2, constant_aux([0.5] * 2))
    mode = "ct3" if checkpoint.model_spec.kind == "ct" else "cxr_binary"
    manifest = load_manifest(_manifest_at(data_path))
    report = evaluate(model, manifest, mode, cfg=pipeline_config_for(checkpoint),
                      split=Split(split))
    paths = write_report_files(report, report_dir, name)
    _write_run_config(Path(report_dir), {
        "command": "eval", "checkpoint": str(ckpt_path), "data": str(data_path),
        "split": split, "mode": mode,
    })
    click.echo(render_table(report, name))
    click.echo(f"report files: {', '.join(str(p) for p in paths.values())}")


@cli.command("predict")
@click.option("--ckpt", "ckpt_path", type=click.Path(), required=True)
@click.option("--image", "image_path", type=click.Path(), required=True)
def predict_cmd(ckpt_path, image_path) -> None:
    """Single-image prediction printed as JSON."""
    import torch

    from .evaluation import pipeline_config_for
    from .models import AuxKind, DeepCXRNet, constant_aux, load_checkpoint, \
        model_from_checkpoint

    checkpoint = load_checkpoint(ckpt_path)
    model = model_from_checkpoint(checkpoint)
    if isinstance(model, DeepCXRNet):
        model.attach_aux(AuxKind.CHEXPERT6, constant_aux([0.5] * 6))
        model.attach_aux(AuxKind.PNEUMONIA2, constant_aux([0.5] * 2))
    tensor = run_pipeline(load_image(image_path), Mode.EVAL,
                          cfg=pipeline_config_for(checkpoint)).values
    batch = torch.from_numpy(np.transpose(tensor, (2, 0, 1))[None]).float()
    prediction = model.predict(batch)[0]
    click.echo(json.dumps({
        "image": str(image_path),
        "probabilities": list(prediction.probabilities),
        "predicted_label": prediction.label_name,
    }))


@cli.command("cam")
@click.option("--ckpt", "ckpt_path", type=click.Path(), required=True)
@click.option("--image", "image_path", type=click.Path(), required=True)
@click.option("--class", "target", default="covid19", show_default=True)
@click.option("--alpha", type=float, default=0.4, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--heatmap-out", type=click.Path(), default=None,
              help="Also export the raw heatmap as a binary tensor file.")
def cam_cmd(ckpt_path, image_path, target, alpha, out_path, heatmap_out) -> None:
    """Write a class-activation overlay for one image."""
    import torch

    from .cam import grad_cam, render_overlay, save_overlay
    from .evaluation import pipeline_config_for
    from .models import load_checkpoint, model_from_checkpoint

    checkpoint = load_checkpoint(ckpt_path)
    model = model_from_checkpoint(checkpoint)
    image = load_image(image_path)
    tensor = run_pipeline(image, Mode.EVAL,
                          cfg=pipeline_config_for(checkpoint)).values
    batch = torch.from_numpy(np.transpose(tensor, (2, 0, 1))[None]).float()
    result = grad_cam(model, batch, target, source_id=str(image_path))
    save_overlay(out_path, render_overlay(image, result, alpha))
    if heatmap_out:
        write_tensor(heatmap_out, result.upsampled)
    _write_run_config(Path(out_path), {
        "command": "cam", "checkpoint": str(ckpt_path), "image": str(image_path),
        "class": target, "alpha": alpha, "degenerate": result.degenerate,
    })
    click.echo(f"overlay written to {out_path}")


# --- roc ---------------------------------------------------------------------


@cli.command("roc")
@click.option("--scores", "scores_path", type=click.Path(), required=True,
              help="Text file, one 'label score' pair per line (label 0/1).")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--fig", "fig_path", type=click.Path(), default=None,
              help="Also render the ROC curve figure.")
def roc_cmd(scores_path, out_path, fig_path) -> None:
    """ROC points and AUC straight from a score file (no model needed)."""
    labels, scores = [], []
    for line_no, line in enumerate(Path(scores_path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise CovidScreenError(
                f"{scores_path}:{line_no}: expected 'label score', got {line!r}")
        labels.append(bool(int(parts[0])))
        scores.append(float(parts[1]))
    points, auc = roc_curve(labels, scores)
    from .reporting import plot_roc, roc_points_text

    Path(out_path).write_text(roc_points_text(points), encoding="utf-8")
    if fig_path:
        plot_roc(points, auc, fig_path, Path(scores_path).stem)
    _write_run_config(Path(out_path), {
        "command": "roc", "scores": str(scores_path), "n": len(scores),
        "auc": auc,
    })
    click.echo(f"AUC {auc:.6f}")


# --- serve -------------------------------------------------------------------


@cli.command("serve")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--port", type=int, default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve_cmd(config_path, port, host) -> None:
    """Run the inference HTTP service."""
    import uvicorn

    from .service import create_app, load_service_config

    config = load_service_config(config_path)
    if port is not None:
        config.port = port
    uvicorn.run(create_app(config), host=host, port=config.port)


def dispatch(argv: list[str]) -> int:
    """Invoke the CLI programmatically: 0 ok, 1 usage error, 2 runtime failure."""
    try:
        cli.main(args=list(argv), standalone_mode=False, prog_name="covidscreen")
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.Abort:
        return 1
    except CovidScreenError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except (OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
