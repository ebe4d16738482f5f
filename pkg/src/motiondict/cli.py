"""Command-line entry point for the full lifecycle.

Subcommands: synth-data, train, animate, edit, sweep, label, eval, serve.
Exit codes: 0 success, 1 usage error, 2 runtime failure. All randomness
flows from --seed (default 0, echoed in output). Recipes are given inline
as "i:a,j:b" or as @file pointing at a JSON recipe.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .latent import EditRecipe


def parse_recipe(text: str | None) -> EditRecipe:
    if not text:
        return EditRecipe()
    if text.startswith("@"):
        return EditRecipe.from_file(text[1:])
    return EditRecipe.from_string(text)


def _load_model(ckpt: str):
    from .checkpoint import load_animator

    ckpt_path = Path(ckpt)
    if not ckpt_path.exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt_path}")
    return load_animator(ckpt_path)


def _load_image(path: str, image_size: int):
    from .data import DataError, decode_image

    image_path = Path(path)
    if not image_path.exists():
        raise FileNotFoundError(f"image not found: {image_path}")
    image = decode_image(image_path)
    if image.shape[-1] != image_size or image.shape[-2] != image_size:
        raise DataError(
            f"{image_path} is {tuple(image.shape[-2:])}, model expects {image_size}x{image_size}"
        )
    return image


@click.group(name="motiondict")
def cli():
    """Portrait animation with an interpretable sparse motion dictionary."""


@cli.command("synth-data")
@click.option("--out", required=True, help="Output dataset directory.")
@click.option("--clips", default=8, show_default=True, type=int)
@click.option("--frames", default=16, show_default=True, type=int)
@click.option("--size", default=64, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
def synth_data(out, clips, frames, size, seed):
    """Render a synthetic talking-face dataset with ground-truth factors."""
    from .data import synthesize_dataset

    manifest = synthesize_dataset(out, clips=clips, frames=frames, size=size, seed=seed)
    click.echo(f"seed: {seed}")
    click.echo(f"wrote {len(manifest.clips)} clips under {out}")


@cli.command("train")
@click.option("--config", "config_path", default=None, help="JSON training config file.")
@click.option("--data", "data_root", required=True, help="Dataset directory with manifest.json.")
@click.option("--out", "out_dir", required=True, help="Run directory for checkpoints and logs.")
@click.option("--steps", default=None, type=int, help="Override the configured step count.")
@click.option("--seed", default=None, type=int, help="Override the configured seed.")
def train(config_path, data_root, out_dir, steps, seed):
    """Run self-supervised training with periodic checkpoints and a metrics log."""
    from dataclasses import replace

    from .config_io import load_train_bundle
    from .data import PairBatcher, load_manifest
    from .training import TrainState, run_training

    network, weights, train_cfg = load_train_bundle(config_path)
    if steps is not None:
        train_cfg = replace(train_cfg, steps=steps)
    if seed is not None:
        train_cfg = replace(train_cfg, seed=seed)
    click.echo(f"seed: {train_cfg.seed}")

    manifest = load_manifest(data_root)
    sequences = manifest.load_split("train")
    batcher = PairBatcher(sequences, train_cfg.batch_size, train_cfg.seed)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    state = TrainState(network, weights, train_cfg)
    run_training(
        state,
        batcher,
        train_cfg.steps,
        log_path=out / "metrics.jsonl",
        checkpoint_dir=out / "checkpoint",
    )
    from .checkpoint import save_checkpoint

    save_checkpoint(state, out / "checkpoint")
    click.echo(f"trained {state.step} steps; checkpoint at {out / 'checkpoint'}")


@cli.command("animate")
@click.option("--ckpt", required=True)
@click.option("--source", required=True, help="Source portrait image.")
@click.option("--driving", required=True, help="Directory of driving frames.")
@click.option("--recipe", default=None, help='Edit recipe "i:a,j:b" or @file.')
@click.option("--out", "out_dir", required=True)
@click.option("--strip", is_flag=True, help="Also write a horizontal contact sheet.")
@click.option("--smooth", default=0.0, show_default=True, type=float, help="Coefficient smoothing.")
def animate(ckpt, source, driving, recipe, out_dir, strip, smooth):
    """Cross-reenact: edit the source, then transfer the driving motion."""
    from .data import FRAME_PATTERN, load_frames, save_image
    from .inference import AnimationRequest, cross_reenact
    from .report import save_contact_sheet

    model, _ = _load_model(ckpt)
    source_image = _load_image(source, model.config.image_size)
    driving_clip = load_frames(driving)
    request = AnimationRequest(
        source=source_image, driving=driving_clip.frames, recipe=parse_recipe(recipe)
    )
    frames = cross_reenact(model, request, smoothing=smooth)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(frames):
        save_image(frame, out / FRAME_PATTERN.format(t))
    if strip:
        save_contact_sheet(frames, out / "strip.png")
    click.echo(f"wrote {len(frames)} frames to {out}")


@cli.command("edit")
@click.option("--ckpt", required=True)
@click.option("--source", required=True)
@click.option("--recipe", default=None, help='Edit recipe "i:a,j:b" or @file.')
@click.option("--out", "out_path", required=True)
def edit(ckpt, source, recipe, out_path):
    """Render a single edited portrait."""
    from .data import save_image
    from .inference import edit_image

    model, _ = _load_model(ckpt)
    source_image = _load_image(source, model.config.image_size)
    edited = edit_image(model, source_image, parse_recipe(recipe))
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    save_image(edited, out_path)
    click.echo(f"wrote {out_path}")


@cli.command("sweep")
@click.option("--ckpt", required=True)
@click.option("--source", required=True)
@click.option("--index", required=True, type=int)
@click.option("--out", "out_dir", required=True)
def sweep(ckpt, source, index, out_dir):
    """Sweep one vector over -0.5..0.5 (step 0.1) into an 11-frame strip."""
    from .data import FRAME_PATTERN, save_image
    from .report import save_contact_sheet
    from .semantics import sweep_vector

    model, _ = _load_model(ckpt)
    source_image = _load_image(source, model.config.image_size)
    frames = sweep_vector(model, source_image, index)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(frames):
        save_image(frame, out / FRAME_PATTERN.format(t))
    save_contact_sheet(frames, out / "strip.png")
    click.echo(f"wrote {len(frames)} sweep frames to {out}")


@cli.command("label")
@click.option("--ckpt", required=True)
@click.option("--data", "data_root", required=True, help="Synthetic dataset with factors.json.")
@click.option("--threshold", default=0.3, show_default=True, type=float)
def label(ckpt, data_root, threshold):
    """Correlate coefficients with synthetic factors and persist labels."""
    from .data import load_factors, load_manifest
    from .semantics import correlate_with_factors, labels_from_correlations, save_labels

    model, manifest_payload = _load_model(ckpt)
    manifest = load_manifest(data_root)
    clips = []
    for entry in manifest.split("val"):
        params = load_factors(manifest.root / entry.path)
        if params is None:
            raise FileNotFoundError(f"clip {entry.clip_id} has no factors.json (not synthetic?)")
        clips.append((manifest.load_clip(entry).frames, params))
    rows = correlate_with_factors(model, clips)
    labels = labels_from_correlations(rows, model.config.dict_size, threshold=threshold)
    save_labels(labels, Path(ckpt))
    for index, entry in sorted(labels.entries.items()):
        click.echo(f"vector {index}: {entry.label} (|corr|={entry.correlation:.3f})")
    if not labels.entries:
        click.echo(f"no factor reached |corr| >= {threshold}; labels unchanged")


@cli.command("eval")
@click.option("--ckpt", required=True)
@click.option("--data", "data_root", required=True)
@click.option("--mode", type=click.Choice(["self", "cross"]), default="self", show_default=True)
@click.option("--report", "report_dir", required=True)
def eval_cmd(ckpt, data_root, mode, report_dir):
    """Metric report (TSV + figures) on the validation split."""
    from .data import load_manifest
    from .evaluate import run_eval

    model, _ = _load_model(ckpt)
    manifest = load_manifest(data_root)
    rows = run_eval(model, manifest, mode, report_dir)
    for row in rows:
        value = row.value if isinstance(row.value, str) else f"{row.value:.6f}"
        click.echo(f"{row.metric}\t{value}\t{row.count}")
    click.echo(f"report written to {report_dir}")


@cli.command("serve")
@click.option("--ckpt", required=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--clips", "clips_dir", default=None, help="Directory of server-side driving clips.")
@click.option("--workers", default=1, show_default=True, type=int, help="Animation job workers.")
def serve(ckpt, port, host, clips_dir, workers):
    """Start the HTTP editing/animation service."""
    import uvicorn

    from .service import create_app

    app = create_app(Path(ckpt), clips_dir=Path(clips_dir) if clips_dir else None, workers=workers)
    uvicorn.run(app, host=host, port=port, log_level="info")


def main(argv: list[str] | None = None) -> int:
    """Run the CLI; returns the exit code instead of raising SystemExit."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except (KeyboardInterrupt, click.Abort):
        click.echo("aborted", err=True)
        return 2
    except Exception as exc:  # runtime failure: missing files, bad data, model errors
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
