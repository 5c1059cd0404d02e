"""Command-line interface: stbf register|normalize|filter|train|classify|eval|sweep|synth.

Exit codes: 0 on success, 1 on validation errors (bad inputs or options),
2 on runtime failures.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import filtering, radiometry, registration, svm
from .errors import StbfError, ValidationError
from .evaluation import cohen_kappa, confusion_matrix, overall_accuracy, per_class_accuracy
from .pipeline import ExperimentConfig, run_sweep
from .raster import (
    DEFAULT_PALETTE,
    RasterStack,
    load_mask,
    load_stack,
    read_raster,
    render_class_map,
    save_mask,
    save_stack,
    write_raster,
)
from .synthetic import SyntheticSpec, generate_synthetic_stack


@click.group()
def cli():
    """Multi-temporal raster toolkit: spatiotemporal bilateral filtering with
    RBF-SVM classification and transfer learning."""


@cli.command()
@click.option("--reference", required=True, type=click.Path(), help="Reference raster header.")
@click.option("--target", required=True, type=click.Path(), help="Target raster header.")
@click.option("--out", required=True, type=click.Path(), help="Output transform JSON.")
@click.option("--warp-out", type=click.Path(), default=None,
              help="Optionally write the warped target raster header here.")
@click.option("--levels", default=4, show_default=True, help="Pyramid levels.")
@click.option("--max-iters", default=50, show_default=True)
@click.option("--tol", default=1e-6, show_default=True)
def register(reference, target, out, warp_out, levels, max_iters, tol):
    """Estimate the affine transform aligning TARGET onto REFERENCE."""
    ref = read_raster(reference)
    tgt = read_raster(target)
    transform = registration.estimate_affine_intensity(
        ref, tgt, pyramid_levels=levels, max_iters=max_iters, tol=tol
    )
    with open(out, "w", encoding="utf-8") as f:
        json.dump({"matrix": transform.matrix.tolist()}, f, indent=2)
        f.write("\n")
    if warp_out:
        write_raster(registration.warp(tgt, transform), warp_out)
    click.echo(f"wrote {out}")


@cli.command()
@click.option("--reference", required=True, type=click.Path())
@click.option("--target", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path(), help="Output model JSON.")
@click.option("--apply-out", type=click.Path(), default=None,
              help="Optionally write the normalized target raster header here.")
def normalize(reference, target, out, apply_out):
    """Fit per-band linear gain/offset matching TARGET statistics to REFERENCE."""
    ref = read_raster(reference)
    tgt = read_raster(target)
    model = radiometry.fit_linear_normalization(ref, tgt)
    model.to_json(out)
    if apply_out:
        write_raster(radiometry.apply_linear_normalization(tgt, model), apply_out)
    click.echo(f"wrote {out}")


@cli.command("filter")
@click.option("--manifest", required=True, type=click.Path(), help="Stack manifest JSON.")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--window", default=5, show_default=True)
@click.option("--sigma-s", default=7.0, show_default=True)
@click.option("--sigma-r", default=50.0, show_default=True)
@click.option("--sigma-t", default=0.2, show_default=True)
def filter_cmd(manifest, out_dir, window, sigma_s, sigma_r, sigma_t):
    """Filter every date of the stack and write the result as a new stack."""
    stack = load_stack(manifest)
    params = filtering.FilterParams(
        window=window, sigma_s=sigma_s, sigma_r=sigma_r, sigma_t=sigma_t
    )
    out = filtering.filter_stack(stack, params)
    path = save_stack(out, out_dir, prefix="filtered")
    click.echo(f"wrote {path}")


@cli.command()
@click.option("--image", required=True, type=click.Path(), help="Training raster header.")
@click.option("--mask", required=True, type=click.Path(), help="Label mask header.")
@click.option("--out", required=True, type=click.Path(), help="Output model JSON.")
@click.option("--c", "c_value", default=10.0, show_default=True, help="Box constraint C.")
@click.option("--gamma", default=None, type=float, help="RBF gamma; default 1/bands.")
@click.option("--tol", default=1e-3, show_default=True)
@click.option("--max-passes", default=200, show_default=True)
@click.option("--sample-per-class", default=500, show_default=True)
@click.option("--seed", default=0, show_default=True)
def train(image, mask, out, c_value, gamma, tol, max_passes, sample_per_class, seed):
    """Train a one-against-all RBF-SVM from a labeled image."""
    img = read_raster(image)
    labels = load_mask(mask)
    params = svm.SvmParams(
        C=c_value, gamma=gamma, tol=tol, max_passes=max_passes,
        sample_per_class=sample_per_class, seed=seed,
    )
    ts = svm.sample_training(img, labels, params)
    model = svm.train_one_vs_all(ts, params)
    svm.save_model(model, out)
    click.echo(f"wrote {out}")


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--image", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path(), help="Predicted mask header.")
@click.option("--ppm-out", type=click.Path(), default=None,
              help="Optionally render the class map to a PPM file.")
def classify(model_path, image, out, ppm_out):
    """Classify every pixel of IMAGE with a trained model."""
    model = svm.load_model(model_path)
    img = read_raster(image)
    predicted = svm.classify_raster(model, img)
    save_mask(predicted, out)
    if ppm_out:
        render_class_map(predicted, DEFAULT_PALETTE, ppm_out)
    click.echo(f"wrote {out}")


@cli.command("eval")
@click.option("--truth", required=True, type=click.Path(), help="Truth mask header.")
@click.option("--predicted", required=True, type=click.Path(), help="Predicted mask header.")
@click.option("--classes", default=0, show_default="max truth class",
              help="Class count K.")
@click.option("--out", type=click.Path(), default=None, help="Write JSON here instead of stdout.")
def eval_cmd(truth, predicted, classes, out):
    """Confusion-matrix accuracy report as JSON."""
    truth_mask = load_mask(truth)
    predicted_mask = load_mask(predicted)
    k = classes or max(truth_mask.class_count, predicted_mask.class_count)
    cm = confusion_matrix(truth_mask, predicted_mask, k)
    per_class = [None if np.isnan(v) else float(v) for v in per_class_accuracy(cm)]
    doc = {
        "overall": overall_accuracy(cm),
        "kappa": cohen_kappa(cm),
        "per_class": per_class,
        "matrix": cm.counts.tolist(),
    }
    text = json.dumps(doc, indent=2) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
        click.echo(f"wrote {out}")
    else:
        click.echo(text, nl=False)


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(),
              help="Experiment config JSON.")
def sweep(config_path):
    """Run the sigma_t sweep described by a config file."""
    config = ExperimentConfig.from_json(config_path)
    rows = run_sweep(config)
    click.echo(f"wrote {Path(config.output_dir) / 'sweep.csv'} ({len(rows)} rows)")


@cli.command()
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--size", default=128, show_default=True)
@click.option("--dates", default=3, show_default=True)
@click.option("--classes", default=4, show_default=True)
@click.option("--bands", default=3, show_default=True)
@click.option("--noise", default="gamma,cloud", show_default=True,
              help="Comma-separated subset of gamma,cloud,drift; empty for none.")
@click.option("--seed", default=0, show_default=True)
def synth(out_dir, size, dates, classes, bands, noise, seed):
    """Generate a synthetic class-blob stack with ground-truth masks."""
    kinds = tuple(k for k in noise.split(",") if k)
    spec = SyntheticSpec(
        size=size, dates=dates, classes=classes, noise=kinds, seed=seed, bands=bands
    )
    stack, masks = generate_synthetic_stack(spec)
    out = Path(out_dir)
    manifest = save_stack(stack, out, prefix="synth")
    for i, mask in enumerate(masks):
        save_mask(mask, out / f"mask{i:02d}.json")
    click.echo(f"wrote {manifest}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except ValidationError as e:
        click.echo(f"error: {e}", err=True)
        return 1
    except StbfError as e:
        click.echo(f"runtime failure: {e}", err=True)
        return 2
    except Exception as e:  # noqa: BLE001 - CLI boundary
        click.echo(f"runtime failure: {e}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
