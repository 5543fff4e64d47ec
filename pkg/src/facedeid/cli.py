"""Command-line pipeline: mask -> latent optimization -> merge, plus metrics,
attack evaluation, and the lambda sweep.

Config values resolve in order: built-in defaults, config file (key = value
lines), FACEDEID_<KEY> environment variables, then explicit CLI flags.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import blend, evalharness, facemask, imagecore, latentopt, metrics
from .diffmodel import ModelSpec, make_toy_model
from .imagecore import Image

ENV_PREFIX = "FACEDEID_"

DEFAULTS = {
    "lambda_per": 1.0 / 8800.0,
    "lambda_did": 1.0 / 12.0,
    "iterations": 800,
    "learning_rate": 1.0,
    "init_seed": 0,
    "latent_dim": 16,
    "gen_height": 16,
    "gen_width": 16,
    "channels": 1,
    "hidden_dim": 32,
    "model_seed": 1,
    "levels": 10,
    "margin": 0.3,
    "feather": 0,
    "feature_dim": 16,
}

_INT_KEYS = {
    "iterations", "init_seed", "latent_dim", "gen_height", "gen_width",
    "channels", "hidden_dim", "model_seed", "levels", "feather", "feature_dim",
}


class CliError(Exception):
    def __init__(self, message: str, exit_code: int = 1):
        super().__init__(message)
        self.exit_code = exit_code


def parse_config_file(path) -> dict:
    """Flat `key = value` lines; # starts a comment; values are numbers."""
    conf = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key = value", 2)
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise CliError(f"{path}:{lineno}: unknown config key {key!r}", 2)
        conf[key] = _parse_value(key, value.strip())
    return conf


def _parse_value(key: str, raw: str):
    try:
        return int(raw) if key in _INT_KEYS else float(raw)
    except ValueError as e:
        raise CliError(f"bad value for {key}: {raw!r}", 2) from e


def resolve_config(args) -> dict:
    conf = dict(DEFAULTS)
    if getattr(args, "config", None):
        conf.update(parse_config_file(args.config))
    for key in DEFAULTS:
        env = os.environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            conf[key] = _parse_value(key, env)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            conf[key] = val
    return conf


def build_models(conf: dict) -> latentopt.ModelBundle:
    shape = (conf["gen_height"], conf["gen_width"], conf["channels"])
    gen = make_toy_model(
        ModelSpec("generator", (conf["latent_dim"],), shape,
                  seed=conf["model_seed"], hidden_dim=conf["hidden_dim"])
    )
    per = make_toy_model(
        ModelSpec("perceptual", shape, (conf["feature_dim"],),
                  seed=conf["model_seed"] + 1, hidden_dim=conf["hidden_dim"])
    )
    ident = make_toy_model(
        ModelSpec("identity", shape, (conf["feature_dim"],),
                  seed=conf["model_seed"] + 2, hidden_dim=conf["hidden_dim"])
    )
    return latentopt.ModelBundle(gen, per, ident)


def run_deidentify_pipeline(image_path, landmark_path, conf, premasked=False):
    """The full pipeline on one image. Returns (output image, info dict)."""
    original = imagecore.load_image(image_path)
    dims = (original.height, original.width)
    if premasked:
        rect = facemask.FaceRect(0, 0, original.width, original.height)
        masked = original
    else:
        lm = facemask.load_landmarks(landmark_path, image_dims=dims)
        rect = facemask.face_rect(lm, conf["margin"], dims)
        masked = facemask.apply_face_mask(original, rect)

    models = build_models(conf)
    gh, gw, gc = models.generator.spec.output_shape
    if original.channels != gc:
        raise CliError(
            f"pipeline: image has {original.channels} channels, generator outputs {gc}"
        )
    crop = Image(masked.pixels[rect.y0 : rect.y1, rect.x0 : rect.x1, :])
    target = facemask.resize_bilinear(crop, gh, gw)

    weights = latentopt.LossWeights(conf["lambda_per"], conf["lambda_did"])
    cfg = latentopt.OptConfig(
        iterations=conf["iterations"],
        learning_rate=conf["learning_rate"],
        seed=conf["init_seed"],
    )
    result = latentopt.optimize(target, models, weights, cfg)

    generated = facemask.resize_bilinear(result.image, rect.height, rect.width)
    composite = original.pixels.copy()
    composite[rect.y0 : rect.y1, rect.x0 : rect.x1, :] = generated.pixels
    mask = facemask.build_blend_mask(rect, dims, feather=conf["feather"])
    bank = blend.FilterBank(levels=conf["levels"])
    output = blend.merge_and_match(original, Image(composite), mask, bank)

    report = metrics.metric_report(original, output)
    id_target = models.identity.extractor_forward(target).values
    id_out = models.identity.extractor_forward(result.image).values
    info = {
        "rect": [rect.x0, rect.y0, rect.x1, rect.y1],
        "metrics": report.to_dict(),
        "identity_feature_distance": float(np.linalg.norm(id_target - id_out)),
        "best_iteration": result.best_iteration,
        "trace": result.trace,
    }
    return output, info


def cmd_deidentify(args) -> int:
    if args.from_manifest:
        doc = json.loads(Path(args.from_manifest).read_text())
        conf = dict(DEFAULTS, **doc["config"])
        image_path = doc["inputs"]["image"]
        landmark_path = doc["inputs"].get("landmarks")
        premasked = doc["inputs"].get("premasked", False)
        output_path = args.output or doc["outputs"]["image"]
    else:
        conf = resolve_config(args)
        image_path = args.image
        landmark_path = args.landmarks
        premasked = args.premasked
        output_path = args.output
        if image_path is None or output_path is None:
            raise CliError("deidentify needs --image and --output", 2)
        if landmark_path is None and not premasked:
            raise CliError("deidentify needs --landmarks unless --premasked", 2)
    t0 = time.monotonic()
    output, info = run_deidentify_pipeline(image_path, landmark_path, conf, premasked)
    elapsed = time.monotonic() - t0
    imagecore.save_image(output, output_path)
    if args.trace_csv:
        latentopt.write_trace_csv(info["trace"], args.trace_csv)
    manifest = {
        "tool_version": "facedeid 0.1.0",
        "inputs": {"image": str(image_path), "landmarks": landmark_path and str(landmark_path),
                   "premasked": premasked},
        "config": {k: conf[k] for k in DEFAULTS},
        "outputs": {"image": str(output_path)},
        "rect": info["rect"],
        "metrics": info["metrics"],
        "identity_feature_distance": info["identity_feature_distance"],
        "best_iteration": info["best_iteration"],
        "wall_clock_seconds": elapsed,
    }
    manifest_path = args.manifest_out or (str(output_path) + ".manifest.json")
    Path(manifest_path).write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"ssim={info['metrics']['ssim']:.6f} psnr={info['metrics']['psnr']}")
    return 0


def cmd_metrics(args) -> int:
    x = imagecore.load_image(args.image_a)
    y = imagecore.load_image(args.image_b)
    report = metrics.metric_report(x, y)
    if args.csv:
        writer = csv.writer(sys.stdout)
        writer.writerow(["ssim", "psnr", "mse"])
        d = report.to_dict()
        writer.writerow([d["ssim"], d["psnr"], d["mse"]])
    else:
        print(json.dumps(report.to_dict(), indent=2))
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    return 0


def _toy_extractor(conf):
    shape = (conf["gen_height"], conf["gen_width"], conf["channels"])
    model = make_toy_model(
        ModelSpec("identity", shape, (conf["feature_dim"],),
                  seed=conf["model_seed"] + 2, hidden_dim=conf["hidden_dim"])
    )

    def extract(img):
        resized = facemask.resize_bilinear(img, shape[0], shape[1])
        if resized.channels != shape[2]:
            if shape[2] == 1:
                lum = resized.pixels.mean(axis=2, keepdims=True)
                resized = Image(lum)
            else:
                resized = Image(np.repeat(resized.pixels, 3, axis=2))
        return model.extractor_forward(resized).values

    return extract


def cmd_evaluate(args) -> int:
    conf = resolve_config(args)
    extractor = _toy_extractor(conf)
    train_rows = evalharness.read_manifest_csv(args.train_manifest)
    test_rows = evalharness.read_manifest_csv(args.test_manifest)
    train_ds, train_fail = evalharness.extract_dataset(
        [(s, p) for s, p, _ in train_rows], extractor, "toy-identity"
    )
    test_ds, test_fail = evalharness.extract_dataset(
        [(s, p) for s, p, _ in test_rows], extractor, "toy-identity"
    )
    report = {"failures": train_fail + test_fail, "summary": {}}
    if args.scenario in ("identification", "both"):
        model = evalharness.train_identifier(train_ds)
        asr, outcomes = evalharness.identification_asr(model, test_ds)
        report["identification"] = {"asr": asr, "outcomes": outcomes}
        report["summary"]["identification_asr"] = asr
    if args.scenario in ("verification", "both"):
        impostors = evalharness.impostor_scores(train_ds, comparator=args.comparator)
        pairs = evalharness.genuine_pairs_first_original(train_ds, test_ds)
        per_far = {}
        for far in args.far:
            tau = evalharness.calibrate_threshold(impostors, far, args.comparator)
            asr, _ = evalharness.verification_asr(pairs, tau, args.comparator)
            per_far[str(far)] = {"tau": tau, "asr": asr}
            report["summary"][f"verification_asr_far_{far}"] = asr
        report["verification"] = per_far
    evalharness.write_report(report, json_path=args.json_out, csv_path=args.csv_out)
    print(json.dumps(report["summary"], indent=2))
    return 0


def cmd_sweep_lambda(args) -> int:
    conf = resolve_config(args)
    rows = []
    for lam in args.lambda_did_values:
        ssims, dists = [], []
        for seed in range(args.seeds):
            run_conf = dict(conf, lambda_did=lam, init_seed=conf["init_seed"] + seed)
            output, info = run_deidentify_pipeline(
                args.image, args.landmarks, run_conf, args.premasked
            )
            ssims.append(info["metrics"]["ssim"])
            dists.append(info["identity_feature_distance"])
        rows.append((lam, float(np.mean(ssims)), float(np.mean(dists))))
    with open(args.csv_out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["lambda_did", "mean_ssim", "mean_identity_distance"])
        for row in rows:
            writer.writerow(row)
    for lam, s, d in rows:
        print(f"lambda_did={lam:.6g} mean_ssim={s:.6f} mean_id_distance={d:.6f}")
    return 0


def cmd_mask(args) -> int:
    conf = resolve_config(args)
    img = imagecore.load_image(args.image)
    lm = facemask.load_landmarks(args.landmarks, image_dims=(img.height, img.width))
    rect = facemask.face_rect(lm, conf["margin"], (img.height, img.width))
    masked = facemask.apply_face_mask(img, rect)
    imagecore.save_image(masked, args.output)
    print(json.dumps({"rect": [rect.x0, rect.y0, rect.x1, rect.y1]}))
    return 0


def cmd_merge(args) -> int:
    conf = resolve_config(args)
    a = imagecore.load_image(args.input)
    b = imagecore.load_image(args.generated)
    dims = (a.height, a.width)
    x0, y0, x1, y1 = args.rect
    rect = facemask.FaceRect(x0, y0, x1, y1)
    mask = facemask.build_blend_mask(rect, dims, feather=conf["feather"])
    bank = blend.FilterBank(levels=conf["levels"])
    if args.mode == "literal":
        out = blend.merge_literal(a, b, mask, bank).clamped()
    elif args.mode == "complete":
        out = blend.merge_complete(a, b, mask, bank).clamped()
    else:
        out = blend.merge_and_match(a, b, mask, bank)
    imagecore.save_image(out, args.output)
    return 0


def _add_config_flags(p):
    p.add_argument("--config", help="key = value config file")
    for key, default in DEFAULTS.items():
        flag = "--" + key.replace("_", "-")
        p.add_argument(flag, type=int if key in _INT_KEYS else float, default=None,
                       help=f"default {default}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="facedeid",
                                     description="Mask-guided face de-identification pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("deidentify", help="run the full pipeline on one image")
    p.add_argument("--image")
    p.add_argument("--landmarks")
    p.add_argument("--premasked", action="store_true",
                   help="input image is already masked; skip the mask step")
    p.add_argument("--output")
    p.add_argument("--manifest-out")
    p.add_argument("--trace-csv")
    p.add_argument("--from-manifest", help="replay a previous run from its manifest")
    _add_config_flags(p)
    p.set_defaults(func=cmd_deidentify)

    p = sub.add_parser("metrics", help="SSIM/PSNR/MSE between two images")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("--csv", action="store_true")
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("evaluate", help="identification/verification attack evaluation")
    p.add_argument("--train-manifest", required=True)
    p.add_argument("--test-manifest", required=True)
    p.add_argument("--scenario", choices=["identification", "verification", "both"],
                   default="both")
    p.add_argument("--far", type=lambda s: [float(x) for x in s.split(",")],
                   default=[0.001, 0.01])
    p.add_argument("--comparator", choices=["distance", "similarity"], default="distance")
    p.add_argument("--json-out")
    p.add_argument("--csv-out")
    _add_config_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep-lambda", help="sweep lambda_did and record quality/identity trend")
    p.add_argument("--image", required=True)
    p.add_argument("--landmarks")
    p.add_argument("--premasked", action="store_true")
    p.add_argument("--lambda-did-list", dest="lambda_did_values",
                   type=lambda s: [float(x) for x in s.split(",")], required=True)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--csv-out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep_lambda)

    p = sub.add_parser("mask", help="apply the landmark-driven face mask")
    p.add_argument("--image", required=True)
    p.add_argument("--landmarks", required=True)
    p.add_argument("--output", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("merge", help="multi-band merge of two images")
    p.add_argument("--input", required=True)
    p.add_argument("--generated", required=True)
    p.add_argument("--rect", type=int, nargs=4, metavar=("X0", "Y0", "X1", "Y1"),
                   required=True)
    p.add_argument("--mode", choices=["literal", "complete", "match"], default="match")
    p.add_argument("--output", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_merge)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"facedeid: {e}", file=sys.stderr)
        return e.exit_code
    except (imagecore.ImageError, facemask.MaskError, blend.BlendError,
            metrics.MetricError, latentopt.OptError, evalharness.EvalError) as e:
        module = type(e).__module__.rsplit(".", 1)[-1]
        print(f"facedeid [{module}]: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
