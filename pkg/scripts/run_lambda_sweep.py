#!/usr/bin/env python3
"""Sweep the de-identification loss weight and report the privacy/utility trade.

For each lambda_did value, runs the pipeline over several seeds on a synthetic
face and prints mean SSIM (utility) against mean identity-feature distance
(privacy). Higher lambda_did should trade SSIM for identity distance.
"""

import argparse
import json
from pathlib import Path

from facedeid.cli import main as cli_main
from run_toy_pipeline import make_synthetic_face


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--outdir", type=Path, default=Path("out_lambda_sweep"))
    parser.add_argument(
        "--lambda-did-list", default="0.02,0.04,0.0833333,0.17",
        help="comma-separated lambda_did values",
    )
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--iterations", type=int, default=120)
    args = parser.parse_args()

    args.outdir.mkdir(parents=True, exist_ok=True)
    image = make_synthetic_face(args.outdir / "face.pgm")
    landmarks = args.outdir / "landmarks.json"
    landmarks.write_text(
        json.dumps({"schema": "generic", "points": [[4, 4], [11, 4], [8, 11]]})
    )
    csv_out = args.outdir / "sweep.csv"
    code = cli_main([
        "sweep-lambda",
        "--image", str(image),
        "--landmarks", str(landmarks),
        "--lambda-did-list", args.lambda_did_list,
        "--seeds", str(args.seeds),
        "--csv-out", str(csv_out),
        "--iterations", str(args.iterations),
        "--learning-rate", "0.5",
        "--gen-height", "8", "--gen-width", "8", "--latent-dim", "8",
    ])
    if code == 0:
        print(csv_out.read_text(), end="")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
