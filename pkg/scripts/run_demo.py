"""End-to-end demo: synthesize a small corpus, run oracle inference over it,
and evaluate the predictions (which come back pixel-perfect by construction).

    python scripts/run_demo.py --workdir /tmp/mapseg-demo [--count 5]

Swap the oracle for the color heuristic with --backend heuristic to see a
non-trivial score, or point --backend extern:CMD at any process speaking
the stdio wire protocol (e.g. the neural adapter).
"""

import argparse
import json
from pathlib import Path
import sys
import time

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from mapseg.cli import main as mapseg_main  # noqa: E402


def run(args_list):
    code = mapseg_main(args_list)
    if code != 0:
        raise SystemExit(f"step failed with exit code {code}: {args_list}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", required=True)
    ap.add_argument("--count", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--backend", default="oracle", choices=["oracle", "heuristic"])
    args = ap.parse_args()

    work = Path(args.workdir)
    samples = work / "samples"
    preds = work / "preds"
    preds.mkdir(parents=True, exist_ok=True)

    t0 = time.time()
    run(["synth", "--count", str(args.count), "--seed", str(args.seed),
         "--out", str(samples)])
    print(f"synthesized {args.count} samples in {time.time() - t0:.1f}s")

    backend = f"oracle:{samples}" if args.backend == "oracle" else "heuristic:"
    for img in sorted(samples.glob("*.jpg")):
        run(["infer", "--input", str(img), "--backend", backend,
             "--out", str(preds / f"{img.stem}.mask.png")])
    print(f"inferred {args.count} masks with the {args.backend} backend")

    report = work / "report.json"
    run(["eval", "--pred", str(preds), "--gt", str(samples),
         "--strategy", "sample-normalized-macro", "--report", str(report),
         "--confusion", str(work / "confusion.csv")])
    scores = json.loads(report.read_text())
    print(f"report: {report}  (mIoU {scores['miou']:.4f}, Acc {scores['acc']:.4f})")


if __name__ == "__main__":
    main()
