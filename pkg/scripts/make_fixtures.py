"""Write demo scene fixtures (NDJSON features + 16-bit elevation PNGs).

    python scripts/make_fixtures.py --out fixtures/ --count 6 --seed 777

The resulting directory can be passed to `mapseg synth --features`.
"""

import argparse
from pathlib import Path
import sys

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from mapseg.fixtures import write_demo_fixtures  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True)
    ap.add_argument("--count", type=int, default=6)
    ap.add_argument("--seed", type=int, default=777)
    args = ap.parse_args()
    names = write_demo_fixtures(args.out, count=args.count, base_seed=args.seed)
    print(f"wrote {len(names)} scenes to {args.out}: {', '.join(names)}")


if __name__ == "__main__":
    main()
