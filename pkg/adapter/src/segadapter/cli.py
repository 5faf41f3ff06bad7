"""Command line: configure the model and start the protocol loop.

    segadapter --model identity
    segadapter --model torchvision:lraspp_mobilenet_v3_large --device cpu
    segadapter --model torchvision:deeplabv3_resnet50 --weights ckpt.pt \
               --class-map 0,1,2,3,4,5
    segadapter --model torchscript:model.pt --patch 768
"""

from __future__ import annotations

import argparse
import logging
import sys

from .models import AdapterConfig, ModelError
from .serve import serve


def _parse_class_map(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"class map must be comma-separated ints, got {text!r}")


def _parse_patch(text: str):
    if text == "any":
        return None
    return int(text)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="segadapter", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--model", default="identity",
                    help="identity | torchvision:NAME | torchscript:PATH")
    ap.add_argument("--weights", default=None, help="state-dict file for torchvision models")
    ap.add_argument("--device", default="cpu")
    ap.add_argument("--patch", type=_parse_patch, default=768,
                    help="required tile size (default 768; 'any' lifts the check)")
    ap.add_argument("--class-map", type=_parse_class_map, default=(0, 1, 2, 3, 4, 5),
                    help="model output channel feeding each of the 6 canonical classes")
    ap.add_argument("--model-classes", type=int, default=6,
                    help="output channels to build torchvision models with")
    ap.add_argument("--no-normalize", action="store_true",
                    help="skip ImageNet input normalization")
    ap.add_argument("--concurrent-safe", action="store_true",
                    help="advertise concurrency in the handshake")
    ap.add_argument("--log-level", default="INFO",
                    choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    args = ap.parse_args(argv)

    logging.basicConfig(level=getattr(logging, args.log_level), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = AdapterConfig(
            model=args.model,
            weights=args.weights,
            device=args.device,
            patch=args.patch,
            class_map=args.class_map,
            model_classes=args.model_classes,
            normalize=not args.no_normalize,
            concurrent_safe=args.concurrent_safe,
        )
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return serve(config)


if __name__ == "__main__":
    raise SystemExit(main())
