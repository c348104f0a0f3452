"""Run the adapter service: ``python -m verilabel_adapter --gt gt.json``."""

from __future__ import annotations

import argparse
import sys

import uvicorn

from verilabel_adapter.app import Settings, create_app


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="verilabel-adapter", description=__doc__)
    parser.add_argument("--mode", choices=("stub", "model"), default="stub")
    parser.add_argument("--gt", help="COCO-style ground truth file (stub mode)")
    parser.add_argument("--model", help="model factory as package.module:factory (model mode)")
    parser.add_argument("--iou-thresh", type=float, default=0.5)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8081)
    args = parser.parse_args(argv)

    settings = Settings(
        mode=args.mode,
        gt_path=args.gt,
        iou_thresh=args.iou_thresh,
        model_spec=args.model,
    )
    try:
        app = create_app(settings)
    except RuntimeError as exc:
        print(f"startup aborted: {exc}", file=sys.stderr)
        return 1
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
