"""Command line interface: split, pseudo, verify, merge, eval, simulate.

Every command reads/writes plain JSON artifacts, is independently
restartable, and records a manifest with content digests so a rerun can be
checked for bit-identical outputs. Exit codes: 0 success, 1 validation
error, 2 backend/transport failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import requests

import verilabel
from verilabel import artifacts, config as config_mod
from verilabel.conformance import STUB_DATASET_JSON
from verilabel.errors import BackendError, InputError, TransientBackendError
from verilabel.ingest import parse_coco, parse_voc_xml, serialize_coco
from verilabel.manifest import dump_json, sha256_bytes, sha256_file, write_manifest
from verilabel.metrics import EvalConfig, EvalMode, evaluate
from verilabel.merge import merge_labels
from verilabel.model import Dataset
from verilabel.pipeline import run_simulation
from verilabel.protocol import DETECT_PATH, DetectionDocument
from verilabel.pseudo import (
    Verification,
    extract_pseudo_gts,
    read_detection_document,
    write_detection_document,
)
from verilabel.scenario import (
    TaskView,
    build_task_view,
    cumulative_categories,
    ordered_universe,
    parse_scenario,
)
from verilabel.synth import (
    SynthWorldConfig,
    SyntheticDetector,
    generate_world,
    known_ids_for_task,
    synth_categories,
    synthetic_detect,
)
from verilabel.verify import (
    HttpBackend,
    OracleBackend,
    UnparseablePolicy,
    verify_batch,
)

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; bad arguments are validation errors here
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _manifest_path(out_path: Path) -> Path:
    return Path(str(out_path) + ".manifest.json")


def _load_dataset(args: argparse.Namespace) -> Dataset:
    fmt = args.format
    if fmt == "coco":
        return parse_coco(Path(args.dataset).read_bytes())
    if fmt == "voc":
        xml_dir = Path(args.dataset)
        if not xml_dir.is_dir():
            raise InputError(f"--dataset {xml_dir} must be a directory of VOC XML files")
        paths = sorted(xml_dir.glob("*.xml"))
        if args.file_list:
            stems = [
                line.strip()
                for line in Path(args.file_list).read_text("utf-8").splitlines()
                if line.strip()
            ]
            by_stem = {p.stem: p for p in paths}
            missing = [s for s in stems if s not in by_stem]
            if missing:
                raise InputError(f"file list names missing XML documents: {missing[:5]}")
            paths = [by_stem[s] for s in stems]
        if not paths:
            raise InputError(f"no XML documents found under {xml_dir}")
        return parse_voc_xml([p.read_bytes() for p in paths])
    raise InputError(f"unknown dataset format {fmt!r}")


def _scenario_for(ds: Dataset, cfg: dict, category_order_file: str | None) -> "tuple":
    override = None
    if category_order_file:
        override = Path(category_order_file).read_text("utf-8").splitlines()
    order = "name" if ds.provenance == "voc" else "id"
    universe = ordered_universe(ds.categories, order=order, override_names=override)
    return parse_scenario(cfg["scenario"], universe), universe


def cmd_split(args: argparse.Namespace, cfg: dict) -> int:
    ds = _load_dataset(args)
    sc, _ = _scenario_for(ds, cfg, args.category_order)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs: dict[str, str] = {}
    for d in range(1, sc.num_tasks + 1):
        view = build_task_view(ds, sc, d)
        payload = serialize_coco(view.dataset)
        path = out_dir / f"task_{d:02d}.json"
        path.write_bytes(payload)
        outputs[str(path)] = sha256_bytes(payload)
        log.info("task %d: %d images, %d annotations", d, len(view.dataset.images),
                 view.dataset.annotation_count())
    write_manifest(
        out_dir / "split.manifest.json",
        command="split",
        version=verilabel.__version__,
        config={"scenario": cfg["scenario"], "format": args.format},
        inputs={str(args.dataset): _digest_of_input(args)},
        outputs=outputs,
        stats={"tasks": sc.num_tasks},
    )
    print(f"wrote {sc.num_tasks} task views to {out_dir}")
    return 0


def _digest_of_input(args: argparse.Namespace) -> str:
    p = Path(args.dataset)
    if p.is_dir():
        parts = [sha256_file(f) for f in sorted(p.glob("*.xml"))]
        return sha256_bytes("".join(parts).encode())
    return sha256_file(p)


def _fetch_detection(url: str, image_id, timeout: float = 30.0) -> dict:
    try:
        resp = requests.post(url + DETECT_PATH, json={"imageId": image_id}, timeout=timeout)
    except requests.RequestException as exc:
        raise TransientBackendError(f"POST {url}{DETECT_PATH} failed: {exc}") from exc
    if resp.status_code >= 500:
        raise TransientBackendError(f"{url}{DETECT_PATH} returned {resp.status_code}")
    if resp.status_code >= 400:
        raise BackendError(f"{url}{DETECT_PATH} rejected imageId {image_id!r}: {resp.status_code}")
    return DetectionDocument.model_validate(resp.json()).model_dump(by_alias=True)


def cmd_pseudo(args: argparse.Namespace, cfg: dict) -> int:
    task_ds = parse_coco(Path(args.task_file).read_bytes())
    tau = cfg["tau"]
    names = task_ds.category_names()
    inputs = {str(args.task_file): sha256_file(args.task_file)}

    documents = []
    if args.detections:
        det_dir = Path(args.detections)
        for im in task_ds.images:
            path = det_dir / f"{im.id}.json"
            if not path.exists():
                raise InputError(f"missing detector output for image {im.id!r}: {path}")
            try:
                documents.append((im, read_detection_document(path.read_bytes())))
            except InputError as exc:
                raise InputError(f"{path}: {exc}") from exc
            inputs[str(path)] = sha256_file(path)
    elif cfg["backend"]["url"]:
        base = cfg["backend"]["url"].rstrip("/")
        for im in task_ds.images:
            documents.append((im, read_detection_document(_fetch_detection(base, im.id))))
    else:
        raise InputError("detector outputs required: pass --detections DIR or --backend-url URL")

    def extract(pair):
        im, out = pair
        if out.image_id != im.id:
            raise InputError(f"detector output for {out.image_id!r} paired with image {im.id!r}")
        return extract_pseudo_gts(out, tau, im.width, im.height, names)

    jobs = int(cfg["jobs"])
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_image = list(pool.map(extract, documents))
    else:
        per_image = [extract(pair) for pair in documents]
    items = [p for group in per_image for p in group]

    out_path = Path(args.out)
    artifacts.write_pseudo_file(out_path, items, tau=tau, task_index=args.task_index)
    write_manifest(
        _manifest_path(out_path),
        command="pseudo",
        version=verilabel.__version__,
        config={"tau": tau, "taskIndex": args.task_index},
        inputs=inputs,
        outputs={str(out_path): sha256_file(out_path)},
        stats={"images": len(documents), "pseudoGTs": len(items)},
    )
    print(f"extracted {len(items)} pseudo GTs at tau={tau} -> {out_path}")
    return 0


def cmd_verify(args: argparse.Namespace, cfg: dict) -> int:
    items, _doc = artifacts.read_pseudo_file(args.pseudo_file)
    task_ds = parse_coco(Path(args.task_file).read_bytes())
    images = task_ds.images_by_id()
    backend_cfg = cfg["backend"]

    if backend_cfg["oracle"]:
        if not args.gt:
            raise InputError("--oracle requires --gt with the reference annotations")
        gt_ds = parse_coco(Path(args.gt).read_bytes())
        backend = OracleBackend(
            {im.id: im.annotations for im in gt_ds.images},
            iou_thresh=backend_cfg["iou_thresh"],
            flip_prob=backend_cfg["flip_prob"],
            seed=cfg["seed"],
        )
    elif backend_cfg["url"]:
        backend = HttpBackend(backend_cfg["url"])
    else:
        raise InputError("verification backend required: pass --oracle or --backend-url URL")

    policy = UnparseablePolicy(backend_cfg["unparseable_policy"])
    outcome = verify_batch(
        items,
        images,
        backend,
        grid_w=cfg["grid"]["w"],
        grid_h=cfg["grid"]["h"],
        policy=policy,
        max_retries=backend_cfg["retries"],
        jobs=cfg["jobs"],
    )
    accepted = [p for p in outcome.items if p.verification is Verification.ACCEPTED]

    backend_id = "oracle" if backend_cfg["oracle"] else backend_cfg["url"]
    out_path = Path(args.out)
    artifacts.write_pseudo_file(
        out_path,
        accepted,
        tau=_doc.get("tau", cfg["tau"]),
        task_index=_doc.get("taskIndex"),
        backend=backend_id,
        verdicts=outcome.verdicts,
        unparseable_count=outcome.unparseable_count,
    )
    inputs = {
        str(args.pseudo_file): sha256_file(args.pseudo_file),
        str(args.task_file): sha256_file(args.task_file),
    }
    if args.gt:
        inputs[str(args.gt)] = sha256_file(args.gt)
    write_manifest(
        _manifest_path(out_path),
        command="verify",
        version=verilabel.__version__,
        config={
            "backend": backend_id,
            "policy": policy.value,
            "grid": cfg["grid"],
            "seed": cfg["seed"],
        },
        inputs=inputs,
        outputs={str(out_path): sha256_file(out_path)},
        stats={
            "input": len(items),
            "accepted": len(accepted),
            "rejected": len(items) - len(accepted),
            "unparseableWarnings": outcome.unparseable_count,
        },
    )
    print(f"accepted {len(accepted)}/{len(items)} pseudo GTs -> {out_path}")
    return 0


def cmd_merge(args: argparse.Namespace, cfg: dict) -> int:
    task_ds = parse_coco(Path(args.task_file).read_bytes())
    items, doc = artifacts.read_pseudo_file(args.refined_file)
    task_index = doc.get("taskIndex")
    # The task view file contains only current-task annotations, so the
    # categories it uses are exactly the visible set.
    visible = frozenset(a.category_id for im in task_ds.images for a in im.annotations)
    view_like = TaskView(task_index=task_index or 0, dataset=task_ds, visible_categories=visible)
    accepted: dict = {}
    for p in items:
        accepted.setdefault(p.annotation.source_image_id, []).append(p)
    merged = merge_labels(view_like, accepted, nms_iou=cfg["nms_iou"])
    payload = serialize_coco(merged)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(payload)
    write_manifest(
        _manifest_path(out_path),
        command="merge",
        version=verilabel.__version__,
        config={
            "scenario": cfg["scenario"],
            "taskIndex": task_index,
            "tau": doc.get("tau"),
            "backend": doc.get("backend"),
            "seed": cfg["seed"],
            "nmsIoU": cfg["nms_iou"],
        },
        inputs={
            str(args.task_file): sha256_file(args.task_file),
            str(args.refined_file): sha256_file(args.refined_file),
        },
        outputs={str(out_path): sha256_bytes(payload)},
        stats={"annotations": merged.annotation_count()},
    )
    print(f"merged dataset with {merged.annotation_count()} annotations -> {out_path}")
    return 0


def cmd_eval(args: argparse.Namespace, cfg: dict) -> int:
    gt_ds = parse_coco(Path(args.gt).read_bytes())
    dets = artifacts.read_detections_file(args.detections)
    mode = EvalMode(cfg["eval"]["mode"])
    eval_cfg = (
        EvalConfig.coco() if mode is EvalMode.COCO else EvalConfig.voc(cfg["eval"]["voc_11pt"])
    )
    report = evaluate(dets, gt_ds, eval_cfg)
    out_path = Path(args.out) if args.out else None
    if out_path is not None:
        dump_json(report.to_dict(), out_path)
        outputs = {str(out_path): sha256_file(out_path)}
        if args.csv:
            csv_path = Path(args.csv)
            csv_path.parent.mkdir(parents=True, exist_ok=True)
            names = gt_ds.category_names()
            rows = ["categoryId,categoryName,ap"]
            rows += [
                f"{cid},{names.get(cid, '')},{ap:.6f}"
                for cid, ap in sorted(report.per_class_ap.items())
            ]
            csv_path.write_text("\n".join(rows) + "\n", "utf-8")
            outputs[str(csv_path)] = sha256_file(csv_path)
        write_manifest(
            _manifest_path(out_path),
            command="eval",
            version=verilabel.__version__,
            config={"mode": mode.value, "voc11pt": cfg["eval"]["voc_11pt"]},
            inputs={
                str(args.gt): sha256_file(args.gt),
                str(args.detections): sha256_file(args.detections),
            },
            outputs=outputs,
        )
    print(report.render_table(gt_ds.category_names()))
    return 0


def _world_config(cfg: dict) -> SynthWorldConfig:
    synth_cfg = cfg["synth"]
    return SynthWorldConfig(
        num_classes=synth_cfg["num_classes"],
        images_per_task=synth_cfg["images_per_task"],
        objects_per_image=synth_cfg["objects_per_image"],
        image_size=tuple(synth_cfg["image_size"]),
        seed=cfg["seed"],
        recall_decay=synth_cfg["recall_decay"],
        hallucination_rate=synth_cfg["hallucination_rate"],
        box_jitter=synth_cfg["box_jitter"],
        score_noise=synth_cfg["score_noise"],
    )


def cmd_synth_world(args: argparse.Namespace, cfg: dict) -> int:
    """Write a synthetic world plus stale-detector outputs for each task."""
    world_cfg = _world_config(cfg)
    sc = parse_scenario(cfg["scenario"], [c.id for c in synth_categories(world_cfg.num_classes)])
    world = generate_world(world_cfg, num_tasks=sc.num_tasks)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    world_path = out_dir / "world.json"
    payload = serialize_coco(world)
    world_path.write_bytes(payload)
    outputs = {str(world_path): sha256_bytes(payload)}

    by_id = world.images_by_id()
    for d in range(2, sc.num_tasks + 1):
        view = build_task_view(world, sc, d)
        known = known_ids_for_task(world.categories, cumulative_categories(sc, d - 1))
        detector = SyntheticDetector(known_category_ids=known, trained_at_task=d - 1,
                                     config=world_cfg)
        det_dir = out_dir / "detections" / f"task_{d:02d}"
        for im in view.dataset.images:
            out = synthetic_detect(detector, by_id[im.id], staleness=d - 1)
            path = dump_json(write_detection_document(out), det_dir / f"{im.id}.json")
            outputs[str(path)] = sha256_file(path)
    write_manifest(
        out_dir / "synth-world.manifest.json",
        command="synth-world",
        version=verilabel.__version__,
        config={"seed": cfg["seed"], "scenario": cfg["scenario"], "synth": cfg["synth"]},
        inputs={},
        outputs=outputs,
    )
    print(f"wrote world ({len(world.images)} images) and detector outputs to {out_dir}")
    return 0


def cmd_simulate(args: argparse.Namespace, cfg: dict) -> int:
    world_cfg = _world_config(cfg)
    arms = ("unfiltered",) if args.no_verify else ("unfiltered", "filtered")
    result = run_simulation(
        world_cfg,
        cfg["scenario"],
        tau=cfg["tau"],
        oracle_iou=cfg["backend"]["iou_thresh"],
        flip_prob=cfg["backend"]["flip_prob"],
        nms_iou=cfg["nms_iou"],
        jobs=cfg["jobs"],
        arms=arms,
    )
    print(result.comparison_table())
    if args.out:
        out_dir = Path(args.out)
        outputs: dict[str, str] = {}
        comparison = dump_json(result.to_dict(), out_dir / "comparison.json")
        outputs[str(comparison)] = sha256_file(comparison)
        for (arm, d), merged in sorted(result.merged.items()):
            path = out_dir / "merged" / arm / f"task_{d:02d}.json"
            path.parent.mkdir(parents=True, exist_ok=True)
            payload = serialize_coco(merged)
            path.write_bytes(payload)
            outputs[str(path)] = sha256_bytes(payload)
        write_manifest(
            out_dir / "simulate.manifest.json",
            command="simulate",
            version=verilabel.__version__,
            config={
                "seed": cfg["seed"],
                "scenario": cfg["scenario"],
                "tau": cfg["tau"],
                "synth": cfg["synth"],
                "arms": list(arms),
            },
            inputs={},
            outputs=outputs,
        )
    return 0


def cmd_stub_dataset(args: argparse.Namespace, cfg: dict) -> int:
    Path(args.out).write_text(STUB_DATASET_JSON, "utf-8")
    print(f"wrote conformance stub dataset -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="verilabel", description=__doc__)
    parser.add_argument("--version", action="version", version=f"verilabel {verilabel.__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--tau", type=float, default=None)
        p.add_argument("--scenario", default=None)
        p.add_argument("--backend-url", default=None)
        p.add_argument("--oracle", action="store_true", default=None)
        p.add_argument("--jobs", type=int, default=None)
        p.add_argument("--voc-11pt", action="store_true", default=None)
        p.add_argument("--nms-iou", type=float, default=None)
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("split", help="slice a dataset into task views")
    common(p)
    p.add_argument("--dataset", required=True, help="COCO JSON file or VOC XML directory")
    p.add_argument("--format", choices=("coco", "voc"), default="coco")
    p.add_argument("--file-list", help="optional list of VOC stems, one per line")
    p.add_argument("--category-order", help="optional category name order file, one per line")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("pseudo", help="extract pseudo GTs from detector outputs")
    common(p)
    p.add_argument("--task-file", required=True, help="task view produced by split")
    p.add_argument("--task-index", type=int, default=None)
    p.add_argument("--detections", help="directory of per-image detector JSON documents")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pseudo)

    p = sub.add_parser("verify", help="verify pseudo GTs against a backend")
    common(p)
    p.add_argument("--pseudo-file", required=True)
    p.add_argument("--task-file", required=True)
    p.add_argument("--gt", help="reference annotations for the oracle backend")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("merge", help="merge accepted pseudo GTs with task labels")
    common(p)
    p.add_argument("--task-file", required=True)
    p.add_argument("--refined-file", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("eval", help="score detections against ground truth")
    common(p)
    p.add_argument("--gt", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--mode", choices=("voc", "coco"), default=None)
    p.add_argument("--out")
    p.add_argument("--csv", help="optional per-class AP CSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth-world", help="write a synthetic world and detector outputs")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth_world)

    p = sub.add_parser("simulate", help="full multi-task run on a synthetic world")
    common(p)
    p.add_argument("--out", help="output directory for artifacts")
    p.add_argument("--no-verify", action="store_true", help="run the unfiltered arm only")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stub-dataset", help="write the conformance stub ground truth")
    common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stub_dataset)

    return parser


def _cli_overrides(args: argparse.Namespace) -> dict:
    mapping = {
        "seed": "seed",
        "tau": "tau",
        "scenario": "scenario",
        "jobs": "jobs",
        "backend_url": "backend.url",
        "oracle": "backend.oracle",
        "voc_11pt": "eval.voc_11pt",
        "nms_iou": "nms_iou",
    }
    overrides = {}
    for attr, dotted in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[dotted] = value
    if getattr(args, "mode", None):
        overrides["eval.mode"] = args.mode
    return overrides


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = config_mod.resolve_config(getattr(args, "config", None), _cli_overrides(args))
        return args.func(args, cfg)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
