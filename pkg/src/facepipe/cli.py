"""Command-line frontend for the pipeline's offline stages.

Exit codes: 0 success, 2 usage errors (bad flags, unknown subcommand),
3 malformed input files, 4 runtime failures (missing files, invalid
configurations, search errors). Report-producing commands accept --csv to
emit machine-readable output instead of text; every command accepts
--seed even when it has no random step.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path


from . import __version__
from .augment import AugmentConfig, multiscale_augment
from .bench import (
    TIMING_NOTE,
    FrameStreamConfig,
    StreamKind,
    bench_compare,
    format_report,
    format_reports_csv,
    simulate_stream,
)
from .detect import AnchorConfig, nms, read_scored_boxes
from .errors import FacepipeError, FileFormatError, ParseError
from .filters import median_filter, wiener_restore
from .hnsw import HnswIndex, HnswParams
from .library import (
    build_library,
    index_library,
    load_library,
    read_bulk_embeddings,
    read_embedding_file,
    save_library,
)
from .matcheval import read_pairs_file, threshold_sweep
from .model import cosine_similarity_arrays
from .raster import read_annotations, read_image, write_annotations, write_image
from .secondary import CombineOp, SecondaryConfig, secondary_search

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_RUNTIME = 4


def _add_seed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="RNG seed (accepted everywhere, used where noted)")


def _add_csv(p: argparse.ArgumentParser) -> None:
    p.add_argument("--csv", action="store_true", help="emit the report as CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facepipe",
        description="Offline tools for the face retrieval pipeline.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enhance", help="run the image enhancement chain on a PGM/PPM file")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--median-window", type=int, default=3)
    p.add_argument("--wiener-window", type=int, default=3)
    p.add_argument(
        "--noise-variance", type=float, default=None,
        help="noise power on the unit scale; estimated from the image when omitted",
    )
    _add_seed(p)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("augment", help="write random multi-scale crops of an annotated image")
    p.add_argument("image")
    p.add_argument("annotations")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--crop-size", type=int, default=320)
    p.add_argument("--crops", type=int, default=25)
    p.add_argument("--min-overlap", type=float, default=0.5)
    _add_seed(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("anchors", help="count and describe the anchor grid")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--profile", choices=["faster", "baseline"], default="faster")
    p.add_argument("--strides", type=int, nargs="+", default=None,
                   help="explicit stride list (overrides --profile)")
    _add_csv(p)
    _add_seed(p)
    p.set_defaults(func=cmd_anchors)

    p = sub.add_parser("nms", help="suppress overlapping scored boxes")
    p.add_argument("boxes_file")
    p.add_argument("--iou", type=float, default=0.4)
    p.add_argument("--score", type=float, default=None,
                   help="drop boxes scoring below this before suppression")
    _add_csv(p)
    _add_seed(p)
    p.set_defaults(func=cmd_nms)

    p = sub.add_parser("lib", help="feature library operations")
    lib_sub = p.add_subparsers(dest="lib_command", required=True)
    pb = lib_sub.add_parser("build", help="build a library from a bulk text file")
    pb.add_argument("bulk_file")
    pb.add_argument("--out", required=True)
    _add_seed(pb)
    pb.set_defaults(func=cmd_lib_build)

    p = sub.add_parser("index", help="search index operations")
    idx_sub = p.add_subparsers(dest="index_command", required=True)
    pi = idx_sub.add_parser("build", help="build a search index over a saved library")
    pi.add_argument("library")
    pi.add_argument("--out", required=True)
    pi.add_argument("--m", type=int, default=16)
    pi.add_argument("--efc", type=int, default=200)
    _add_seed(pi)
    pi.set_defaults(func=cmd_index_build)

    p = sub.add_parser("query", help="search an index with one embedding")
    p.add_argument("index")
    p.add_argument("library")
    p.add_argument("embedding")
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--ef", type=int, default=None)
    p.add_argument("--secondary", action="store_true", help="use the two-pass search")
    p.add_argument("--combine", choices=["and", "or"], default="or")
    p.add_argument("--expansion", type=int, default=3)
    p.add_argument("--threshold", type=float, default=None,
                   help="also apply the identification threshold to the top hit")
    _add_csv(p)
    _add_seed(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("sweep", help="threshold sweep over a labeled pair list")
    p.add_argument("pairs_file")
    p.add_argument("--thresholds", type=float, nargs="+", required=True)
    _add_csv(p)
    _add_seed(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="compare graph search against the exhaustive scan")
    p.add_argument("index")
    p.add_argument("library")
    p.add_argument("--stream", choices=["simple", "complex"], default="simple")
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--ef", type=int, default=None)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--parallel", action="store_true",
                   help="spread frames over threads; frames are still timed individually")
    p.add_argument("--secondary", action="store_true")
    p.add_argument("--combine", choices=["and", "or"], default="or")
    p.add_argument("--expansion", type=int, default=3)
    _add_csv(p)
    _add_seed(p)
    p.set_defaults(func=cmd_bench)

    return parser


# ----------------------------------------------------------------------
# handlers

def cmd_enhance(args) -> int:
    img = read_image(args.input)
    out = median_filter(img, window=args.median_window)
    out = wiener_restore(out, window=args.wiener_window, noise_variance=args.noise_variance)
    # The final normalization step feeds the recognizer, not pixel files;
    # the written image is the restored stage quantized back to 8 bits.
    write_image(args.output, out)
    return EXIT_OK


def cmd_augment(args) -> int:
    img = read_image(args.image)
    anns = read_annotations(args.annotations)
    config = AugmentConfig(
        crop_size=args.crop_size,
        crops_per_image=args.crops,
        min_face_overlap=args.min_overlap,
        rng_seed=args.seed,
    )
    crops = multiscale_augment(img, anns, config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ext = "pgm" if img.channels == 1 else "ppm"
    for i, crop in enumerate(crops):
        stem = out_dir / f"crop_{i:03d}"
        write_image(stem.with_suffix(f".{ext}"), crop.image)
        # invalid faces carry no usable box, so sidecars keep valid ones only
        write_annotations(stem.with_suffix(".txt"), [a for a in crop.annotations if a.valid])
    print(f"wrote {len(crops)} crops to {out_dir}")
    return EXIT_OK


def cmd_anchors(args) -> int:
    kw = {}
    if args.strides is not None:
        kw["strides"] = tuple(args.strides)
        config = AnchorConfig(args.width, args.height, **kw)
    elif args.profile == "faster":
        config = AnchorConfig.faster(args.width, args.height)
    else:
        config = AnchorConfig.baseline(args.width, args.height)
    rows = []
    for s in config.strides:
        cols = config.input_width // s
        cells_rows = config.input_height // s
        n_scales = len(config.scales_per_stride[s])
        rows.append((s, cols, cells_rows, n_scales, cols * cells_rows * n_scales))
    if args.csv:
        print("stride,cells_x,cells_y,scales,anchors")
        for r in rows:
            print(",".join(str(v) for v in r))
    else:
        for s, cx, cy, ns, count in rows:
            print(f"stride {s}: {count} anchors ({cx}x{cy} cells, {ns} scales)")
        print(f"total {config.anchor_count()}")
    return EXIT_OK


def cmd_nms(args) -> int:
    boxes, scores = read_scored_boxes(args.boxes_file)
    keep = nms(boxes, scores, iou_threshold=args.iou, score_threshold=args.score)
    if args.csv:
        print("x_min,y_min,x_max,y_max,score")
        for i in keep:
            print(",".join(repr(float(v)) for v in (*boxes[i], scores[i])))
    else:
        for i in keep:
            print(" ".join(repr(float(v)) for v in (*boxes[i], scores[i])))
    return EXIT_OK


def cmd_lib_build(args) -> int:
    entries = read_bulk_embeddings(args.bulk_file)
    lib = build_library(entries, source_manifest=str(args.bulk_file))
    save_library(lib, args.out)
    print(f"library: {len(lib)} records, dimension {lib.dimension} -> {args.out}")
    return EXIT_OK


def cmd_index_build(args) -> int:
    lib = load_library(args.library)
    params = HnswParams(m=args.m, ef_construction=args.efc, rng_seed=args.seed)
    started = time.perf_counter()
    index, _ = index_library(lib, params)
    elapsed = time.perf_counter() - started
    index.save(args.out)
    print(
        f"indexed {len(index)} vectors in {elapsed:.1f}s "
        f"(m={params.m}, efc={params.ef_construction}, backend={index.backend}) -> {args.out}"
    )
    return EXIT_OK


def cmd_query(args) -> int:
    index = HnswIndex.load(args.index)
    lib = load_library(args.library)
    labels = lib.label_map()
    q = read_embedding_file(args.embedding)
    if args.secondary:
        config = SecondaryConfig(
            k=args.k,
            expansion_count=args.expansion,
            ef_first=args.ef,
            ef_second=args.ef,
            combine=CombineOp(args.combine),
        )
        result = secondary_search(index, q, config)
    else:
        result = index.knn_search(q, args.k, ef=args.ef)

    rows = []
    for rank, hit in enumerate(result.hits, start=1):
        sim = cosine_similarity_arrays(q, index.vector(hit.id))
        sim = min(max(sim, -1.0), 1.0)
        rows.append((rank, hit.id, labels.get(hit.id, "?"), hit.distance, sim))

    verdict = None
    if args.threshold is not None:
        if rows and rows[0][4] >= args.threshold:
            verdict = rows[0][2]
        else:
            verdict = "unknown"

    if args.csv:
        print("rank,id,identity,distance,similarity")
        for rank, hid, ident, dist, sim in rows:
            print(f"{rank},{hid},{ident},{dist!r},{sim!r}")
    else:
        if verdict is not None:
            print(f"identity: {verdict}")
        for rank, hid, ident, dist, sim in rows:
            print(f"{rank:3d}  id={hid}  {ident}  distance={dist:.6f}  similarity={sim:.6f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    pairs = read_pairs_file(args.pairs_file)
    rows = threshold_sweep(pairs, args.thresholds)
    if args.csv:
        print("threshold,same_correct,same_wrong,diff_correct,diff_wrong,noface,accuracy")
        for r in rows:
            print(
                f"{r.threshold!r},{r.same_correct},{r.same_wrong},"
                f"{r.diff_correct},{r.diff_wrong},{r.noface},{r.accuracy!r}"
            )
    else:
        print(f"{len(pairs)} pairs")
        for r in rows:
            print(
                f"threshold {r.threshold:.3f}: accuracy {r.accuracy:.4f} "
                f"(same {r.same_correct}/{r.same_correct + r.same_wrong}, "
                f"diff {r.diff_correct}/{r.diff_correct + r.diff_wrong}, "
                f"noface {r.noface})"
            )
    return EXIT_OK


def cmd_bench(args) -> int:
    index = HnswIndex.load(args.index)
    lib = load_library(args.library)
    stream_config = FrameStreamConfig(
        frame_count=args.frames,
        kind=StreamKind(args.stream),
        query_noise_sigma=args.sigma,
        rng_seed=args.seed,
    )
    stream = simulate_stream(lib, stream_config)
    secondary = None
    if args.secondary:
        secondary = SecondaryConfig(
            k=args.k,
            expansion_count=args.expansion,
            ef_first=args.ef,
            ef_second=args.ef,
            combine=CombineOp(args.combine),
        )
    graph_report, scan_report = bench_compare(
        index, lib, stream,
        k=args.k, ef=args.ef, repetitions=args.reps,
        secondary=secondary, parallel=args.parallel,
    )
    if args.csv:
        print(TIMING_NOTE, file=sys.stderr)
        sys.stdout.write(format_reports_csv([graph_report, scan_report]))
    else:
        print(TIMING_NOTE)
        print()
        print(format_report(graph_report))
        print(format_report(scan_report))
        ratio = scan_report.mean_ms / graph_report.mean_ms if graph_report.mean_ms > 0 else float("inf")
        print(f"mean per-frame speedup: {ratio:.2f}x")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (ParseError, FileFormatError) as exc:
        print(f"facepipe: bad input file: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (FacepipeError, ValueError, OSError) as exc:
        print(f"facepipe: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
