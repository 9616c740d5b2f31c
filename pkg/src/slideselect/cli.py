"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error. Every command writes a
JSON run manifest (command, option snapshot, sha256 of each input, tool
version) next to its primary output, so runs can be reproduced bit-exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import sys
from pathlib import Path

import click
import numpy as np

import slideselect
from slideselect.captions import (
    KeywordQuery,
    apply_exclusions,
    keyword_search,
    review_report,
    split_subcaptions,
)
from slideselect.container import (
    CaptionRecord,
    EmbeddingContainer,
    check_grid_pair,
    read_captions,
    read_container,
    read_grid_meta,
    read_mask,
    read_regions,
    write_captions,
    write_container,
    write_grid_meta,
    write_mask,
    write_regions,
)
from slideselect.errors import SlideSelectError, ValidationError
from slideselect.evaluate import (
    BlobSpec,
    CSV_COLUMNS,
    GroundTruth,
    coverage_metrics,
    gen_synthetic_wsi,
    metrics_to_result,
    run_sweep,
    write_sweep_csv,
    SweepEntry,
)
from slideselect.prototypes import build_prototype_set, top_k_retrieval
from slideselect.rng import stream_for
from slideselect.selection import (
    SelectionConfig,
    select_adaptive,
    select_diversity,
    select_random,
    select_standard,
)
from slideselect.simmap import build_similarity_map, read_map, render_map, write_map

STRATEGY_FLAGS = {
    "random": "random",
    "diversity": "diversity",
    "proto-standard": "proto_standard",
    "proto-adaptive": "proto_adaptive",
}


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(command: str, params: dict, inputs, out: str, manifest_out: str | None):
    digests = {}
    for p in inputs:
        if p and Path(p).exists():
            digests[str(p)] = _sha256(p)
    manifest = {
        "command": command,
        "params": {k: v for k, v in sorted(params.items())},
        "inputs": digests,
        "version": slideselect.__version__,
    }
    path = Path(manifest_out) if manifest_out else Path(str(out) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


@click.group()
@click.option("--threads", type=int, default=None, help="Worker threads (results are identical for any value).")
@click.option("--seed", type=int, default=0, help="Global seed; command-level seeds override.")
@click.option("--quiet", is_flag=True, help="Suppress informational output.")
@click.option("--manifest-out", type=click.Path(), default=None, help="Run manifest path (default: <out>.manifest.json).")
@click.pass_context
def cli(ctx, threads, seed, quiet, manifest_out):
    """Annotation-region selection for whole-slide images."""
    ctx.ensure_object(dict)
    ctx.obj.update(threads=threads, seed=seed, quiet=quiet, manifest_out=manifest_out)


def _echo(ctx, message):
    if not ctx.obj.get("quiet"):
        click.echo(message)


@cli.command("search-captions")
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--with", "with_groups", multiple=True, required=True,
              help="Synonym group; '|' separates synonyms. Repeat per group.")
@click.option("--without", "without_groups", multiple=True,
              help="Exclusion synonym group; repeatable.")
@click.option("--exclude-ids", type=click.Path(exists=True), default=None,
              help="File with one record id per line to drop after review.")
@click.option("--split-subcaptions", "split", is_flag=True)
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def search_captions_cmd(ctx, corpus, with_groups, without_groups, exclude_ids, split, out):
    """Find prototype candidates by keyword search over a caption corpus."""
    records = read_captions(corpus)
    if split:
        expanded = []
        for rec in records:
            for sub in split_subcaptions(rec):
                sid = rec.id if sub.subfigure_id == "full" else f"{rec.id}:{sub.subfigure_id}"
                expanded.append(
                    CaptionRecord(id=sid, caption=sub.text, source=rec.source,
                                  parent_caption=rec.caption)
                )
        records = expanded
    query = KeywordQuery(
        with_groups=[g.split("|") for g in with_groups],
        without_groups=[g.split("|") for g in without_groups],
    )
    matches = keyword_search(records, query)
    _echo(ctx, review_report(matches))
    if exclude_ids:
        ids = [line.strip() for line in Path(exclude_ids).read_text().splitlines() if line.strip()]
        matches = apply_exclusions(matches, ids)
    write_captions(matches, out)
    _write_manifest("search-captions",
                    dict(corpus=corpus, with_groups=list(with_groups),
                         without_groups=list(without_groups),
                         exclude_ids=exclude_ids, split=split, out=out),
                    [corpus, exclude_ids], out, ctx.obj["manifest_out"])


@cli.command("retrieve-prototypes")
@click.option("--database", required=True, type=click.Path(exists=True))
@click.option("--query", required=True, type=click.Path(exists=True))
@click.option("--k", type=int, default=100, show_default=True)
@click.option("--out-ids", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def retrieve_prototypes_cmd(ctx, database, query, k, out_ids, out):
    """Top-k database rows by cosine similarity to a prompt embedding."""
    db = read_container(database)
    q = read_container(query)
    if q.rows != 1:
        raise ValidationError(f"query container must have exactly 1 row, got {q.rows}")
    hits = top_k_retrieval(q.values[0], db.values, k)
    indices = [i for i, _ in hits]
    Path(out_ids).write_text("".join(f"{i}\n" for i in indices))
    pset = build_prototype_set("retrieved", db.values[indices], [str(i) for i in indices])
    write_container(pset.embeddings.astype(np.float32), True, out)
    _write_manifest("retrieve-prototypes",
                    dict(database=database, query=query, k=k, out_ids=out_ids, out=out),
                    [database, query], out, ctx.obj["manifest_out"])


@cli.command("build-prototypes")
@click.option("--from-ids", required=True, type=click.Path(exists=True),
              help="File with one embedding row index per line.")
@click.option("--embeddings", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def build_prototypes_cmd(ctx, from_ids, embeddings, out):
    """Gather rows by index into a normalized prototype container."""
    container = read_container(embeddings)
    ids = [line.strip() for line in Path(from_ids).read_text().splitlines() if line.strip()]
    try:
        indices = [int(i) for i in ids]
    except ValueError as exc:
        raise ValidationError(f"{from_ids}: ids must be integer row indices: {exc}") from exc
    if any(i < 0 or i >= container.rows for i in indices):
        raise ValidationError(f"{from_ids}: row index out of range 0..{container.rows - 1}")
    pset = build_prototype_set("selected", container.values[indices], ids)
    write_container(pset.embeddings.astype(np.float32), True, out)
    _write_manifest("build-prototypes",
                    dict(from_ids=from_ids, embeddings=embeddings, out=out),
                    [from_ids, embeddings], out, ctx.obj["manifest_out"])


@cli.command("build-map")
@click.option("--grid", required=True, type=click.Path(exists=True))
@click.option("--meta", required=True, type=click.Path(exists=True))
@click.option("--prototypes", required=True, type=click.Path(exists=True))
@click.option("--tissue-mask", "tissue", type=click.Path(exists=True), default=None)
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def build_map_cmd(ctx, grid, meta, prototypes, tissue, out):
    """Similarity map of a patch-embedding grid against prototypes."""
    container = read_container(grid)
    grid_meta = read_grid_meta(meta)
    check_grid_pair(container, grid_meta)
    proto = read_container(prototypes)
    pset = build_prototype_set("prototypes", proto.values,
                               [str(i) for i in range(proto.rows)])
    mask = read_mask(tissue) if tissue else None
    smap = build_similarity_map(container, grid_meta, pset, tissue_mask=mask)
    write_map(smap, out)
    _write_manifest("build-map",
                    dict(grid=grid, meta=meta, prototypes=prototypes,
                         tissue_mask=tissue, out=out),
                    [grid, meta, prototypes, tissue], out, ctx.obj["manifest_out"])


@cli.command("select")
@click.option("--strategy", required=True, type=click.Choice(sorted(STRATEGY_FLAGS)))
@click.option("--map", "map_path", type=click.Path(exists=True), default=None)
@click.option("--meta", required=True, type=click.Path(exists=True))
@click.option("--tissue-mask", "tissue", type=click.Path(exists=True), default=None)
@click.option("--grids", type=str, default=None,
              help="Comma-separated grid containers for diversity (all slides).")
@click.option("--n", type=int, default=3, show_default=True)
@click.option("--l", "l_px", type=int, default=8192, show_default=True)
@click.option("--seed", type=int, default=None, help="Overrides the global seed.")
@click.option("--min-tissue-fraction", type=float, default=0.10, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def select_cmd(ctx, strategy, map_path, meta, tissue, grids, n, l_px, seed,
               min_tissue_fraction, out):
    """Select annotation regions with the given strategy."""
    strategy_key = STRATEGY_FLAGS[strategy]
    seed = ctx.obj["seed"] if seed is None else seed
    cfg = SelectionConfig(n=n, l_px=l_px, seed=seed, strategy=strategy_key,
                          min_tissue_fraction=min_tissue_fraction)
    grid_meta = read_grid_meta(meta)
    cfg.validate(grid_meta.stride_px)
    inputs = [meta, tissue]

    if strategy_key == "random":
        mask = read_mask(tissue) if tissue else None
        regions = select_random(grid_meta, mask, cfg)
    elif strategy_key == "diversity":
        if not grids:
            raise click.UsageError("--grids is required for the diversity strategy")
        wsi_inputs = []
        for gpath in grids.split(","):
            gpath = gpath.strip()
            from slideselect.container import grid_meta_path

            m = read_grid_meta(grid_meta_path(gpath))
            c = read_container(gpath)
            check_grid_pair(c, m)
            wsi_inputs.append((m, c.values))
            inputs.append(gpath)
        regions = select_diversity(wsi_inputs, cfg)
    else:
        if not map_path:
            raise click.UsageError("--map is required for prototype strategies")
        smap = read_map(map_path, meta=grid_meta)
        inputs.append(map_path)
        if strategy_key == "proto_standard":
            regions = select_standard(smap, cfg)
        else:
            regions = select_adaptive(smap, cfg)

    write_regions(regions, out)
    _echo(ctx, f"selected {len(regions)} regions")
    if strategy_key == "random" and len(regions) < n:
        click.echo(f"warning: only {len(regions)} of {n} regions satisfied "
                   "the tissue and overlap constraints", err=True)
    _write_manifest("select",
                    dict(strategy=strategy, map=map_path, meta=meta,
                         tissue_mask=tissue, grids=grids, n=n, l=l_px, seed=seed,
                         min_tissue_fraction=min_tissue_fraction, out=out),
                    inputs, out, ctx.obj["manifest_out"])


@cli.command("evaluate")
@click.option("--regions", required=True, type=click.Path(exists=True))
@click.option("--gt-mask", type=click.Path(exists=True), default=None)
@click.option("--gt-points", type=click.Path(exists=True), default=None,
              help="CSV with x_px,y_px per line (optional header).")
@click.option("--tissue-mask", "tissue", required=True, type=click.Path(exists=True))
@click.option("--denominator", type=click.Choice(["tissue", "slide"]),
              default="tissue", show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def evaluate_cmd(ctx, regions, gt_mask, gt_points, tissue, denominator, out):
    """Coverage of selected regions against ground truth."""
    region_list = read_regions(regions)
    points = None
    if gt_points:
        points = []
        with open(gt_points, newline="") as fh:
            for row in csv.reader(fh):
                if not row or not row[0].strip():
                    continue
                if row[0].strip().lower() in ("x", "x_px"):
                    continue
                points.append((int(row[0]), int(row[1])))
    gt = GroundTruth(
        tissue_mask=read_mask(tissue),
        class_mask=read_mask(gt_mask) if gt_mask else None,
        points=points,
    )
    counts = coverage_metrics(region_list, gt, denominator=denominator)
    strategy = region_list[0].strategy if region_list else ""
    result = metrics_to_result(strategy, len(region_list), "", "", counts)
    write_sweep_csv([result], out)
    _write_manifest("evaluate",
                    dict(regions=regions, gt_mask=gt_mask, gt_points=gt_points,
                         tissue_mask=tissue, denominator=denominator, out=out),
                    [regions, gt_mask, gt_points, tissue], out, ctx.obj["manifest_out"])


_SWEEP_KEYS = {"fixtures_dir", "strategies", "n", "l_px", "seeds",
               "denominator", "min_tissue_fraction"}


def _load_sweep_config(path) -> dict:
    text = Path(path).read_text()
    if str(path).endswith(".toml"):
        import tomllib

        config = tomllib.loads(text)
    else:
        config = json.loads(text)
    unknown = set(config) - _SWEEP_KEYS
    if unknown:
        raise ValidationError(f"{path}: unknown config keys {sorted(unknown)}")
    for key in ("fixtures_dir", "strategies", "n", "l_px", "seeds"):
        if key not in config:
            raise ValidationError(f"{path}: missing config key {key!r}")
    return config


def load_fixture_dir(fixtures_dir) -> list:
    """SweepEntry list from a gen-fixtures directory layout."""
    fixtures_dir = Path(fixtures_dir)
    proto_path = fixtures_dir / "prototypes.emb"
    proto = read_container(proto_path)
    pset = build_prototype_set("fixture", proto.values,
                               [str(i) for i in range(proto.rows)])
    entries = []
    for meta_path in sorted(fixtures_dir.glob("*.grid.json")):
        wsi_id = meta_path.name[: -len(".grid.json")]
        meta = read_grid_meta(meta_path)
        container = read_container(fixtures_dir / f"{wsi_id}.emb")
        check_grid_pair(container, meta)
        tissue = read_mask(fixtures_dir / f"{wsi_id}.tissue.pgm")
        gt_path = fixtures_dir / f"{wsi_id}.gt.pgm"
        class_mask = read_mask(gt_path) if gt_path.exists() else None
        points_path = fixtures_dir / f"{wsi_id}.points.csv"
        points = None
        if points_path.exists():
            points = [
                (int(r[0]), int(r[1]))
                for r in csv.reader(points_path.open())
                if r and r[0].strip().lower() not in ("x", "x_px")
            ]
        entries.append(
            SweepEntry(
                meta=meta,
                embeddings=container.values,
                ground_truth=GroundTruth(tissue_mask=tissue, class_mask=class_mask,
                                         points=points),
                prototypes=pset,
            )
        )
    if not entries:
        raise ValidationError(f"{fixtures_dir}: no *.grid.json fixtures found")
    return entries


@cli.command("sweep")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def sweep_cmd(ctx, config_path, out):
    """Run the (strategy, n, l, seed) sweep described by a config file."""
    config = _load_sweep_config(config_path)
    entries = load_fixture_dir(config["fixtures_dir"])
    strategies = [STRATEGY_FLAGS.get(s, s) for s in config["strategies"]]
    rows, medians = run_sweep(
        entries, strategies, config["n"], config["l_px"], config["seeds"],
        denominator=config.get("denominator", "tissue"),
    )
    write_sweep_csv(rows + medians, out)
    _write_manifest("sweep", dict(config=config_path, out=out),
                    [config_path], out, ctx.obj["manifest_out"])


@cli.command("gen-fixtures")
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--wsis", type=int, default=10, show_default=True)
@click.option("--grid", "grid_side", type=int, default=64, show_default=True)
@click.option("--dim", type=int, default=8, show_default=True)
@click.option("--stride", type=int, default=256, show_default=True)
@click.option("--blobs-per-wsi", type=int, default=3, show_default=True)
@click.option("--blob-radius", type=float, default=4.0, show_default=True)
@click.option("--noise", type=float, default=0.05, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.pass_context
def gen_fixtures_cmd(ctx, seed, wsis, grid_side, dim, stride, blobs_per_wsi,
                     blob_radius, noise, out_dir):
    """Synthetic planted-blob slides with known ground truth."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    class_dir = np.zeros(dim)
    class_dir[1] = 1.0
    background = np.zeros(dim)
    background[0] = 1.0
    rng = stream_for(seed, "fixture-layout")
    for w in range(wsis):
        wsi_id = f"wsi{w:03d}"
        blobs = []
        margin = int(np.ceil(blob_radius)) + 1
        attempts = 0
        while len(blobs) < blobs_per_wsi and attempts < 1000:
            attempts += 1
            cy = margin + rng.randbelow(grid_side - 2 * margin)
            cx = margin + rng.randbelow(grid_side - 2 * margin)
            if all((cy - b.center[0]) ** 2 + (cx - b.center[1]) ** 2
                   > (2 * blob_radius + 2) ** 2 for b in blobs):
                blobs.append(BlobSpec(center=(cy, cx), radius=blob_radius,
                                      direction=class_dir))
        synth = gen_synthetic_wsi(
            seed=seed + w, grid_h=grid_side, grid_w=grid_side, dim=dim,
            blobs=blobs, background_direction=background, wsi_id=wsi_id,
            stride_px=stride, noise=noise,
        )
        write_container(synth.embeddings, False, out_dir / f"{wsi_id}.emb")
        write_grid_meta(synth.meta, out_dir / f"{wsi_id}.grid.json")
        write_mask(synth.ground_truth.tissue_mask, out_dir / f"{wsi_id}.tissue.pgm")
        write_mask(synth.ground_truth.class_mask, out_dir / f"{wsi_id}.gt.pgm")
    proto = np.zeros((1, dim), dtype=np.float32)
    proto[0, 1] = 1.0
    write_container(proto, True, out_dir / "prototypes.emb")
    _echo(ctx, f"wrote {wsis} synthetic slides to {out_dir}")
    _write_manifest("gen-fixtures",
                    dict(seed=seed, wsis=wsis, grid=grid_side, dim=dim,
                         stride=stride, blobs_per_wsi=blobs_per_wsi,
                         blob_radius=blob_radius, noise=noise, out=str(out_dir)),
                    [], out_dir / "fixtures", ctx.obj["manifest_out"])


@cli.command("render")
@click.option("--map", "map_path", required=True, type=click.Path(exists=True))
@click.option("--regions", "regions_path", type=click.Path(exists=True), default=None)
@click.option("--meta", type=click.Path(exists=True), default=None,
              help="Grid metadata; required with --regions.")
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def render_cmd(ctx, map_path, regions_path, meta, out):
    """Render a similarity map to PGM (or PPM with region outlines)."""
    smap = read_map(map_path)
    if regions_path:
        if not meta:
            raise click.UsageError("--meta is required with --regions")
        grid_meta = read_grid_meta(meta)
        _render_overlay(smap, read_regions(regions_path), grid_meta, out)
    else:
        render_map(smap, out)
    _write_manifest("render",
                    dict(map=map_path, regions=regions_path, meta=meta, out=out),
                    [map_path, regions_path, meta], out, ctx.obj["manifest_out"])


def _render_overlay(smap, regions, grid_meta, out) -> None:
    gray = np.round(smap.values * 255.0).astype(np.uint8)
    rgb = np.stack([gray, gray, gray], axis=-1)
    s = grid_meta.stride_px
    for reg in regions:
        gy0 = max(0, reg.y_px // s)
        gx0 = max(0, reg.x_px // s)
        gy1 = min(smap.grid_h - 1, (reg.y_px + reg.h_px - 1) // s)
        gx1 = min(smap.grid_w - 1, (reg.x_px + reg.w_px - 1) // s)
        red = np.array([255, 0, 0], dtype=np.uint8)
        rgb[gy0, gx0 : gx1 + 1] = red
        rgb[gy1, gx0 : gx1 + 1] = red
        rgb[gy0 : gy1 + 1, gx0] = red
        rgb[gy0 : gy1 + 1, gx1] = red
    h, w = gray.shape
    with open(out, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False, obj={})
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        if exc.ctx is not None:
            click.echo(exc.ctx.get_usage(), err=True)
        return 1
    except click.Abort:
        return 1
    except (SlideSelectError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
