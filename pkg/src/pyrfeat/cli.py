"""Command-line entry point.

Subcommands cover the pipeline stages (extract, select, evaluate, all) plus
two utilities (describe, stub-deep). Pipeline commands take a JSON config
file that must carry the seed; individual flags override config values.
The semantic config is echoed into every artifact so results are
attributable. Exit codes: 0 success, 1 I/O failure, 2 validation failure.

Writes are atomic (temp file + rename) and mutating commands take a
lockfile in their output directory, so concurrent runs cannot interleave.
"""

from __future__ import annotations

import copy
import json
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import deepfeat, dwt, evaluation, fusion, lbp, lpq, selection, svm
from .errors import ValidationError
from .imagecore import CHANNELS, DatasetManifest, load_image, scan_dataset

CACHE_ENV = "PYRFEAT_CACHE_DIR"
LOCK_NAME = ".pyrfeat.lock"

CONFIG_DEFAULTS: dict = {
    "seed": None,
    "dataset": {"root": None, "layout": "class-subdirs"},
    "deep_store": None,
    "deep_stub": False,
    "lpq_window": 5,
    "nca": {"lam": None, "step": 1.0, "iters": 100, "block": None},
    "k": 1000,
    "svm": {"scale": None, "C": 1.0, "tol": 1e-3},
    "schemes": list(evaluation.ALL_SCHEMES),
    "repeats": 10,
    "fold_safe": False,
}


def _merge_config(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ValidationError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge_config(base[key], value, where)
        else:
            out[key] = value
    return out


def load_config(path: str | Path) -> dict:
    """Parse and validate a JSON config file; the seed is mandatory."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValidationError(f"config {path} must be a JSON object")
    cfg = _merge_config(CONFIG_DEFAULTS, raw)
    if cfg["seed"] is None:
        raise ValidationError(f"config {path} must set an integer 'seed'")
    if not isinstance(cfg["seed"], int):
        raise ValidationError("config 'seed' must be an integer")
    for scheme in cfg["schemes"]:
        evaluation.parse_scheme(scheme)
    if not isinstance(cfg["k"], int) or cfg["k"] < 1:
        raise ValidationError("config 'k' must be a positive integer")
    if not isinstance(cfg["repeats"], int) or cfg["repeats"] < 1:
        raise ValidationError("config 'repeats' must be a positive integer")
    return cfg


def _atomic_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


@contextmanager
def output_lock(directory: Path):
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ValidationError(
            f"output directory {directory} is locked by another run "
            f"(remove {lock} if stale)"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _manifest(cfg: dict) -> DatasetManifest:
    root = cfg["dataset"]["root"]
    if not root:
        raise ValidationError("config dataset.root is required")
    return scan_dataset(root, cfg["dataset"]["layout"])


def _deep_store(cfg: dict, manifest: DatasetManifest):
    """(store, fingerprint) from config: an explicit file or the zero stub."""
    if cfg["deep_stub"]:
        store = deepfeat.zero_stub_store(manifest)
        return store, "zero-stub"
    if not cfg["deep_store"]:
        raise ValidationError(
            "config needs deep_store (a PHFD/CSV file) or deep_stub=true"
        )
    store = deepfeat.read_store(cfg["deep_store"])
    return store, fusion.store_fingerprint(store, cfg["deep_store"])


def _fuse_config(cfg: dict) -> fusion.FuseConfig:
    return fusion.FuseConfig(lpq=lpq.LpqConfig(window=cfg["lpq_window"]))


def semantic_config(cfg: dict) -> dict:
    """The config subset that determines results (echoed into artifacts)."""
    keep = (
        "seed", "dataset", "deep_store", "deep_stub", "lpq_window",
        "nca", "k", "svm", "schemes", "repeats", "fold_safe",
    )
    return {key: cfg[key] for key in keep}


def _extract(cfg: dict, jobs: int, cache_dir: str | None) -> fusion.FeatureMatrix:
    manifest = _manifest(cfg)
    store, tag = _deep_store(cfg, manifest)
    cache = cache_dir or os.environ.get(CACHE_ENV) or None
    matrix = fusion.fuse_dataset(
        manifest,
        cfg["dataset"]["root"],
        store,
        _fuse_config(cfg),
        jobs=jobs,
        cache_dir=cache,
        store_tag=tag,
    )
    matrix.provenance["config"] = semantic_config(cfg)
    return matrix


def _nca_params(cfg: dict) -> selection.NcaParams:
    nca = cfg["nca"]
    return selection.NcaParams(
        lam=nca["lam"], step=nca["step"], iters=nca["iters"],
        seed=cfg["seed"], block=nca["block"],
    )


def _select(cfg: dict, matrix: fusion.FeatureMatrix):
    """Normalize, drop dead columns, learn weights, keep top k.

    Returns (selected original column indices, weights over survivors,
    survivor original indices, objective trace).
    """
    normalized = selection.minmax_normalize(matrix.values)
    surviving = selection.eliminate_zero_sum(normalized)
    k = cfg["k"]
    if k > surviving.values.shape[1]:
        raise ValidationError(
            f"k={k} exceeds the {surviving.values.shape[1]} surviving columns"
        )
    weights = selection.nca_fit(surviving.values, matrix.labels, _nca_params(cfg))
    top = selection.select_top_k(weights, k)
    return surviving.kept[top], weights, surviving.kept, weights.objective_trace


def _selection_rows(
    layout: fusion.FeatureLayout,
    survivors: np.ndarray,
    weights: selection.WeightVector,
) -> list[dict]:
    order = np.lexsort((np.arange(len(weights.weights)), -weights.weights))
    rank_of = np.empty(len(order), dtype=np.int64)
    rank_of[order] = np.arange(1, len(order) + 1)
    rows = []
    for local, original in enumerate(survivors):
        info = layout.column(int(original))
        rows.append(
            {
                "column": int(original),
                "source": info.source,
                "level": info.level,
                "channel": info.channel or "",
                "local_index": info.local_index,
                "weight": float(weights.weights[local]),
                "rank": int(rank_of[local]),
            }
        )
    return rows


def _write_selection(
    out_dir: Path,
    cfg: dict,
    matrix: fusion.FeatureMatrix,
    selected: np.ndarray,
    weights: selection.WeightVector,
    survivors: np.ndarray,
) -> None:
    layout = fusion.FeatureLayout()
    rows = _selection_rows(layout, survivors, weights)
    lines = ["column,source,level,channel,local_index,weight,rank"]
    lines += [
        f'{r["column"]},{r["source"]},{r["level"]},{r["channel"]},'
        f'{r["local_index"]},{r["weight"]!r},{r["rank"]}'
        for r in rows
    ]
    _atomic_text(out_dir / "selection.csv", "\n".join(lines) + "\n")
    payload = {
        "selected_columns": [int(i) for i in selected],
        "k": cfg["k"],
        "surviving_columns": int(len(survivors)),
        "eliminated_columns": int(fusion.TOTAL_COLUMNS - len(survivors)),
        "layout_hash": matrix.layout_hash,
        "objective_trace": [float(v) for v in weights.objective_trace],
        "config": semantic_config(cfg),
    }
    _atomic_text(out_dir / "selected.json", json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _svm_params(cfg: dict) -> svm.KernelParams:
    return svm.KernelParams(scale=cfg["svm"]["scale"], C=cfg["svm"]["C"])


def _fold_safe_hook(cfg: dict, normalized: selection.NormalizedMatrix, labels: np.ndarray):
    """Per-fold column selection: eliminate and refit NCA on the fold's
    training rows only, then return the chosen column indices."""

    def hook(train_idx: np.ndarray) -> np.ndarray:
        sub = selection.NormalizedMatrix(
            values=normalized.values[train_idx], kept=normalized.kept
        )
        surviving = selection.eliminate_zero_sum(sub)
        k = min(cfg["k"], surviving.values.shape[1])
        weights = selection.nca_fit(surviving.values, labels[train_idx], _nca_params(cfg))
        top = selection.select_top_k(weights, k)
        return surviving.kept[top]

    return hook


def _evaluate(cfg: dict, matrix: fusion.FeatureMatrix, selected: np.ndarray) -> dict:
    normalized = selection.minmax_normalize(matrix.values)
    labels = matrix.labels
    params = _svm_params(cfg)
    tol = cfg["svm"]["tol"]
    hook = _fold_safe_hook(cfg, normalized, labels) if cfg["fold_safe"] else None
    features = normalized.values if cfg["fold_safe"] else normalized.values[:, selected]

    schemes_out: dict[str, dict] = {}
    for name in cfg["schemes"]:
        scheme = evaluation.parse_scheme(name)
        if scheme.kind == "holdout":
            primary, results, aggregate = evaluation.run_holdout_repeats(
                features, labels, scheme, cfg["seed"], cfg["repeats"],
                params, tol, fit_hook=hook,
            )
            schemes_out[scheme.name] = {
                "primary": primary.as_dict(),
                "repeats": len(results),
                "aggregate": aggregate,
            }
        else:
            plan = evaluation.make_splits(labels, scheme, cfg["seed"])
            result = evaluation.run_scheme(features, labels, plan, params, tol, fit_hook=hook)
            schemes_out[scheme.name] = {"primary": result.as_dict(), "repeats": 1}
    return {
        "config": semantic_config(cfg),
        "layout_hash": matrix.layout_hash,
        "n_samples": int(len(labels)),
        "n_features_used": int(len(selected)) if not cfg["fold_safe"] else None,
        "fold_safe": cfg["fold_safe"],
        "schemes": schemes_out,
    }


def _write_report(out_dir: Path, report: dict, plot: bool) -> None:
    _atomic_text(out_dir / "report.json", json.dumps(report, sort_keys=True, indent=2) + "\n")
    lines = ["scheme," + ",".join(evaluation.METRIC_NAMES)]
    for name, block in report["schemes"].items():
        metrics = block["primary"]["metrics"]
        lines.append(
            name + "," + ",".join(repr(metrics[m]) for m in evaluation.METRIC_NAMES)
        )
    _atomic_text(out_dir / "report.csv", "\n".join(lines) + "\n")
    for name, block in report["schemes"].items():
        cm = block["primary"]["confusion"]
        safe = name.replace(":", "-")
        text = (
            ",pred_benign,pred_malign\n"
            f"true_benign,{cm['tn']},{cm['fp']}\n"
            f"true_malign,{cm['fn']},{cm['tp']}\n"
        )
        _atomic_text(out_dir / f"confusion_{safe}.csv", text)
    if plot:
        _plot_report(out_dir, report)


def _plot_report(out_dir: Path, report: dict) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    schemes = list(report["schemes"])
    fig, ax = plt.subplots(figsize=(9, 4.5))
    width = 0.15
    xs = np.arange(len(schemes))
    for i, metric in enumerate(evaluation.METRIC_NAMES):
        vals = [report["schemes"][s]["primary"]["metrics"][metric] for s in schemes]
        ax.bar(xs + (i - 2) * width, vals, width, label=metric)
    ax.set_xticks(xs)
    ax.set_xticklabels(schemes)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_dir / "report.png", dpi=120)
    plt.close(fig)


def _apply_overrides(cfg: dict, **overrides) -> dict:
    nested = {
        "root": ("dataset", "root"),
        "layout": ("dataset", "layout"),
        "k": ("k",),
        "seed": ("seed",),
        "repeats": ("repeats",),
        "deep_store": ("deep_store",),
        "lpq_window": ("lpq_window",),
        "nca_iters": ("nca", "iters"),
    }
    for name, value in overrides.items():
        if value is None:
            continue
        target = nested[name]
        node = cfg
        for key in target[:-1]:
            node = node[key]
        node[target[-1]] = value
    return cfg


@click.group(name="pyrfeat")
@click.version_option(version=__version__, prog_name="pyrfeat")
def cli() -> None:
    """Pyramidal hybrid feature pipeline for binary skin-image datasets."""


_config_opt = click.option(
    "--config", "-c", "config_path", required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="JSON config file (must set 'seed').",
)


@cli.command()
@_config_opt
@click.option("--root", type=click.Path(exists=True, file_okay=False), help="Dataset root override.")
@click.option("--layout", type=click.Choice(["class-subdirs", "csv-manifest"]), default=None)
@click.option("--deep-store", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--deep-stub", is_flag=True, default=False, help="Use an all-zero deep store.")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output matrix file.")
@click.option("--jobs", default=1, show_default=True, help="Worker threads for fusion.")
@click.option("--cache-dir", default=None, type=click.Path(file_okay=False),
              help=f"Per-image cache (or ${CACHE_ENV}).")
@click.option("--csv", "also_csv", is_flag=True, help="Also export the matrix as CSV.")
def extract(config_path, root, layout, deep_store, deep_stub, out, jobs, cache_dir, also_csv):
    """Fuse deep + textural features into a matrix file."""
    cfg = load_config(config_path)
    _apply_overrides(cfg, root=root, layout=layout, deep_store=deep_store)
    if deep_stub:
        cfg["deep_stub"] = True
    out_path = Path(out)
    with output_lock(out_path.parent if out_path.parent != Path("") else Path(".")):
        matrix = _extract(cfg, jobs, cache_dir)
        fusion.save_matrix(matrix, out_path)
        if also_csv:
            fusion.export_matrix_csv(matrix, out_path.with_suffix(".csv"))
    click.echo(f"wrote {out_path} ({matrix.values.shape[0]} x {matrix.values.shape[1]})")


@cli.command()
@_config_opt
@click.option("--matrix", "matrix_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--k", type=int, default=None, help="Keep the k heaviest columns.")
@click.option("--nca-iters", type=int, default=None, help="Gradient steps override.")
def select(config_path, matrix_path, out_dir, k, nca_iters):
    """Learn feature weights and write the selection artifacts."""
    cfg = load_config(config_path)
    _apply_overrides(cfg, k=k, nca_iters=nca_iters)
    out = Path(out_dir)
    with output_lock(out):
        matrix = fusion.load_matrix(matrix_path)
        selected, weights, survivors, _ = _select(cfg, matrix)
        _write_selection(out, cfg, matrix, selected, weights, survivors)
    click.echo(f"selected {len(selected)} of {len(survivors)} surviving columns -> {out}")


@cli.command()
@_config_opt
@click.option("--matrix", "matrix_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--selection", "selection_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="selected.json from 'select'.")
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--schemes", default=None, help="Comma-separated scheme list override.")
@click.option("--repeats", type=int, default=None, help="Holdout repeat count override.")
@click.option("--seed", type=int, default=None, help="Seed override.")
@click.option("--fold-safe", is_flag=True, default=False,
              help="Refit selection inside every training fold.")
@click.option("--plot", is_flag=True, default=False, help="Also write a PNG bar chart.")
def evaluate(config_path, matrix_path, selection_path, out_dir, schemes, repeats, seed, fold_safe, plot):
    """Train and score the classifier under the configured schemes."""
    cfg = load_config(config_path)
    _apply_overrides(cfg, repeats=repeats, seed=seed)
    if schemes:
        cfg["schemes"] = [s.strip() for s in schemes.split(",") if s.strip()]
        for scheme in cfg["schemes"]:
            evaluation.parse_scheme(scheme)
    if fold_safe:
        cfg["fold_safe"] = True
    out = Path(out_dir)
    with output_lock(out):
        matrix = fusion.load_matrix(matrix_path)
        payload = json.loads(Path(selection_path).read_text())
        if payload.get("layout_hash") != matrix.layout_hash:
            raise ValidationError(
                "selection artifact and matrix disagree on the column layout"
            )
        selected = np.array(payload["selected_columns"], dtype=np.int64)
        report = _evaluate(cfg, matrix, selected)
        _write_report(out, report, plot)
    click.echo(f"wrote report for {len(report['schemes'])} scheme(s) -> {out}")


@cli.command(name="all")
@_config_opt
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--jobs", default=1, show_default=True)
@click.option("--cache-dir", default=None, type=click.Path(file_okay=False))
@click.option("--plot", is_flag=True, default=False)
def run_all(config_path, out_dir, jobs, cache_dir, plot):
    """extract -> select -> evaluate into one output directory."""
    cfg = load_config(config_path)
    out = Path(out_dir)
    with output_lock(out):
        matrix = _extract(cfg, jobs, cache_dir)
        fusion.save_matrix(matrix, out / "matrix.phfm")
        selected, weights, survivors, _ = _select(cfg, matrix)
        _write_selection(out, cfg, matrix, selected, weights, survivors)
        report = _evaluate(cfg, matrix, selected)
        _write_report(out, report, plot)
    click.echo(f"pipeline complete -> {out}")


@cli.command()
@click.argument("images", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Histogram CSV path.")
@click.option("--lpq-window", type=int, default=5, show_default=True)
@click.option("--dump-pyramid", "dump_dir", default=None, type=click.Path(file_okay=False),
              help="Also write per-level per-channel LL planes as .npy files.")
def describe(images, out, lpq_window, dump_dir):
    """Per-image texture histograms (and optional pyramid plane dumps)."""
    config = lpq.LpqConfig(window=lpq_window)
    lines = ["id,level,channel,descriptor,bin,count"]
    index = []
    dump = Path(dump_dir) if dump_dir else None
    if dump is not None:
        dump.mkdir(parents=True, exist_ok=True)
    for image_path in images:
        image = load_image(image_path)
        pyramid = dwt.build_pyramid(image)
        for level, planes in enumerate(pyramid.levels):
            for c, channel in enumerate(CHANNELS):
                plane = planes[:, :, c]
                if dump is not None:
                    safe = image.id.replace("/", "__")
                    name = f"{safe}__L{level}__{channel}.npy"
                    np.save(dump / name, plane.astype(np.float64))
                    index.append(
                        {"id": image.id, "image": str(image_path),
                         "level": level, "channel": channel, "file": name}
                    )
                textural = dwt.quantize_plane(plane).astype(np.float64) if level else plane
                for b, count in enumerate(lpq.lpq_histogram(textural, config)):
                    lines.append(f"{image.id},{level},{channel},lpq,{b},{int(count)}")
                for b, count in enumerate(lbp.lbp_histogram(textural)):
                    lines.append(f"{image.id},{level},{channel},lbp,{b},{int(count)}")
    _atomic_text(Path(out), "\n".join(lines) + "\n")
    if dump is not None:
        _atomic_text(dump / "pyramid_index.json", json.dumps(index, indent=2) + "\n")
    click.echo(f"described {len(images)} image(s) -> {out}")


@cli.command(name="stub-deep")
@click.option("--root", required=True, type=click.Path(exists=True))
@click.option("--layout", type=click.Choice(["class-subdirs", "csv-manifest"]),
              default="class-subdirs", show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--csv", "as_csv", is_flag=True, help="Write the CSV form instead of PHFD.")
def stub_deep(root, layout, out, as_csv):
    """Write an all-zero deep store covering a dataset."""
    manifest = scan_dataset(root, layout)
    store = deepfeat.zero_stub_store(manifest)
    deepfeat.write_store(store, out, fmt="csv" if as_csv else "phfd")
    click.echo(f"wrote {len(store)} stub records -> {out}")


def main() -> None:
    try:
        cli.main(standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        sys.exit(2)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.exceptions.Abort:
        sys.exit(1)
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except OSError as exc:
        click.echo(f"I/O error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
