"""Shared fixtures: deterministic image trees, one-shot exports, and plane
dumps produced by the consumer pipeline for the parity checks."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
import torch
from PIL import Image

from phfd_exporter.export import ExporterConfig, export

# (name, verdict) pairs collected by the acceptance tests and echoed after
# the run; pytest captures even low-level stdout writes, so a terminal
# summary hook is the reliable channel.
ACCEPTANCE_VERDICTS: list[tuple[str, str]] = []

SOLID_COLOR = (120, 45, 200)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict in ACCEPTANCE_VERDICTS:
        terminalreporter.write_line(f"{name}: {verdict}")


def write_png(path: Path, pixels: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels, mode="RGB").save(path)


def noise_image(seed: int, height: int = 64, width: int = 64) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)


@pytest.fixture(scope="session")
def dataset_root(tmp_path_factory) -> Path:
    """Four images in two class directories; one has an odd height."""
    root = tmp_path_factory.mktemp("dataset")
    write_png(root / "benign" / "a.png", noise_image(1))
    write_png(root / "benign" / "b.png", noise_image(2, height=65))
    write_png(root / "malignant" / "c.png", noise_image(3))
    write_png(root / "malignant" / "d.png", noise_image(4))
    return root


@pytest.fixture(scope="session")
def solid_root(tmp_path_factory) -> Path:
    """One constant-color image behind a csv manifest."""
    root = tmp_path_factory.mktemp("solid")
    pixels = np.empty((64, 64, 3), dtype=np.uint8)
    pixels[:] = SOLID_COLOR
    write_png(root / "solid.png", pixels)
    (root / "manifest.csv").write_text("id,label\nsolid.png,benign\n")
    return root


@pytest.fixture(scope="session")
def exported(dataset_root, tmp_path_factory):
    """(store path, summary) for a seeded random-weights export."""
    out = tmp_path_factory.mktemp("store") / "deep.phfd"
    summary = export(
        ExporterConfig(root=str(dataset_root), out=str(out), weights="random", seed=0)
    )
    return out, summary


@pytest.fixture(scope="session")
def solid_export(solid_root, tmp_path_factory):
    """(store path, summary) for the constant-image dataset."""
    out = tmp_path_factory.mktemp("solid_store") / "solid.phfd"
    summary = export(
        ExporterConfig(
            root=str(solid_root),
            out=str(out),
            layout="csv-manifest",
            weights="random",
            seed=3,
        )
    )
    return out, summary


@pytest.fixture(scope="session")
def parity_fixtures(dataset_root, tmp_path_factory) -> Path:
    """Plane dumps written by the consumer pipeline's own CLI."""
    from click.testing import CliRunner

    from pyrfeat.cli import cli as pyrfeat_cli

    dump = tmp_path_factory.mktemp("planes")
    images = [
        str(dataset_root / "benign" / "a.png"),
        str(dataset_root / "benign" / "b.png"),
    ]
    result = CliRunner().invoke(
        pyrfeat_cli,
        ["describe", *images, "--out", str(dump / "hist.csv"),
         "--dump-pyramid", str(dump)],
        catch_exceptions=False,
    )
    assert result.exit_code == 0, result.output
    return dump


class TinyHead(torch.nn.Module):
    """Stand-in backbone: accepts any (N, 3, H, W), emits a fixed width."""

    def __init__(self, width: int):
        super().__init__()
        self.pool = torch.nn.AdaptiveAvgPool2d(1)
        self.fc = torch.nn.Linear(3, width)

    def forward(self, x):
        return self.fc(self.pool(x).flatten(1))


def tiny_builder(width: int):
    def build(pretrained: bool):
        return TinyHead(width)

    return build
