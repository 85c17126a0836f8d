"""phfd-export command line: export a PHFD store, or verify pyramid parity
against reference plane dumps. Exit codes: 0 ok, 1 I/O, 2 configuration or
check failure."""

from __future__ import annotations

import sys

import click

from . import __version__
from .errors import ExporterError
from .export import ExporterConfig, export
from .models import MODEL_BUILDERS, WEIGHT_POLICIES
from .parity import TOLERANCE, verify_pyramid_parity
from .pyramid import MODES


@click.group(name="phfd-export")
@click.version_option(version=__version__, prog_name="phfd-export")
def cli() -> None:
    """Deep-feature exporter for the PHFD interchange format."""


@cli.command(name="run")
@click.option("--root", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--layout", type=click.Choice(["class-subdirs", "csv-manifest"]),
              default="class-subdirs", show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--model-a", default="resnet18", show_default=True,
              type=click.Choice(sorted(MODEL_BUILDERS)))
@click.option("--model-b", default="resnet34", show_default=True,
              type=click.Choice(sorted(MODEL_BUILDERS)))
@click.option("--weights", default="pretrained", show_default=True,
              type=click.Choice(WEIGHT_POLICIES))
@click.option("--seed", default=0, show_default=True, type=int,
              help="Initialization seed (random weight policy).")
@click.option("--device", default="cpu", show_default=True)
@click.option("--boundary", default="periodic", show_default=True,
              type=click.Choice(MODES))
@click.option("--csv", is_flag=True, help="Write the CSV form instead of binary.")
def run(root, layout, out, model_a, model_b, weights, seed, device, boundary, csv):
    """Extract embeddings for every image and pyramid level."""
    config = ExporterConfig(
        root=root, out=out, layout=layout, model_a=model_a, model_b=model_b,
        weights=weights, seed=seed, device=device, boundary=boundary, csv=csv,
    )
    summary = export(config)
    click.echo(
        f"wrote {summary['records']} records for {summary['images']} image(s) "
        f"-> {summary['out']}"
    )


@cli.command(name="verify-parity")
@click.option("--fixtures", required=True, type=click.Path(exists=True, file_okay=False),
              help="Directory holding pyramid_index.json and the .npy planes.")
@click.option("--tolerance", default=TOLERANCE, show_default=True, type=float)
@click.option("--boundary", default="periodic", show_default=True,
              type=click.Choice(MODES))
def verify_parity(fixtures, tolerance, boundary):
    """Check this package's pyramid against dumped reference planes."""
    report = verify_pyramid_parity(fixtures, tolerance, boundary)
    click.echo(f"parity ok: {report}")


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
    except ExporterError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except OSError as exc:
        click.echo(f"I/O error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
