"""
Command-line front end: metric-graph spectra, thin-domain ε sweeps, Sierpiński
decimation tables and the random-pair property suite, all written as CSV.
"""

import argparse
import logging
import os
import sys

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .closeness import run_sweep
from .discrete import (
    discrete_laplacian,
    discrete_spectrum,
    sierpinski_levels,
    spectral_gaps,
)
from .graph import generate_graph, to_discrete
from .load import load_embedded_graph, load_graph
from .quantum import assemble_kirchhoff, gap_preimages
from ._random_pairs import property_suite
from ._utils import spectrum_table, write_csv

logger = logging.getLogger(__name__)

# |V_8| = 3282 is the largest Sierpiński graph under the dense-solver limit
MAX_SIERPINSKI_GENERATION = 8

LIST_COMMANDS = ["spectrum", "sweep", "sierpinski", "closeness-random"]


@dataclass(frozen=True)
class RunConfig:
    command: str
    graph: Optional[str] = None
    eps: tuple = ()
    mesh_h: float = 1e-3
    mesh_across: int = 6
    num_eigs: int = 6
    lambda_max: float = 30.0
    out_dir: str = "."
    seed: int = 0
    generations: int = 3
    levels: int = 2
    trials: int = 100
    workers: int = 1
    simple_index: Optional[int] = None
    verbose: bool = False

    def __post_init__(self):
        if self.command not in LIST_COMMANDS:
            raise ValueError(
                f"Command `{self.command}` not recognised. Must be one of "
                f"{LIST_COMMANDS}"
            )
        if self.command == "sweep":
            if not self.eps:
                raise ValueError("A sweep needs at least one eps value (`--eps`)")
            if any(e <= 0 for e in self.eps):
                raise ValueError(f"eps values must be positive, got {list(self.eps)}")
            if any(b >= a for a, b in zip(self.eps[:-1], self.eps[1:])):
                raise ValueError(
                    f"eps values must be strictly decreasing, got {list(self.eps)}"
                )
        if self.mesh_h <= 0:
            raise ValueError(f"`--mesh-h` must be positive, got {self.mesh_h}")
        if self.mesh_across < 1:
            raise ValueError(
                f"`--mesh-across` must be at least 1, got {self.mesh_across}"
            )
        if self.num_eigs < 1:
            raise ValueError(f"`--num-eigs` must be at least 1, got {self.num_eigs}")
        if self.trials < 0:
            raise ValueError(f"`--trials` must be non-negative, got {self.trials}")

    def out_path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def stem(self) -> str:
        return os.path.splitext(os.path.basename(self.graph))[0]


def cmd_spectrum(config: RunConfig) -> str:
    """Lowest `num_eigs` Kirchhoff eigenvalues of the graph file at mesh width
    `mesh_h`."""

    g = load_graph(config.graph)
    system = assemble_kirchhoff(g, config.mesh_h)
    num_eigs = min(config.num_eigs, system.dim)
    lam, _ = system.lowest(num_eigs)
    table = spectrum_table(lam)

    fpath = write_csv(table, config.out_path(f"{config.stem()}_spectrum.csv"))
    print(f"{num_eigs} eigenvalues of {config.graph} written to {fpath}")
    return fpath


def cmd_sweep(config: RunConfig) -> str:
    """Graph against thin-domain closeness and eigenvalue errors over the ε list."""

    eg = load_embedded_graph(config.graph)
    ds = run_sweep(
        eg,
        config.eps,
        h_rel=config.mesh_across,
        num_eigs=config.num_eigs,
        lambda_max=config.lambda_max,
        simple_index=config.simple_index,
        max_workers=config.workers,
        seed=config.seed,
    )
    fpath = write_csv(ds.qg.to_table(), config.out_path(f"{config.stem()}_sweep.csv"))

    print(f"Sweep over eps={list(config.eps)} written to {fpath}")
    print(f"  delta decreasing: {ds.qg.is_decreasing('delta')}")
    resolvent_ok = bool((ds["resolvent_defect"] <= ds["bound_4delta"] + 1e-9).all())
    print(f"  resolvent defect <= 4 delta: {resolvent_ok}")
    print(f"  all implied estimates held: {bool((ds['verified'] == 1).all())}")
    for k in range(1, ds.sizes["k"]):
        print(
            f"  eigenvalue error k={k} decreasing: "
            f"{ds.qg.is_decreasing('eigenvalue_error', k=k)}"
        )
    return fpath


def cmd_sierpinski(config: RunConfig) -> list:
    """Decimation levels D_n, the discrete spectrum of the Sierpiński graph of the
    requested generation, and the metric-graph gaps obtained from its spectral gaps."""

    if not 1 <= config.generations <= MAX_SIERPINSKI_GENERATION:
        raise ValueError(
            f"`--generations` must be in [1, {MAX_SIERPINSKI_GENERATION}], "
            f"got {config.generations}"
        )

    levels = sierpinski_levels(config.levels)

    g = generate_graph("sierpinski", generation=config.generations)
    spectrum = discrete_spectrum(discrete_laplacian(to_discrete(g)))
    eigs = spectrum["eigenvalue"].to_numpy()
    nearest = np.min(
        np.abs(eigs[:, None] - levels["value"].to_numpy()[None, :]), axis=1
    )
    spectrum["in_levels"] = nearest < 1e-8

    gaps = spectral_gaps(eigs)
    metric_gaps = gap_preimages(gaps, 1.0, config.lambda_max)
    gap_table = pd.DataFrame(metric_gaps, columns=["lambda_lo", "lambda_hi"])

    prefix = f"sierpinski_g{config.generations}"
    paths = [
        write_csv(levels, config.out_path(f"sierpinski_levels_{config.levels}.csv")),
        write_csv(spectrum, config.out_path(f"{prefix}_spectrum.csv")),
        write_csv(gap_table, config.out_path(f"{prefix}_metric_gaps.csv")),
    ]
    print(
        f"Generation {config.generations}: {len(g.vertices)} vertices, "
        f"{int(spectrum['in_levels'].sum())}/{len(eigs)} eigenvalues in "
        f"D_{config.levels}"
        f", {len(metric_gaps)} metric gaps below {config.lambda_max:g}"
    )
    return paths


def cmd_closeness_random(config: RunConfig) -> str:
    """Property suite over `trials` random finite-dimensional pairs."""

    table = property_suite(trials=config.trials, seed=config.seed)
    fpath = write_csv(
        table, config.out_path(f"closeness_random_seed{config.seed}.csv")
    )
    print(
        f"{config.trials} random pairs, {int(table['violations'].sum())} bound "
        f"violations, report written to {fpath}"
    )
    return fpath


COMMANDS = {
    "spectrum": cmd_spectrum,
    "sweep": cmd_sweep,
    "sierpinski": cmd_sierpinski,
    "closeness-random": cmd_closeness_random,
}


def _eps_list(text: str) -> tuple:
    try:
        return tuple(float(e) for e in text.split(",") if e.strip())
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"invalid eps list `{text}`") from err


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qgtools",
        description="Spectra of quantum graphs and of their thin neighbourhoods.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=".", help="Directory for CSV output")
    common.add_argument("--verbose", action="store_true", help="Log progress")
    # only the commands that sample random vectors take a seed; spectrum and
    # sierpinski are deterministic
    sampled = argparse.ArgumentParser(add_help=False)
    sampled.add_argument(
        "--seed", type=int, default=0, help="Seed for randomly sampled vectors"
    )

    sub = parser.add_subparsers(dest="command", required=True)

    spectrum = sub.add_parser(
        "spectrum", help="Kirchhoff eigenvalues of a graph file", parents=[common]
    )
    spectrum.add_argument("graph", help="JSON graph file")
    spectrum.add_argument("--num-eigs", type=int, default=6)
    spectrum.add_argument("--mesh-h", type=float, default=1e-3, help="Mesh width")

    sweep = sub.add_parser(
        "sweep",
        help="Graph/thin-domain closeness over eps",
        parents=[common, sampled],
    )
    sweep.add_argument("graph", help="JSON graph file with vertex positions")
    sweep.add_argument(
        "--eps", type=_eps_list, default=(0.3, 0.15, 0.075), help="Comma list"
    )
    sweep.add_argument(
        "--mesh-across", type=int, default=6, help="Cells across each edge strip"
    )
    sweep.add_argument("--num-eigs", type=int, default=6)
    sweep.add_argument("--lambda-max", type=float, default=30.0)
    sweep.add_argument(
        "--simple-index",
        type=int,
        default=None,
        help="Index of a simple eigenvalue whose eigenvector closeness is measured",
    )
    sweep.add_argument("--workers", type=int, default=1, help="Parallel eps values")

    sier = sub.add_parser(
        "sierpinski", help="Sierpiński decimation and gaps", parents=[common]
    )
    sier.add_argument("--generations", type=int, default=3)
    sier.add_argument("--levels", type=int, default=2)
    sier.add_argument("--lambda-max", type=float, default=30.0)

    rand = sub.add_parser(
        "closeness-random",
        help="Property suite on random pairs",
        parents=[common, sampled],
    )
    rand.add_argument("--trials", type=int, default=100)

    return parser


def parse_config(argv: Optional[Sequence[str]] = None) -> RunConfig:
    args = vars(build_parser().parse_args(argv))
    fields = set(RunConfig.__dataclass_fields__)
    return RunConfig(**{k: v for k, v in args.items() if k in fields})


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        config = parse_config(argv)
    except ValueError as err:
        print(f"qgtools: error: {err}", file=sys.stderr)
        return 1

    logging.basicConfig(
        level=logging.INFO if config.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s: %(message)s",
    )

    try:
        COMMANDS[config.command](config)
    except (ValueError, OSError) as err:
        print(f"qgtools {config.command}: error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
