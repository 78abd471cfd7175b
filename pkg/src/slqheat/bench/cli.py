"""Command-line driver: ``slqheat <subcommand> [--config PATH] [--seed S] [--out PATH] ...``.

Settings are resolved in three layers: the subcommand's defaults, then the
INI file given by ``--config`` (all sections are merged), then command-line
flags named after the configuration keys (``--beta 0.5``, ``--N 16,32,64``).
Every run writes one CSV and a ``.meta`` file with the resolved settings and
the fitted summary.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from . import experiments as ex
from .config import ExperimentConfig, build_config, config_keys, read_ini
from .rates import RateResult

SUBCOMMAND_DEFAULTS: dict[str, dict[str, object]] = {
    "riccati-rate": dict(n_elements=[16], N=[16, 32, 64, 128, 256], N_ref=4096, beta=1.0, alpha=1.0),
    "time-rate": dict(a=0.0, b=3.0, n_elements=[8], N=[16, 32, 64, 128], N_ref=2048, beta=0.5, alpha=1.0,
                      x0="sine_mode(1)", sigma="zero", M=2000),
    "space-rate": dict(n_elements=[8, 16, 32, 64], n_elements_ref=256, N=[64], beta=0.0, alpha=1.0,
                       x0="smooth_bump", sigma="time_modulated_sine", M=50),
    "gd-run": dict(n_elements=[9], N=[16], beta=0.0, alpha=1.0, x0="smooth_bump",
                   sigma="time_modulated_sine", M=1000),
    "compare": dict(n_elements=[8], N=[16, 32, 64], beta=0.0, alpha=1.0, x0="smooth_bump",
                    sigma="time_modulated_sine", M=2000, max_iters=2000, tol=1e-9),
    "regress-demo": dict(regression_M=1000),
}


def _format(v: object) -> str:
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def write_csv(path: Path, table: ex.Table) -> None:
    lines = [",".join(table.header)]
    lines += [",".join(_format(v) for v in row) for row in table.rows]
    path.write_text("\n".join(lines) + "\n")


def _rate_lines(name: str, r: RateResult) -> list[str]:
    if r.degenerate:
        return [f"{name}_slope = degenerate"]
    return [f"{name}_slope = {r.slope:.17g}", f"{name}_halfwidth = {r.halfwidth:.17g}"]


def write_meta(path: Path, cfg: ExperimentConfig, summary: list[str]) -> None:
    text = "[config]\n" + cfg.dump()
    if summary:
        text += "\n[result]\n" + "\n".join(summary) + "\n"
    path.write_text(text)


def write_plot_script(path: Path, csv: Path, table: ex.Table) -> None:
    x, ys = table.header[0], table.header[1:]
    if x == "N" and "tau" in ys:
        x, ys = "tau", [y for y in ys if y != "tau"]
    xi = table.header.index(x) + 1
    plots = ", ".join(f"'{csv.name}' using {xi}:{table.header.index(y) + 1} with linespoints title '{y}'"
                      for y in ys)
    path.write_text(
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "set logscale xy\n"
        f"set xlabel '{x}'\n"
        f"plot {plots}\n"
    )


def run(command: str, cfg: ExperimentConfig) -> tuple[ex.Table, list[str]]:
    if command == "riccati-rate":
        weighted, plain, table = ex.run_riccati_rate(cfg)
        return table, _rate_lines("weighted", weighted) + _rate_lines("sup", plain)
    if command == "time-rate":
        rate, table = ex.run_time_rate_closed(cfg)
        return table, _rate_lines("state", rate)
    if command == "space-rate":
        rate, table = ex.run_space_rate(cfg)
        return table, _rate_lines("control", rate)
    if command == "gd-run":
        table = ex.run_gd(cfg)
        return table, [f"iterations = {len(table.rows)}"]
    if command == "compare":
        return ex.run_compare_open_closed(cfg), []
    if command == "regress-demo":
        return ex.run_regress_demo(cfg), []
    raise ValueError(f"unknown subcommand {command!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slqheat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMAND_DEFAULTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file with experiment settings")
        p.add_argument("--emit-plot-script", action="store_true", help="also write a gnuplot script")
        for key in config_keys():
            if key == "experiment":
                continue
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None, metavar=key.upper())
    return parser


def resolve(args: argparse.Namespace) -> ExperimentConfig:
    values: dict[str, object] = dict(SUBCOMMAND_DEFAULTS[args.command])
    values["experiment"] = args.command
    if args.config:
        values.update(read_ini(args.config))
    for key in config_keys():
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    values["experiment"] = args.command
    return build_config(values)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        table, summary = run(args.command, cfg)
    except ValueError as err:
        print(f"slqheat {args.command}: {err}", file=sys.stderr)
        return 2
    out = Path(cfg.out)
    write_csv(out, table)
    write_meta(out.with_name(out.name + ".meta"), cfg, summary)
    if args.emit_plot_script:
        write_plot_script(out.with_suffix(".gp"), out, table)
    for line in summary:
        print(line)
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
