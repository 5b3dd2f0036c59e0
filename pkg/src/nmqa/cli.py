"""Command-line entry point: ``nmqa {simulate,replay,tune,validate}``.

Outputs land in ``--out``. Every CSV starts with ``#`` lines holding the
master seed and the full config snapshot, and every JSON file carries the same
two keys. Results are computed in full before anything is written, so an
input failure leaves no partial files behind.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .control import RunRecord
from .experiment import evaluate
from .filtering import DegenerateWeightsError
from .lattice import TrueField
from .measurement import DataBankFormatError, ReplaySource, SimulatedSource, empirical_truth, ingest_databank
from .metrics import Scoreboard, ratio_csv, ratio_curve, ratio_targets
from .tuner import sample_pairs, tune
from .validate import run_checks

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4

STRATEGIES = ("nmqa", "naive")
log = logging.getLogger("nmqa")


class NumericalAbort(RuntimeError):
    """One or more filter runs collapsed to all-zero weights."""


def header_lines(cfg: RunConfig) -> list[str]:
    return [f"seed: {cfg['seed']}", "config: " + json.dumps(cfg.snapshot(), sort_keys=True)]


def with_provenance(cfg: RunConfig, payload: dict[str, Any]) -> dict[str, Any]:
    return {"seed": cfg["seed"], "config": cfg.snapshot(), **payload}


def pair_stream(seed: int) -> np.random.Generator:
    """Stream for tuning candidates, disjoint from the per-trial streams."""
    return np.random.default_rng([int(seed), 1])


@dataclass
class Outputs:
    """Files to write, collected in memory until the run has succeeded."""

    text: dict[str, str] = field(default_factory=dict)
    figures: list[tuple[str, Any]] = field(default_factory=list)

    def add_json(self, name: str, cfg: RunConfig, payload: dict[str, Any]) -> None:
        self.text[name] = json.dumps(with_provenance(cfg, payload), indent=2) + "\n"

    def write(self, out: Path, plots: bool) -> list[Path]:
        written = []
        for name, content in self.text.items():
            path = out / name
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(content)
            written.append(path)
        if plots:
            for name, draw in self.figures:
                written.append(draw(out / name))
        return written


def benchmark(cfg: RunConfig, array, source, truth: TrueField, T_values: Sequence[int], outputs: Outputs):
    """Both strategies at every budget; fills ``outputs`` and returns the scoreboard."""
    fcfg = cfg.filter_config(array)
    board = Scoreboard()
    examples: list[RunRecord] = []
    invalid = 0
    for T in T_values:
        for strategy in STRATEGIES:
            entry, runs = evaluate(
                strategy, T, cfg["trials"], cfg["seed"], fcfg, array, source, truth,
                threads=cfg["threads"], fill=cfg["naive_fill"],
            )
            board.add(entry)
            invalid += entry.invalid
            outputs.add_json(
                f"runs/{strategy}_T{T:04d}.json", cfg,
                {"strategy": strategy, "T": T, "scores": entry.scores,
                 "runs": [r.to_dict() for r in runs]},
            )
            log.info("%-5s T=%-4d avg_ssim=%.4f std=%.4f", strategy, T, entry.avg_ssim, entry.std)
            if T == _example_budget(T_values, array.d):
                examples.append(runs[0])
    head = header_lines(cfg)
    outputs.text["scoreboard.csv"] = board.to_csv(head)
    pairs = []
    if len(T_values) >= 2:
        naive, nmqa = board.curve("naive"), board.curve("nmqa")
        pairs = ratio_curve(naive, nmqa, ratio_targets(naive, nmqa))
    outputs.text["ratio.csv"] = ratio_csv(pairs, head)
    outputs.add_json("truth.json", cfg, {"truth": truth.values.tolist()})

    from . import plotting

    outputs.figures += [
        ("scoreboard.png", lambda p: plotting.plot_scoreboard(board, p)),
        ("ratio.png", lambda p: plotting.plot_ratio(pairs, p)),
        ("maps.png", lambda p: plotting.plot_maps(array, truth, examples, p)),
    ]
    return board, invalid


def _example_budget(T_values: Sequence[int], d: int) -> int:
    """Budget shown in the map figure: the one closest to the array size."""
    return min(T_values, key=lambda T: (abs(T - d), T))


def cmd_simulate(cfg: RunConfig, outputs: Outputs) -> int:
    if cfg["databank"] is not None:
        raise ConfigError("databank: simulate uses a synthetic field; use 'replay' for banks")
    array = cfg.array
    truth = cfg.true_field(array)
    source = SimulatedSource(truth, cfg["sigma_v"])
    _, invalid = benchmark(cfg, array, source, truth, cfg["T"], outputs)
    return invalid


def cmd_replay(cfg: RunConfig, outputs: Outputs) -> int:
    if cfg["databank"] is None:
        raise ConfigError("databank: replay needs a bank path (--databank or config key)")
    bank = ingest_databank(cfg["databank"])
    array = cfg.array
    if array.d != bank.d:
        raise ConfigError(f"grid: {array.rows}x{array.cols} grid has {array.d} sites but the bank has {bank.d} rows")
    truth = empirical_truth(bank)
    _, invalid = benchmark(cfg, array, ReplaySource(bank), truth, cfg["replay_T"], outputs)
    return invalid


def cmd_tune(cfg: RunConfig, outputs: Outputs) -> int:
    array = cfg.array
    if cfg["databank"] is None:
        truth = cfg.true_field(array)
        source = SimulatedSource(truth, cfg["sigma_v"])
    else:
        bank = ingest_databank(cfg["databank"])
        truth, source = empirical_truth(bank), ReplaySource(bank)
    t = cfg["tune"]
    pairs = sample_pairs(t["n_pairs"], pair_stream(cfg["seed"]))
    result = tune(
        cfg.filter_config(array), array, source, truth, t["T"], cfg["trials"], pairs,
        master_seed=cfg["seed"], threads=cfg["threads"],
    )
    outputs.text["candidates.csv"] = result.candidates_csv(header_lines(cfg))
    outputs.add_json("tuning.json", cfg, result.summary())
    log.info("best pair (%.3f, %.3f) avg_ssim=%.4f; baseline %.4f; %d improved",
             result.best.lambda1, result.best.lambda2, result.best.avg_ssim,
             result.baseline.avg_ssim, len(result.improved))

    from . import plotting

    outputs.figures.append(("tuning.png", lambda p: plotting.plot_tuning(result, p)))
    return result.baseline.invalid + sum(c.invalid for c in result.candidates)


COMMANDS = {"simulate": cmd_simulate, "replay": cmd_replay, "tune": cmd_tune}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nmqa", description="Adaptive noise mapping over qubit arrays.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--seed", type=int, help="master seed; run i uses seed+i")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--trials", type=int, help="runs per (strategy, T)")
    common.add_argument("--threads", type=int, help="worker processes")
    common.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key, e.g. --set grid.rows=3 (repeatable)")
    common.add_argument("--T", dest="T", type=int, nargs="+", help="budget list")
    common.add_argument("--lambda1", type=float)
    common.add_argument("--lambda2", type=float)
    common.add_argument("--n-alpha", dest="n_alpha", type=int)
    common.add_argument("--n-beta", dest="n_beta", type=int)
    common.add_argument("--databank", help="0/1 data-bank CSV (one row per site)")
    common.add_argument("--no-plots", dest="plots", action="store_false", default=None)
    common.add_argument("-q", "--quiet", action="store_true")

    sub.add_parser("simulate", parents=[common], help="benchmark both strategies on a synthetic field")
    sub.add_parser("replay", parents=[common], help="benchmark both strategies against a data bank")
    p = sub.add_parser("tune", parents=[common], help="random search over (lambda1, lambda2)")
    p.add_argument("--n-pairs", dest="n_pairs", type=int)
    p = sub.add_parser("validate", help="fast invariant checks")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _overrides(args) -> dict[str, Any]:
    keys = ("seed", "trials", "threads", "T", "lambda1", "lambda2", "n_alpha", "n_beta", "databank", "plots")
    out = {k: getattr(args, k) for k in keys}
    if args.out is not None:
        out["out"] = str(args.out)
    if args.command == "replay" and args.T is not None:
        out["replay_T"] = out.pop("T")
    return out


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "validate":
        checks = run_checks(seed=args.seed)
        for c in checks:
            print(c.line())
        return EXIT_OK if all(c.passed for c in checks) else EXIT_CHECK_FAILED

    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        sets = list(args.sets)
        if getattr(args, "n_pairs", None) is not None:
            sets.append(f"tune.n_pairs={args.n_pairs}")
        cfg = load_config(args.config, _overrides(args), sets)
        outputs = Outputs()
        invalid = COMMANDS[args.command](cfg, outputs)
        if invalid:
            outputs.text["INCOMPLETE"] = f"{invalid} run(s) aborted on degenerate weights; their scores are set to 1\n"
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        outputs.add_json("manifest.json", cfg, {"command": args.command, "aborted_runs": invalid,
                                                "files": sorted(outputs.text)})
        outputs.write(out, bool(cfg["plots"]))
        if invalid:
            raise NumericalAbort(f"{invalid} run(s) aborted; outputs flagged in {out / 'INCOMPLETE'}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, DataBankFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalAbort, DegenerateWeightsError, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    log.info("wrote results to %s", out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
