"""Batch experiment runner and validation entry point.

Runs one changepoint benchmark chain per invocation (or k chains with
split RNG streams via --chains) and emits a CSV trace plus a key=value
report.  ``--validate`` runs the oracle suite instead and exits nonzero
on any failure.

Reports are deterministic given the seed except for the single
``wall_time_seconds`` line.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .changepoint.fast import run_fast_chain
from .changepoint.model import (
    BENCHMARK_CPS,
    BENCHMARK_MEANS,
    BENCHMARK_N,
    BENCHMARK_SEED,
    Dataset,
    ModelParams,
    benchmark_dataset,
    generate_dataset,
    load_dataset,
)
from .changepoint.moves import MOVE_NAMES, VARIANTS
from .kernel import ChainConfig, ChainReport
from .rng import RNG_ALGORITHM, make_rng
from .suite import run_validation_suite


@dataclass(frozen=True)
class ExperimentConfig:
    data: Dataset
    dataset_label: str
    variant: str
    chain: ChainConfig
    trace_path: Optional[str] = None
    report_path: Optional[str] = None
    chains: int = 1
    params: ModelParams = field(default_factory=ModelParams)
    oracle: bool = False  # run the validation suite before sampling


@dataclass
class RateTable:
    """Acceptance rates keyed by (variant, move name)."""

    rows: Dict[Tuple[str, str], float]
    iterations: int
    wall_time_seconds: float

    @classmethod
    def from_reports(cls, variant: str, reports: List[ChainReport]) -> "RateTable":
        prop = sum(r.per_move_proposed for r in reports)
        acc = sum(r.per_move_accepted for r in reports)
        rows = {}
        for i, name in enumerate(MOVE_NAMES):
            rows[(variant, name)] = acc[i] / prop[i] if prop[i] > 0 else 0.0
        return cls(
            rows=rows,
            iterations=sum(r.iterations for r in reports),
            wall_time_seconds=sum(r.wall_time_seconds for r in reports),
        )


def dataset_sha256(data: Dataset) -> str:
    text = "\n".join(repr(float(v)) for v in data.y)
    return hashlib.sha256(text.encode()).hexdigest()


def write_report(
    path: str,
    cfg: ExperimentConfig,
    report: ChainReport,
    chain_index: int,
    count_hist: np.ndarray,
) -> None:
    lines = [
        "format=transmh-report-v1",
        f"variant={cfg.variant}",
        f"dataset={cfg.dataset_label}",
        f"dataset_sha256={dataset_sha256(cfg.data)}",
        f"dataset_n={cfg.data.n}",
        f"iterations={cfg.chain.iterations}",
        f"burnin={cfg.chain.burnin}",
        f"thin={cfg.chain.thin}",
        f"seed={cfg.chain.seed}",
        f"chains={cfg.chains}",
        f"chain_index={chain_index}",
        f"rng={RNG_ALGORITHM}",
        "rng_split_rule=root stream if chains=1 else "
        "SeedSequence(seed).spawn(chains)[chain_index]",
    ]
    rates = report.acceptance_rates()
    for i, name in enumerate(MOVE_NAMES):
        lines.append(f"proposed.{name}={report.per_move_proposed[i]}")
        lines.append(f"accepted.{name}={report.per_move_accepted[i]}")
        lines.append(f"rate.{name}={rates[i]:.6f}")
    lines.append(f"final_count={report.final_state.space}")
    top = int(np.argmax(count_hist)) if count_hist.sum() else report.final_state.space
    lines.append(f"posterior_mode_count={top}")
    lines.append(f"wall_time_seconds={report.wall_time_seconds:.3f}")
    Path(path).write_text("\n".join(lines) + "\n")


class TraceWriter:
    """CSV sink: iteration, count, positions..., heights... per row."""

    def __init__(self, path: str):
        self._fh = open(path, "w")
        self._fh.write("# iteration,count,positions...,heights...\n")

    def __call__(self, iteration: int, space: int, coords: tuple) -> None:
        cps = coords[:space]
        heights = coords[space:]
        row = [str(iteration), str(space)]
        row += [str(int(p)) for p in cps]
        row += [repr(float(h)) for h in heights]
        self._fh.write(",".join(row) + "\n")

    def close(self) -> None:
        self._fh.close()


def _chain_paths(base: Optional[str], index: int, chains: int) -> Optional[str]:
    if base is None:
        return None
    if chains == 1:
        return base
    return f"{base}.chain{index}"


def _run_one_chain(args) -> Tuple[int, ChainReport, np.ndarray]:
    cfg, index, seed_seq = args
    rng = make_rng(seed_seq) if seed_seq is not None else None
    trace_path = _chain_paths(cfg.trace_path, index, cfg.chains)
    sink = TraceWriter(trace_path) if trace_path else None
    try:
        report, hist = run_fast_chain(
            cfg.data, cfg.params, cfg.variant, cfg.chain, sink=sink, rng=rng
        )
    finally:
        if sink is not None:
            sink.close()
    report_path = _chain_paths(cfg.report_path, index, cfg.chains)
    if report_path:
        write_report(report_path, cfg, report, index, hist)
    return index, report, hist


def run_experiment(cfg: ExperimentConfig) -> RateTable:
    """Run the configured chains; write traces/reports; return the rate table.

    A single chain runs on the root stream of the seed; k > 1 chains use
    SeedSequence(seed).spawn(k)[i].  With ``oracle`` set, the validation
    suite must pass before any sampling happens.
    """
    if cfg.oracle:
        results, ok = run_validation_suite()
        if not ok:
            failed = ", ".join(r.name for r in results if not r.passed)
            raise RuntimeError(f"validation suite failed: {failed}")
    if cfg.chains == 1:
        results = [_run_one_chain((cfg, 0, None))]
    else:
        children = np.random.SeedSequence(cfg.chain.seed).spawn(cfg.chains)
        jobs = [(cfg, i, children[i]) for i in range(cfg.chains)]
        with ProcessPoolExecutor(max_workers=cfg.chains) as pool:
            results = list(pool.map(_run_one_chain, jobs))
    results.sort(key=lambda r: r[0])
    reports = [r[1] for r in results]
    return RateTable.from_reports(cfg.variant, reports)


def _parse_int_list(text: str) -> Tuple[int, ...]:
    if text.strip().lower() in ("none", "-", ""):
        return ()
    return tuple(int(t) for t in text.split(","))


def _parse_float_list(text: str) -> Tuple[float, ...]:
    return tuple(float(t) for t in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="transmh",
        description="Trans-dimensional MH changepoint benchmark runner",
    )
    src = parser.add_mutually_exclusive_group()
    src.add_argument("--data", help="dataset file (one observation per line)")
    src.add_argument(
        "--generate",
        nargs=4,
        metavar=("N", "CPS", "MEANS", "SEED"),
        help="generate a dataset: length, comma-separated changepoints "
        "('none' for empty), comma-separated segment means, seed",
    )
    parser.add_argument(
        "--variant", choices=VARIANTS, default="plain", help="birth/death flavour"
    )
    parser.add_argument("--iterations", type=int, default=10_000_000)
    parser.add_argument("--burnin", type=int, default=0)
    parser.add_argument("--thin", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--trace", help="trace CSV output path")
    parser.add_argument("--report", help="report output path")
    parser.add_argument(
        "--chains", type=int, default=1, help="independent chains on split streams"
    )
    parser.add_argument(
        "--validate", action="store_true", help="run the oracle suite and exit"
    )
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    if args.validate:
        results, ok = run_validation_suite()
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'} {r.name} -- {r.detail}")
        print(f"SUITE {'PASS' if ok else 'FAIL'} ({sum(r.passed for r in results)}"
              f"/{len(results)} checks)")
        return 0 if ok else 1

    try:
        if args.data:
            data = load_dataset(args.data)
            label = args.data
        elif args.generate:
            n = int(args.generate[0])
            cps = _parse_int_list(args.generate[1])
            means = _parse_float_list(args.generate[2])
            seed = int(args.generate[3])
            data = generate_dataset(n, cps, means, obs_var=1.0, seed=seed)
            label = f"generated(n={n},cps={cps},means={means},seed={seed})"
        else:
            data = benchmark_dataset()
            label = (
                f"benchmark(n={BENCHMARK_N},cps={BENCHMARK_CPS},"
                f"means={BENCHMARK_MEANS},seed={BENCHMARK_SEED})"
            )

        if args.chains < 1:
            raise ValueError("--chains must be >= 1")
        cfg = ExperimentConfig(
            data=data,
            dataset_label=label,
            variant=args.variant,
            chain=ChainConfig(
                iterations=args.iterations,
                burnin=args.burnin,
                thin=args.thin,
                seed=args.seed,
            ),
            trace_path=args.trace,
            report_path=args.report,
            chains=args.chains,
        )
        table = run_experiment(cfg)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"variant={args.variant} iterations={table.iterations} "
          f"wall_time={table.wall_time_seconds:.2f}s")
    for (variant, move), rate in table.rows.items():
        print(f"rate.{move}={rate:.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
