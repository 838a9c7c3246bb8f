"""
Command-line entry point: ``novelbench {bench,run,report,cdplot}``.

A run is described by a JSON config file whose keys mirror the long flag
names (``inject_rate`` for ``--inject-rate``); flags given on the command
line override the file. Output layout under ``--out``::

    run_config.json                     resolved config, digest and seed
    instances/<dataset>/<resample>/     train.csv, test.csv, reserve.csv, meta.json
    skipped.json                        datasets that could not be sampled
    store/                              results.jsonl, timings.jsonl, run.json
    report/                             rank tables, summary, timings, Friedman, SVGs

Exit status is 0 on full success, 2 when some datasets were skipped or
some experiments failed, and 1 on a hard error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ._util import digest
from .cdplot import cd_layout, render_svg
from .data import (
    DatasetError,
    UnsamplableError,
    load_dataset,
    load_instance,
    sample_benchmark,
    save_instance,
    standardize,
    synth_dataset,
)
from .detectors import ALGORITHMS, ConfigurationError
from .harness import (
    CRITERIA,
    MissingCellsError,
    ResultStore,
    run_grid,
    select_and_score,
    timing_summary,
)
from .stats import average_ranks, format_rank_table, friedman_test, nemenyi_cd, parse_rank_table

EXIT_OK, EXIT_ERROR, EXIT_PARTIAL = 0, 1, 2

log = logging.getLogger("novelbench")

# fields that change where or how fast a run happens but not its results
_OPERATIONAL = {"out", "workers", "resume"}


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    datasets: list[str] = field(default_factory=list)
    algos: list[str] | None = None
    resamples: int = 10
    contamination: float = 0.05
    difficulty: list[str] | None = None
    clustered: bool = False
    criteria: list[str] = field(default_factory=lambda: list(CRITERIA))
    inject_rate: float | None = None
    seed: int = 0
    workers: int = 1
    steps: int | None = None
    out: str = "novelbench-out"
    resume: bool = False

    @property
    def algos_(self) -> list[str]:
        return list(ALGORITHMS) if self.algos is None else list(self.algos)

    @property
    def inject_rate_(self) -> float:
        return self.contamination if self.inject_rate is None else self.inject_rate

    def validate(self, need_datasets: bool = False) -> "RunConfig":
        if need_datasets and not self.datasets:
            raise UsageError("no datasets given")
        for spec in self.datasets:
            if not spec.startswith("synth:") and not Path(spec).exists():
                raise UsageError(f"dataset file not found: {spec}")
        bad = [a for a in self.algos_ if a not in ALGORITHMS]
        if bad:
            raise UsageError(f"unknown algorithms {bad}; choose from {list(ALGORITHMS)}")
        bad = [c for c in self.criteria if c not in CRITERIA]
        if bad:
            raise UsageError(f"unknown criteria {bad}; choose from {list(CRITERIA)}")
        if self.resamples < 1:
            raise UsageError("resamples must be >= 1")
        if not 0.0 <= self.contamination < 1.0:
            raise UsageError("contamination must lie in [0, 1)")
        if not 0.0 < self.inject_rate_ < 1.0:
            raise UsageError("inject rate must lie in (0, 1)")
        if self.workers < 1:
            raise UsageError("workers must be >= 1")
        if self.steps is not None and self.steps < 0:
            raise UsageError("steps must be >= 0")
        return self

    def content(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k not in _OPERATIONAL}

    @property
    def digest(self) -> str:
        return digest(self.content())


def _split_list(text):
    return [t for t in (s.strip() for s in text.split(",")) if t]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="novelbench",
                                description="Benchmark novelty/anomaly detectors on many datasets.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="JSON run configuration")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int)

    b = sub.add_parser("bench", help="sample benchmark instances")
    r = sub.add_parser("run", help="run the hyperparameter grid over the sampled instances")
    for sp in (b, r):
        common(sp)
        sp.add_argument("--datasets", nargs="+",
                        help="CSV files or synth:n_normal=..,n_anomaly=..,d=..,shift=..,seed=..")
        sp.add_argument("--resamples", type=int)
        sp.add_argument("--contamination", type=float)
        sp.add_argument("--difficulty", type=_split_list, help="comma-separated difficulty tags")
        sp.add_argument("--clustered", action="store_true", default=None)
    for sp in (r,):
        sp.add_argument("--algos", type=_split_list, help="comma-separated algorithms")
        sp.add_argument("--inject-rate", dest="inject_rate", type=float)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--steps", type=int, help="training steps for the deep models")
        sp.add_argument("--resume", action="store_true", default=None,
                        help="continue an existing store, skipping finished experiments")

    rep = sub.add_parser("report", help="rank tables, Friedman tests and CD diagrams from a store")
    common(rep)
    rep.add_argument("--algos", type=_split_list,
                     help="algorithms to compare (default: all present in the store)")
    rep.add_argument("--criterion", dest="criteria", type=_split_list,
                     help="comma-separated subset of " + ",".join(CRITERIA))
    rep.add_argument("--alpha", type=float, default=0.05, choices=(0.05, 0.10))

    cdp = sub.add_parser("cdplot", help="render a CD diagram from a rank-table CSV")
    cdp.add_argument("table", type=Path)
    cdp.add_argument("--out", type=Path, required=True, help="SVG file to write")
    cdp.add_argument("--alpha", type=float, default=0.05, choices=(0.05, 0.10))
    cdp.add_argument("--title")
    return p


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the JSON file, then explicit flags."""
    values = {}
    if getattr(args, "config", None) is not None:
        try:
            with open(args.config, encoding="utf-8") as fh:
                values = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(values, dict):
            raise UsageError("config file must hold a JSON object")
        known = {f.name for f in fields(RunConfig)}
        unknown = set(values) - known
        if unknown:
            raise UsageError(f"unknown config keys {sorted(unknown)}")
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return RunConfig(**values)


def parse_synth(spec: str) -> dict:
    params = {}
    for item in _split_list(spec[len("synth:"):]):
        k, sep, v = item.partition("=")
        if not sep:
            raise UsageError(f"malformed synth parameter {item!r}")
        params[k.strip()] = v.strip()
    try:
        n_normal = int(params.pop("n_normal", params.pop("n", 1000)))
        out = dict(
            n_normal=n_normal,
            n_anomaly=int(params.pop("n_anomaly", max(1, n_normal // 10))),
            d=int(params.pop("d", 4)),
            shift=float(params.pop("shift", 4.0)),
            seed=int(params.pop("seed", 0)),
        )
    except ValueError as exc:
        raise UsageError(f"bad synth spec {spec!r}: {exc}") from exc
    name = params.pop("name", None)
    if params:
        raise UsageError(f"unknown synth parameters {sorted(params)}")
    out["name"] = name or (f"synth-n{out['n_normal']}-a{out['n_anomaly']}-d{out['d']}"
                           f"-s{out['shift']:g}-r{out['seed']}")
    return out


def load_source(spec: str):
    if spec.startswith("synth:"):
        raw = synth_dataset(**parse_synth(spec))
    else:
        raw = load_dataset(spec)
    return standardize(raw)[0]


def _write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _stamp(cfg: RunConfig) -> dict:
    return {"run_digest": cfg.digest, "seed": cfg.seed}


def _progress(msg: str):
    print(msg, file=sys.stderr, flush=True)


def cmd_bench(cfg: RunConfig) -> int:
    cfg.validate(need_datasets=True)
    out = Path(cfg.out)
    _write_json(out / "run_config.json", {**cfg.content(), **_stamp(cfg)})
    skipped = []
    for spec in cfg.datasets:
        raw = load_source(spec)
        for r in range(1, cfg.resamples + 1):
            try:
                inst = sample_benchmark(raw, cfg.difficulty, cfg.contamination, cfg.clustered,
                                        resample_index=r, seed=cfg.seed)
            except UnsamplableError as exc:
                skipped.append({"dataset": raw.name, "reason": str(exc)})
                _progress(f"skip {raw.name}: {exc}")
                break
            inst.meta.update(_stamp(cfg))
            save_instance(inst, out / "instances" / raw.name / f"{r:02d}")
            _progress(f"bench {raw.name} resample {r}/{cfg.resamples}")
    skip_path = out / "skipped.json"
    if skipped:
        _write_json(skip_path, {"skipped": skipped, **_stamp(cfg)})
        return EXIT_PARTIAL
    if skip_path.exists():
        skip_path.unlink()
    return EXIT_OK


def instance_dirs(out: Path) -> list[Path]:
    return sorted(p.parent for p in (out / "instances").glob("*/*/meta.json"))


def cmd_run(cfg: RunConfig) -> int:
    cfg.validate()
    out = Path(cfg.out)
    dirs = instance_dirs(out)
    if not dirs:
        raise UsageError(f"no benchmark instances under {out / 'instances'}; run `bench` first")
    store_dir = out / "store"
    if (store_dir / "results.jsonl").exists() and not cfg.resume:
        raise UsageError(f"{store_dir} already holds results; pass --resume to continue it")
    instances = [load_instance(d) for d in dirs]
    store = ResultStore(store_dir, resume=True)
    _write_json(store_dir / "run.json", {**cfg.content(), **_stamp(cfg)})
    overrides = {} if cfg.steps is None else {"steps": cfg.steps}

    def progress(done, total, rec):
        _progress(f"[{done}/{total}] {rec.dataset}/{rec.resample} {rec.algorithm} "
                  f"config {rec.config_id}: {rec.status}")

    run_grid(instances, cfg.algos_, store, inject_rate=cfg.inject_rate_, seed=cfg.seed,
             workers=cfg.workers, deep_overrides=overrides, progress=progress)
    n_failed = sum(not r.ok for r in store.records())
    if n_failed:
        _progress(f"{n_failed} of {len(store)} experiments failed")
        return EXIT_PARTIAL
    return EXIT_OK


def build_report(store: ResultStore, criteria, algos=None, alpha: float = 0.05,
                 stamp: dict | None = None) -> dict[str, str]:
    """All report files as ``{relative name: text}``; raises before anything is written."""
    records = store.records()
    if not records:
        raise UsageError("the result store is empty")
    stamp = dict(stamp or {})
    header = [f"{k}={stamp[k]}" for k in sorted(stamp)]
    datasets = sorted({r.dataset for r in records})
    algos = list(algos) if algos else [a for a in ALGORITHMS if any(r.algorithm == a for r in records)]
    if len(algos) < 2:
        raise UsageError("a report needs results for at least two algorithms")
    files = {}
    summary = io.StringIO()
    sw = csv.writer(summary, lineterminator="\n")
    sw.writerow(["criterion", *algos, "friedman_chi2", "friedman_p", "cd"])
    friedman = {"alpha": alpha, **stamp, "criteria": {}}
    for crit in criteria:
        table = select_and_score(store, crit).score_table(datasets, algos)
        rt = average_ranks(table)
        cd = nemenyi_cd(rt.k, rt.n, alpha)
        if rt.n >= 2:
            fr = friedman_test(rt)
            stat, p = fr.statistic, fr.p_value
        else:
            stat = p = None
        friedman["criteria"][crit] = {"statistic": stat, "p_value": p, "df": rt.k - 1,
                                      "k": rt.k, "N": rt.n, "cd": cd,
                                      "reject": None if p is None else bool(p < alpha)}
        files[f"ranks_{crit}.csv"] = format_rank_table(rt, header_lines=[f"criterion={crit}", *header])
        sw.writerow([crit, *(f"{v:.2f}" for v in rt.avg),
                     "" if stat is None else repr(stat), "" if p is None else repr(p), f"{cd:.4f}"])
        svg = render_svg(cd_layout(rt.avg, rt.algorithms, cd), cd, title=f"criterion {crit}",
                         metadata={"criterion": crit, "cd": f"{cd:.4f}", "k": rt.k, "N": rt.n,
                                   **stamp})
        files[f"cd_{crit}.svg"] = svg
    files["summary.csv"] = "".join(f"# {h}\n" for h in header) + summary.getvalue()
    timing = io.StringIO()
    tw = csv.writer(timing, lineterminator="\n")
    tw.writerow(["algo", "t_f", "t_p", "n"])
    for a, t in timing_summary(store).items():
        tw.writerow([a, repr(t.fit), repr(t.predict), t.count])
    files["timing.csv"] = "".join(f"# {h}\n" for h in header) + timing.getvalue()
    files["friedman.json"] = json.dumps(friedman, indent=2, sort_keys=True) + "\n"
    return files


def cmd_report(cfg: RunConfig, alpha: float = 0.05) -> int:
    out = Path(cfg.out)
    store_dir = out / "store"
    if not (store_dir / "results.jsonl").exists():
        raise UsageError(f"no result store at {store_dir}")
    stamp = _stamp(cfg)
    run_meta = store_dir / "run.json"
    if run_meta.exists():
        with open(run_meta, encoding="utf-8") as fh:
            meta = json.load(fh)
        stamp = {"run_digest": meta.get("run_digest"), "seed": meta.get("seed")}
    files = build_report(ResultStore(store_dir, resume=True), cfg.criteria, cfg.algos, alpha, stamp)
    report_dir = out / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        with open(report_dir / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    _progress(f"wrote {len(files)} files to {report_dir}")
    return EXIT_OK


def cmd_cdplot(table: Path, out: Path, alpha: float = 0.05, title: str | None = None) -> int:
    with open(table, encoding="utf-8") as fh:
        text = fh.read()
    rt = parse_rank_table(text)
    if rt.k < 2:
        raise UsageError("a CD diagram needs at least two algorithms")
    cd = nemenyi_cd(rt.k, rt.n, alpha)
    meta = {"cd": f"{cd:.4f}", "k": rt.k, "N": rt.n, "table": digest(text)}
    for line in text.splitlines():
        if line.startswith("# ") and "=" in line:
            k, _, v = line[2:].partition("=")
            meta[k.strip()] = v.strip()
    svg = render_svg(cd_layout(rt.avg, rt.algorithms, cd), cd, title, meta)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "cdplot":
            return cmd_cdplot(args.table, args.out, args.alpha, args.title)
        cfg = resolve_config(args)
        if args.command == "bench":
            return cmd_bench(cfg)
        if args.command == "run":
            return cmd_run(cfg)
        cfg.validate()
        return cmd_report(cfg, args.alpha)
    except (UsageError, MissingCellsError, DatasetError, ConfigurationError, OSError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
