"""Command-line runner for the experiment catalog.

Exit codes: 0 every rule passed, 1 some rule failed (or an experiment raised),
2 unknown experiment or invalid configuration, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import hashlib
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import experiments as ex
from . import fieldio
from .maximal import BACKENDS
from .solvers import FAMILIES, CorpusSpec

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
RESERVED = ("run", "corpus")
RADIUS_POLICIES = ("geometric", "dense")


class ConfigError(ValueError):
    pass


class UnknownExperiment(ConfigError):
    def __init__(self, name):
        super().__init__(f"unknown experiment: {name}")
        self.name = name


@dataclasses.dataclass
class RunConfig:
    experiments: list
    settings: ex.Settings
    options: dict  # experiment name -> Options
    out: Path = Path("results")
    jobs: int = 1

    def validate(self) -> None:
        for name in self.experiments:
            if name not in ex.BY_NAME:
                raise UnknownExperiment(name)
        for name in self.options:
            if name not in ex.BY_NAME:
                raise UnknownExperiment(name)
        s = self.settings
        for ladder in (s.grids, s.parabolic_grids):
            if ladder is not None and any(b <= a for a, b in zip(ladder, ladder[1:])):
                raise ConfigError(f"grid ladder must be strictly increasing: {list(ladder)}")
        for p in s.p or ():
            if not p > 1:
                raise ConfigError(f"p must lie in (1, inf]: {p}")
        if s.backend not in BACKENDS:
            raise ConfigError(f"unknown maximal backend: {s.backend}")
        if s.radius_ladder not in RADIUS_POLICIES:
            raise ConfigError(f"unknown radius ladder: {s.radius_ladder}")
        if s.corpus.family not in FAMILIES:
            raise ConfigError(f"unknown corpus family: {s.corpus.family}")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _names(text):
    return [v.strip() for v in text.replace("\n", ",").split(",") if v.strip()]


def load_config(path=None) -> RunConfig:
    """Build a RunConfig from an INI file (or the defaults when ``path`` is None).

    Without an ``experiments`` key in ``[run]`` the experiments are the
    sections present in the file, or the whole catalog when there are none.
    """
    cp = configparser.ConfigParser()
    if path is not None:
        with open(path) as fh:  # OSError propagates: exit 3
            cp.read_file(fh)
    run = cp["run"] if cp.has_section("run") else {}
    try:
        settings = ex.Settings(
            n=int(run.get("n", 2)),
            seed=int(run.get("seed", 0)),
            grids=_ints(run["grids"]) if "grids" in run else None,
            parabolic_grids=_ints(run["parabolic_grids"]) if "parabolic_grids" in run else None,
            p=_floats(run["p"]) if "p" in run else None,
            backend=run.get("maximal_backend", "mask"),
            radius_ladder=run.get("radius_ladder", "geometric"),
        )
        if cp.has_section("corpus"):
            c = cp["corpus"]
            base = CorpusSpec()
            settings.corpus = CorpusSpec(seed=int(c.get("seed", base.seed)), count=int(c.get("count", base.count)),
                                         family=c.get("family", base.family), decay=float(c.get("decay", base.decay)))
        jobs = int(run.get("jobs", 1))
    except ValueError as err:
        raise ConfigError(str(err)) from err
    sections = [s for s in cp.sections() if s not in RESERVED]
    options = {s: ex.Options(cp[s]) for s in sections}
    if "experiments" in run:
        names = _names(run["experiments"])
    elif sections:
        names = list(sections)
    else:
        names = [e.name for e in ex.CATALOG]
    return RunConfig(names, settings, options, Path(run.get("out", "results")), jobs)


def inputs_hash(name: str, settings: ex.Settings, options: dict) -> str:
    blob = json.dumps({"experiment": name, "settings": dataclasses.asdict(settings), "options": dict(options)},
                      sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def run_experiment(name: str, settings: ex.Settings, options: dict, keep_fields: bool = False) -> dict:
    """Run one catalog entry; the result is plain data so it crosses process boundaries."""
    exp = ex.BY_NAME[name]
    result = {"experiment": name, "anchor": exp.anchor, "inputs_hash": inputs_hash(name, settings, options)}
    try:
        outcome = exp.run(settings, ex.Options(options))
    except Exception as err:  # noqa: BLE001 - reported as a failed rule
        result.update(reports=[], rules=[ex.Rule("completed", False, f"{type(err).__name__}: {err}",
                                                 "no exception").to_dict()], passed=False)
        return result
    result.update(reports=[r.to_dict() for r in outcome.reports], rules=[r.to_dict() for r in outcome.rules],
                  passed=outcome.passed)
    if keep_fields:
        result["fields"] = {k: fieldio.field_bytes(v) for k, v in outcome.fields.items()}
    return result


def run_all(cfg: RunConfig, keep_fields: bool = False) -> list[dict]:
    args = [(n, cfg.settings, dict(cfg.options.get(n, {})), keep_fields) for n in cfg.experiments]
    if cfg.jobs == 1 or len(args) <= 1:
        return [run_experiment(*a) for a in args]
    with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(args))) as pool:
        return list(pool.map(run_experiment, *zip(*args)))  # map keeps submission order


CSV_COLUMNS = ["experiment", "case", "level", "label", "p", "grid", "lhs", "rhs", "ratio", "degenerate",
               "rhs_terms"]


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (dict, list)):
        return json.dumps(v, sort_keys=True)
    return "" if v is None else str(v)


def reports_csv(results: list[dict]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_COLUMNS)
    for res in results:
        for rep in res["reports"]:
            row = dict(rep, experiment=res["experiment"], case=rep["extra"].get("case"))
            wr.writerow([_cell(row.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def _num(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "[" + ", ".join(_num(x) for x in v) + "]"
    return str(v)


def summary_text(results: list[dict]) -> str:
    lines = []
    for res in results:
        status = "PASS" if res["passed"] else "FAIL"
        lines.append(f"== {res['experiment']}  [{status}]")
        lines.append(f"   {res['anchor']}")
        for rep in res["reports"]:
            case = rep["extra"].get("case") or rep["label"]
            lvl = "-" if rep["level"] is None else rep["level"]
            ratio = "degenerate" if rep["degenerate"] else _num(rep["ratio"])
            grid = ", ".join(f"{k}={_num(v)}" for k, v in sorted(rep["grid"].items()))
            p = "" if rep["p"] is None else f" p={_num(rep['p'])}"
            lines.append(f"   level {lvl} {case}{p} ({grid}): lhs={_num(rep['lhs'])} rhs={_num(rep['rhs'])} "
                         f"ratio={ratio}")
        for rule in res["rules"]:
            lines.append(f"   {'PASS' if rule['passed'] else 'FAIL'}  {rule['name']}: "
                         f"{_num(rule['value'])} ({rule['threshold']})")
    n_fail = sum(not r["passed"] for r in results)
    lines.append(f"{len(results)} experiments, {n_fail} failed")
    return "\n".join(lines) + "\n"


def write_outputs(out: Path, results: list[dict]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    clean = [{k: v for k, v in r.items() if k != "fields"} for r in results]
    (out / "reports.json").write_text(json.dumps(clean, sort_keys=True, indent=1) + "\n")
    (out / "reports.csv").write_text(reports_csv(results))
    (out / "summary.txt").write_text(summary_text(results))
    for res in results:
        for name, blob in sorted(res.get("fields", {}).items()):
            d = out / "fields" / res["experiment"]
            d.mkdir(parents=True, exist_ok=True)
            (d / f"{name}.czf").write_bytes(blob)


def list_experiments(as_json: bool = False, stream=None) -> None:
    stream = stream or sys.stdout
    if as_json:
        json.dump({"experiments": ex.catalog_json()}, stream, indent=1, sort_keys=True)
        stream.write("\n")
        return
    for e in ex.CATALOG:
        stream.write(f"{e.name}\n    {e.anchor}\n    {e.summary}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="czlab", description="Run numerical interior-estimate experiments.")
    ap.add_argument("command", nargs="?", choices=("run", "list"), default="run")
    ap.add_argument("--config", type=Path, help="INI file with [run], [corpus] and per-experiment sections")
    ap.add_argument("--experiment", action="append", metavar="NAME",
                    help="run only this experiment (repeatable, overrides the config list)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", type=Path)
    ap.add_argument("--maximal-backend", choices=BACKENDS)
    ap.add_argument("--radius-ladder", choices=RADIUS_POLICIES)
    ap.add_argument("--jobs", type=int, help="worker processes (results do not depend on this)")
    ap.add_argument("--json", action="store_true", help="machine-readable output (catalog or run summary)")
    ap.add_argument("--dump-fields", action="store_true", help="also write the fields experiments expose")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        list_experiments(args.json)
        return EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.experiment:
            cfg.experiments = list(args.experiment)
        if args.seed is not None:
            cfg.settings.seed = args.seed
            cfg.settings.corpus = dataclasses.replace(cfg.settings.corpus, seed=args.seed)
        if args.out is not None:
            cfg.out = args.out
        if args.maximal_backend:
            cfg.settings.backend = args.maximal_backend
        if args.radius_ladder:
            cfg.settings.radius_ladder = args.radius_ladder
        if args.jobs is not None:
            cfg.jobs = args.jobs
        cfg.validate()
    except UnknownExperiment as err:
        print(err.name, file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, configparser.Error) as err:
        print(f"invalid configuration: {err}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as err:
        print(f"cannot read configuration: {err}", file=sys.stderr)
        return EXIT_IO

    results = run_all(cfg, args.dump_fields)
    try:
        write_outputs(cfg.out, results)
    except OSError as err:
        print(f"cannot write reports: {err}", file=sys.stderr)
        return EXIT_IO
    passed = all(r["passed"] for r in results)
    if args.json:
        json.dump({"passed": passed, "experiments": {r["experiment"]: r["passed"] for r in results}},
                  sys.stdout, sort_keys=True)
        sys.stdout.write("\n")
    else:
        sys.stdout.write(summary_text(results))
    return EXIT_OK if passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
