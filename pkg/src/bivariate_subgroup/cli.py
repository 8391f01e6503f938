"""Command-line pipeline: summarize, fit, measures, check, compare, simulate."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checking import (DEFAULT_OVERLAY_REPLICATES, Census, overlay_table, rmst_check,
                       simulate_ppd)
from .config import ConfigError, RunConfig, defaults_text, load_config
from .design import ModelSpec
from .estimator import BivariateSubgroupModel
from .measures import compute_measures, forest_table, summarize_measures
from .sampler import DrawSet
from .simulate import cell_params_to_dict, load_cell_params, simulate_trial
from .trial_data import (SummaryTable, TrialDataError, compute_summaries, ingest_patients,
                         validate_summaries, write_patients)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NONCONVERGED = 3
COMMANDS = ("summarize", "fit", "measures", "check", "compare", "simulate")


class PipelineError(Exception):
    def __init__(self, message: str, status: int = EXIT_INPUT):
        super().__init__(message)
        self.status = status


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


class Pipeline:
    def __init__(self, config: RunConfig, allow_nonconverged: bool = False, log=print):
        self.config = config
        self.allow_nonconverged = allow_nonconverged
        self.log = log
        self.out = config.resolved_output_dir()
        self._records = None
        self._table = None

    # -- inputs -------------------------------------------------------------

    @property
    def records(self):
        if self.config.patients_file is None:
            return None
        if self._records is None:
            path = Path(self.config.patients_file)
            if not path.is_file():
                raise PipelineError(f"patients file not found: {path}")
            self._records = ingest_patients(path, self.config.factor_scheme())
        return self._records

    @property
    def table(self) -> SummaryTable:
        if self._table is None:
            if self.records is not None:
                table = compute_summaries(self.records, self.config.factor_scheme())
            else:
                path = Path(self.config.summary_file)
                if not path.is_file():
                    raise PipelineError(f"summary file not found: {path}")
                table = SummaryTable.load(path)
            report = validate_summaries(table)
            if not report.ok:
                raise PipelineError(f"summary table failed validation:\n{report}")
            self._table = table
        return self._table

    def _estimator(self, spec: ModelSpec) -> BivariateSubgroupModel:
        c = self.config
        s = c.sampler
        return BivariateSubgroupModel(
            kind=spec.kind, base=spec.base, hyperparams=c.hyperparams.build(), chains=s.chains,
            iterations=s.iterations, warmup=s.warmup, seed=c.seed, algorithm=s.algorithm,
            target_accept=s.target_accept, max_depth=s.max_depth, rhat_threshold=s.rhat_threshold)

    def _path(self, stem: str, spec: ModelSpec, suffix: str) -> Path:
        return self.out / f"{stem}_{spec.name}{suffix}"

    def _comments(self, spec: ModelSpec | None = None) -> dict:
        d = self.config.provenance()
        if spec is not None:
            d["model"] = spec.name
        return d

    def _fit(self, spec: ModelSpec) -> BivariateSubgroupModel:
        self.log(f"fitting {spec.name} ...")
        est = self._estimator(spec).fit(self.table, meta=self.config.provenance())
        rep = est.convergence_
        self.log(f"  max R-hat {rep.max_rhat:.4f}, converged={rep.converged}")
        return est

    def _fitted(self, spec: ModelSpec) -> BivariateSubgroupModel:
        path = self._path("draws", spec, ".jsonl")
        if not path.is_file():
            raise PipelineError(f"no draws for model {spec.name!r} at {path}; run `fit` first")
        draws = DrawSet.load(path)
        return self._estimator(spec).from_draws(self.table, draws)

    def _require_converged(self, failures: list[str]) -> int:
        if failures and not self.allow_nonconverged:
            self.log("not converged: " + ", ".join(failures) + " (use --allow-nonconverged to accept)")
            return EXIT_NONCONVERGED
        return EXIT_OK

    # -- commands -----------------------------------------------------------

    def summarize(self) -> int:
        path = self.out / "summary.json"
        self.table.save(path)
        _write_json(self.out / "summary.provenance.json", self.config.provenance())
        self.log(f"wrote {path}")
        return EXIT_OK

    def fit(self) -> int:
        failures = []
        for spec in self.config.model_specs():
            est = self._fit(spec)
            est.draws_.save(self._path("draws", spec, ".jsonl"))
            report = est.convergence_.to_dict()
            report.update(self._comments(spec))
            _write_json(self._path("convergence", spec, ".json"), report)
            if not est.convergence_.converged:
                failures.append(spec.name)
        return self._require_converged(failures)

    def measures(self) -> int:
        mc = self.config.measures.build()
        for spec in self.config.model_specs():
            est = self._fitted(spec)
            values = compute_measures(est.cell_params_, mc)
            summaries = summarize_measures(values, est.subgroup_labels)
            comments = self._comments(spec)
            comments["measure_config"] = json.dumps(mc.to_dict(), sort_keys=True)
            comments["tau_h_note"] = "utility truncation is a configurable default"
            path = self._path("forest", spec, ".csv")
            path.write_text(forest_table(summaries, spec.name, comments))
            self.log(f"wrote {path}")
        return EXIT_OK

    def _census(self, rng) -> Census:
        if self.records is not None:
            return Census.reverse_km(self.records, self.config.factor_scheme(), rng)
        horizon = self.config.checking.horizon
        if horizon is None:
            raise PipelineError("checking.horizon is required when only a summary table is available")
        return Census.administrative(self.table, horizon)

    def check(self) -> int:
        ck = self.config.checking
        for spec in self.config.model_specs():
            est = self._fitted(spec)
            census = self._census(np.random.default_rng([self.config.seed, 1]))
            result = self._comments(spec)
            obs = None
            if self.records is not None:
                t = np.array([r.time for r in self.records])
                e = np.array([r.event for r in self.records])
                obs = (t, e, census.arm)
                ppc = rmst_check(est.cell_params_, census, t, e, ck.rmst_tau, ck.replicates,
                                 self.config.seed)
                result["ppc"] = ppc.to_dict()
            else:
                result["ppc"] = None
                result["note"] = "no patient-level data: observed statistics unavailable"
            _write_json(self._path("ppc", spec, ".json"), result)
            reps = simulate_ppd(est.cell_params_, census, ck.overlay_replicates or DEFAULT_OVERLAY_REPLICATES,
                                self.config.seed + 1)
            args = obs if obs is not None else (None, None, None)
            self._path("overlay", spec, ".csv").write_text(
                overlay_table(reps, *args, comments=self._comments(spec)))
            self.log(f"wrote checks for {spec.name}")
        return EXIT_OK

    def compare(self) -> int:
        rows, failures = {}, []
        for spec in self.config.model_specs():
            est = self._fit(spec)
            d, w = est.dic(), est.waic()
            rows[spec.name] = {"dic": d.to_dict(), "waic": w.to_dict(),
                               "converged": est.convergence_.converged,
                               "max_rhat": est.convergence_.to_dict()["max_rhat"]}
            if not est.convergence_.converged:
                failures.append(spec.name)
        report = {"models": rows, **self.config.provenance()}
        names = list(rows)
        if len(names) >= 2:
            ref = names[-1]
            report["differences_vs"] = ref
            report["differences"] = {
                n: {"dic": rows[n]["dic"]["value"] - rows[ref]["dic"]["value"],
                    "waic": rows[n]["waic"]["value"] - rows[ref]["waic"]["value"]}
                for n in names[:-1]
            }
        _write_json(self.out / "compare.json", report)
        self.log(f"wrote {self.out / 'compare.json'}")
        return self._require_converged(failures)

    def simulate(self) -> int:
        sim = self.config.simulate
        if sim is None:
            raise PipelineError("the simulate command needs a 'simulate' section")
        if self.config.patients_file is None:
            raise PipelineError("the simulate command writes to patients_file; set it in the config")
        scheme = self.config.factor_scheme()
        cell = load_cell_params(sim.cell_params_file)
        records = simulate_trial(cell, scheme, sim.build(), seed=self.config.seed)
        path = Path(self.config.patients_file)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_patients(records, scheme, path)
        truth = {"cell_params": cell_params_to_dict(cell), **self.config.provenance()}
        _write_json(self.out / "simulation_truth.json", truth)
        self.log(f"wrote {len(records)} patients to {path}")
        return EXIT_OK

    def run(self, command: str) -> int:
        if command not in COMMANDS:
            raise PipelineError(f"unknown command {command!r}")
        self.out.mkdir(parents=True, exist_ok=True)
        return getattr(self, command)()


def run_pipeline(config: RunConfig, command: str, allow_nonconverged: bool = False, log=print) -> int:
    return Pipeline(config, allow_nonconverged, log).run(command)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bivsub",
        description="Bayesian subgroup analysis of a primary event time and a binary adverse event.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=(
            "commands:\n"
            "  summarize  write the sufficient-statistic table (summary.json)\n"
            "  fit        sample each model; writes draws_<model>.jsonl and convergence_<model>.json\n"
            "  measures   forest tables (forest_<model>.csv) from saved draws\n"
            "  check      posterior predictive RMST p-values and curve overlays\n"
            "  compare    fit every model and write DIC/WAIC to compare.json\n"
            "  simulate   generate a synthetic trial into patients_file\n\n"
            "config defaults (a config needs at least 'seed' and one input file):\n"
            f"{defaults_text()}\n\n"
            f"The output directory can be overridden with $BIVSUB_OUTPUT_DIR.\n"
            "Exit status: 0 success, 2 invalid input or config, 3 not converged."
        ),
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to the JSON run configuration")
    parser.add_argument("--allow-nonconverged", action="store_true",
                        help="do not fail when some split R-hat exceeds the threshold")
    parser.add_argument("--quiet", action="store_true", help="suppress progress messages")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    def log(msg):
        if not args.quiet:
            print(msg, file=sys.stderr)

    try:
        config = load_config(args.config)
        return run_pipeline(config, args.command, args.allow_nonconverged, log)
    except (ConfigError, PipelineError, TrialDataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return getattr(exc, "status", EXIT_INPUT)


if __name__ == "__main__":
    sys.exit(main())
