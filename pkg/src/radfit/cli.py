"""Command-line interface: ``radfit <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 model or
contract error. Every subcommand computes its results before writing any
file, so a failing run leaves no partial output.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from radfit.config import WORKFLOWS, RunConfig, load_run_config
from radfit.core import ContractError, DataError, DeviceId, DomainError, compute_fit
from radfit.ingest import PipelineFile, load_dataset, load_pipeline_file, read_manifest, validate_dataset, write_pipeline_file
from radfit.learners import fit_classifier, model_from_dict, model_to_dict
from radfit.plotting import PLOT_KINDS, emit_plot
from radfit.preprocess import assemble_design_matrix, preprocess_records
from radfit.synthgen import SynthManifest, generate_corpus, write_corpus
from radfit.workflows import (
    CurveModelBank,
    predict_stress_curve,
    run_curve_prediction,
    run_direct_classification,
    run_multistep_classification,
    train_curve_model_bank,
)
from radfit.workflows.classification import STATUS_NAMES, group_labels

CONFIG_ECHO = "radfit_config.json"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONTRACT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _json_dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _resolve_seed(flag: Optional[int]) -> Optional[int]:
    if flag is not None:
        return flag
    env = os.environ.get("RADFIT_SEED")
    if env is None or env == "":
        return None
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"RADFIT_SEED must be an integer, got {env!r}") from None


def _run_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if getattr(args, "config", None) else RunConfig()
    return cfg.with_overrides(
        seed=_resolve_seed(args.seed),
        workflow=getattr(args, "mode", None),
        model=getattr(args, "model", None),
        balancing=getattr(args, "balancing", None),
        group_key=getattr(args, "group_key", None),
        flux=getattr(args, "flux", None),
    )


def _write_outputs(out_dir: Path, files: dict, config_doc: Optional[dict]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out_dir / name).write_text(text)
    if config_doc is not None:
        (out_dir / CONFIG_ECHO).write_text(_json_dump(config_doc))


# ------------------------------------------------------------ subcommands


def cmd_synth(args) -> int:
    manifest = SynthManifest()
    if args.manifest:
        try:
            manifest = SynthManifest.from_json(json.loads(Path(args.manifest).read_text()))
        except json.JSONDecodeError as exc:
            raise DataError(f"{args.manifest}: invalid JSON ({exc})") from None
    seed = _resolve_seed(args.seed)
    if seed is not None:
        manifest = SynthManifest.from_json({**manifest.to_json(), "seed": seed})
    records, truths = generate_corpus(manifest)
    out = Path(args.out)
    write_corpus(records, truths, out)
    (out / "synth_manifest.json").write_text(_json_dump(manifest.to_json()))
    print(f"wrote {len(records)} devices to {out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    records = load_dataset(read_manifest(args.manifest))
    report = validate_dataset(records)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["device_id", "problem"])
    for v in report.violations:
        w.writerow([str(v.device_id), v.message])
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    print(f"{len(records)} devices, {len(report.violations)} problems", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_DATA


def cmd_preprocess(args) -> int:
    cfg = _run_config(args)
    records = load_dataset(read_manifest(args.manifest))
    report = validate_dataset(records)
    if not report.ok:
        raise DataError("; ".join(f"{v.device_id}: {v.message}" for v in report.violations[:5]))
    result = preprocess_records(
        records, cfg.outlier_config(), cfg.drop_fraction, cfg.baseline_window,
        cfg.grids.sweep_count, cfg.grids.fluence_count, cfg.criterion_current,
    )
    out = Path(args.out)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["device_id", "status"])
    for rec in result.records:
        w.writerow([str(rec.id), str(rec.status)])
    out.parent.mkdir(parents=True, exist_ok=True)
    write_pipeline_file(result.rows, result.pipeline.grids, out)
    (out.parent / (out.stem + "_statuses.csv")).write_text(buf.getvalue())
    (out.parent / CONFIG_ECHO).write_text(_json_dump(cfg.to_json()))
    print(f"{len(result.rows)} devices kept, {len(result.outliers)} outliers excluded", file=sys.stderr)
    return EXIT_OK


def _evaluate(pipeline: PipelineFile, cfg: RunConfig) -> dict:
    if cfg.workflow == "curve":
        rep = run_curve_prediction(pipeline, cfg.curve_config())
        return {"outcomes.csv": rep.outcome_table_csv(), "curves.csv": rep.curves_csv(), "summary.csv": rep.summary_csv()}
    if cfg.workflow == "direct":
        rep = run_direct_classification(pipeline, cfg.direct_config())
    else:
        rep = run_multistep_classification(pipeline, cfg.group_key, cfg.direct_config())
    return {"outcomes.csv": rep.outcome_table_csv(), "folds.csv": rep.fold_table_csv(), "summary.csv": rep.summary_csv()}


def cmd_evaluate(args) -> int:
    cfg = _run_config(args)
    pipeline = load_pipeline_file(args.pipeline)
    files = _evaluate(pipeline, cfg)
    _write_outputs(Path(args.out), files, cfg.to_json())
    sys.stdout.write(files["summary.csv"])
    return EXIT_OK


def _train_artifact(pipeline: PipelineFile, cfg: RunConfig) -> tuple[dict, str]:
    """Fit on every device; return the artifact and an in-sample report."""
    manufacturers = sorted({r.manufacturer for r in pipeline.rows})
    if cfg.workflow == "curve":
        bank = train_curve_model_bank(pipeline, cfg.sampled_indices, cfg.hyperparameters, None, cfg.seed)
        art = {"kind": "curve", "bank": bank.to_dict()}
        dm = assemble_design_matrix(pipeline.rows, pipeline.grids, bank.indices, manufacturers)
        err = predict_stress_curve(bank, dm) - dm.y
        report = f"devices,training_rmse\n{len(dm.ids)},{float(np.sqrt(np.mean(err ** 2)))!r}\n"
        return art, report
    dm = assemble_design_matrix(pipeline.rows, pipeline.grids, "status", manufacturers)
    y = dm.y.astype(int)
    if np.unique(y).size < 2:
        raise ContractError("training data holds a single class")
    art = {"kind": cfg.workflow, "model_kind": cfg.model, "columns": list(dm.columns), "manufacturers": manufacturers}
    if cfg.workflow == "direct":
        model = fit_classifier(cfg.model, dm.X, y, cfg.hyperparameters, cfg.seed, tie_label=1)
        art["model"] = model_to_dict(model)
        pred = np.asarray(model.predict(dm.X)).astype(int)
    else:
        groups, keep = group_labels(dm, cfg.group_key)
        grouper = fit_classifier(cfg.model, dm.X[:, keep], groups, cfg.hyperparameters, cfg.seed)
        art.update(group_key=cfg.group_key, group_columns=[bool(k) for k in keep], grouper=model_to_dict(grouper), groups={})
        pred = np.zeros_like(y)
        for g in np.unique(groups):
            members = groups == g
            m = fit_classifier(cfg.model, dm.X[members], y[members], cfg.hyperparameters, cfg.seed, tie_label=1)
            art["groups"][str(g)] = model_to_dict(m)
            pred[members] = np.asarray(m.predict(dm.X[members])).astype(int)
    report = f"devices,training_accuracy\n{len(y)},{float(np.mean(pred == y))!r}\n"
    return art, report


def cmd_train(args) -> int:
    cfg = _run_config(args)
    pipeline = load_pipeline_file(args.pipeline)
    art, report = _train_artifact(pipeline, cfg)
    _write_outputs(Path(args.out), {"model.json": _json_dump(art), "training_report.csv": report}, cfg.to_json())
    return EXIT_OK


def cmd_predict(args) -> int:
    try:
        art = json.loads(Path(args.model).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.model}: invalid JSON ({exc})") from None
    pipeline = load_pipeline_file(args.pipeline)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    kind = art.get("kind")
    if kind == "curve":
        bank = CurveModelBank.from_dict(art["bank"])
        dm = assemble_design_matrix(pipeline.rows, pipeline.grids, "status", bank.manufacturers)
        curves = predict_stress_curve(bank, dm)
        w.writerow(["device_id", *[f"flu_{k}" for k in bank.indices]])
        for d, c in zip(dm.ids, curves):
            w.writerow([str(d), *[repr(float(v)) for v in c]])
    elif kind in ("direct", "multistep"):
        dm = assemble_design_matrix(pipeline.rows, pipeline.grids, "status", art["manufacturers"])
        if list(dm.columns) != art["columns"]:
            raise ContractError("device rows do not match the model's predictor schema")
        w.writerow(["device_id", "predicted_status"] + (["predicted_group"] if kind == "multistep" else []))
        if kind == "direct":
            pred = np.asarray(model_from_dict(art["model"]).predict(dm.X)).astype(int)
            for d, p in zip(dm.ids, pred):
                w.writerow([str(d), STATUS_NAMES[int(p)]])
        else:
            keep = np.array(art["group_columns"], dtype=bool)
            groups = model_from_dict(art["grouper"]).predict(dm.X[:, keep])
            for d, x, g in zip(dm.ids, dm.X, groups):
                p = int(np.asarray(model_from_dict(art["groups"][str(g)]).predict(x[None, :]))[0])
                w.writerow([str(d), STATUS_NAMES[p], str(g)])
    else:
        raise ContractError(f"unknown model artifact kind {kind!r}")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(buf.getvalue())
    return EXIT_OK


def cmd_fit(args) -> int:
    r = compute_fit(args.failed, args.total, args.fluence, args.flux)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["failed", "total", "final_fluence", "flux", "fit", "mtbf_hours"])
    w.writerow([r.failed_count, r.total_count, repr(r.final_fluence), repr(r.flux), repr(r.fit),
                "inf" if r.mtbf_infinite else repr(r.mtbf)])
    return EXIT_OK


def cmd_plot(args) -> int:
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    emit_plot(Path(args.input), args.kind, args.out, args.device)
    return EXIT_OK


# ----------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="radfit", description="Reliability estimation from neutron beam experiments.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text, description=help_text)
        sp.set_defaults(func=func)
        sp.add_argument("--seed", type=int, default=None, help="master seed (default 42, or $RADFIT_SEED)")
        return sp

    s = add("synth", cmd_synth, "generate a synthetic corpus of raw files plus ground truth")
    s.add_argument("--manifest", help="synthetic-corpus manifest JSON (defaults apply when omitted)")
    s.add_argument("--out", required=True, help="output directory")

    s = add("ingest", cmd_ingest, "load and validate a raw dataset")
    s.add_argument("--manifest", required=True, help="dataset manifest.json")
    s.add_argument("--out", help="validation report CSV (stdout when omitted)")

    def workflow_flags(sp):
        sp.add_argument("--config", help="run configuration JSON")
        sp.add_argument("--mode", choices=WORKFLOWS)
        sp.add_argument("--model", help="logistic|forest|boosting (aliases lr, rf, gb, xgb)")
        sp.add_argument("--balancing", help="none|oversample|undersample|smote(k)")
        sp.add_argument("--group-key", dest="group_key", choices=("manufacturer", "voltage"))
        sp.add_argument("--flux", type=float, help="beam flux for FIT estimates, n/(cm^2 s)")

    s = add("preprocess", cmd_preprocess, "screen outliers, label devices and write the pipeline file")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True, help="pipeline CSV path")
    s.add_argument("--config", help="run configuration JSON")

    s = add("train", cmd_train, "fit a model on every device of a pipeline file")
    s.add_argument("--pipeline", required=True)
    s.add_argument("--out", required=True, help="output directory")
    workflow_flags(s)

    s = add("evaluate", cmd_evaluate, "cross-validate a workflow and write report CSVs")
    s.add_argument("--pipeline", required=True)
    s.add_argument("--out", required=True, help="output directory")
    workflow_flags(s)

    s = add("predict", cmd_predict, "apply a trained model to pipeline rows")
    s.add_argument("--model", required=True, help="model.json written by train")
    s.add_argument("--pipeline", required=True)
    s.add_argument("--out", required=True, help="predictions CSV path")

    s = add("fit", cmd_fit, "FIT and MTBF from beam-test counts")
    s.add_argument("--failed", type=int, required=True)
    s.add_argument("--total", type=int, required=True)
    s.add_argument("--fluence", type=float, required=True, help="final fluence, n/cm^2")
    s.add_argument("--flux", type=float, required=True, help="n/(cm^2 s)")

    s = add("plot", cmd_plot, "render a report or trace CSV as SVG")
    s.add_argument("--input", required=True)
    s.add_argument("--kind", required=True, choices=PLOT_KINDS)
    s.add_argument("--out", required=True, help="SVG path")
    s.add_argument("--device", help="curve_overlay: plot only this device")
    return p


def run_command(argv: Sequence[str]) -> int:
    try:
        args = build_parser().parse_args(list(argv))
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ContractError as exc:
        print(f"model/contract error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main(argv: Optional[Sequence[str]] = None) -> int:
    return run_command(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
