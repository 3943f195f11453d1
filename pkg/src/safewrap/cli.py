"""Batch front-end: measure CSVs, adjudicator bundles, wrapper evaluation, importances.

Exit codes: 0 success, 1 internal fault, 2 bad input or usage.
"""

import argparse
import csv
import json
import logging
import os
import sys
import time
import warnings

import numpy as np

from .adjudicator import (DegenerateTrainingWarning, ForestAdjudicator,
                          LayoutError, OracleAdjudicator, importance_report, load_adjudicator,
                          read_bundle, save_adjudicator)
from .classifiers import CLASSIFIERS, ClassifierError, make_classifier
from .data import (DataError, SplitSpec, format_float, load_csv, make_blobs, split, split_indices,
                   write_csv)
from .persistence import PersistenceError
from .uncertainty import UncertaintyEnsemble, reference_measures
from .wrapper import SafetyWrapper, WrapperMetrics, omission_quality

log = logging.getLogger("safewrap")

FLAG_COLUMN = "misc_flag"
FLAG_NAMES = {False: "correct", True: "misc"}
SUBSTITUTION_NOTE = ("external checker classifiers (gradient boosting in UM5 and UM6_TR) are "
                     "replaced by the built-in random forest")
# Importances of a 30-tree forest adjudicator trained on ~13M pooled rows (33 public datasets).
REFERENCE_IMPORTANCE = {"UM7": .289, "UM5": .189, "UM6_NB": .138, "UM6_ST": .128, "UM6_TR": .128,
                        "UM3": .036, "UM1": .032, "UM2": .027, "UM9": .017, "UM4": .010, "UM8": .004}
REFERENCE_TIMING = {"UM7": "M", "UM5": "M", "UM6_NB": "M", "UM6_ST": "M", "UM6_TR": "H", "UM3": "N",
                    "UM1": "L", "UM2": "N", "UM9": "L", "UM4": "L", "UM8": "H"}
METRIC_ORDER = ("alpha", "epsilon", "alpha_w", "epsilon_w", "phi", "phi_c", "phi_m")

DEFAULTS = {
    "label_column": "label",
    "classifier": "lr",
    "seed": 0,
    "test_fraction": 0.5,
    "holdout_fraction": 0.3,
    "n": 1000,
    "features": 4,
    "classes": 2,
    "separation": 3.0,
}


class InputError(Exception):
    """Bad user input; maps to exit code 2."""


def _load_config(path):
    if path is None:
        return {}
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc


def resolve(args):
    """Fill unset flags from the config file (its top level, then its subcommand table), then defaults."""
    config = _load_config(args.config)
    section = config.get(args.command.replace("-", "_"), config.get(args.command, {}))
    merged = {k: v for k, v in config.items() if not isinstance(v, dict)}
    merged.update(section)
    for key, value in vars(args).items():
        if value is None:
            if key in merged:
                setattr(args, key, merged[key])
            elif key in DEFAULTS:
                setattr(args, key, DEFAULTS[key])
    return args


def _classifier(kind, seed):
    if kind not in CLASSIFIERS:
        raise InputError(f"unknown classifier {kind!r}; choose from {', '.join(sorted(CLASSIFIERS))}")
    clf = make_classifier(kind)
    if "random_state" in clf.get_params(deep=False):
        clf.set_params(random_state=seed)
    return clf


def _load_dataset(path, label_column):
    if path is None:
        raise InputError("--dataset is required")
    try:
        return load_csv(path, label_column)
    except (OSError, DataError) as exc:
        raise InputError(str(exc)) from exc


def _train_classifier(args, train):
    clf = _classifier(args.classifier, args.seed)
    return clf.fit(train.features, train.labels)


def _describe_measures(measures):
    return {name: repr(m) for name, m in measures}


# -- synth ----------------------------------------------------------------------

def cmd_synth(args):
    if args.out is None:
        raise InputError("--out is required")
    try:
        data = make_blobs(int(args.n), int(args.features), int(args.classes), float(args.separation),
                          int(args.seed))
    except DataError as exc:
        raise InputError(str(exc)) from exc
    write_csv(data, args.out, args.label_column)
    print(f"wrote {data.n_samples} rows x {data.n_features} features to {args.out}")


# -- measures -------------------------------------------------------------------

def write_measures_csv(path, layout, M, flags):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*layout, FLAG_COLUMN])
        for row, flag in zip(M, flags):
            writer.writerow([*(format_float(v) for v in row), FLAG_NAMES[bool(flag)]])


def read_measures_csv(path):
    """Return ``(layout, M, flags)`` from a measures CSV."""
    if not os.path.isfile(path):
        raise InputError(f"measures file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1] != FLAG_COLUMN:
            raise InputError(f"{path}: last column must be {FLAG_COLUMN!r}")
        rows, flags = [], []
        for i, row in enumerate(reader):
            if not row:
                continue
            if len(row) != len(header) or row[-1] not in ("correct", "misc"):
                raise InputError(f"{path}: malformed row {i}")
            try:
                values = [float(v) for v in row[:-1]]
            except ValueError:
                raise InputError(f"{path}: non-numeric measure in row {i}") from None
            if not np.all(np.isfinite(values)):
                raise InputError(f"{path}: non-finite measure in row {i}")
            rows.append(values)
            flags.append(row[-1] == "misc")
    layout = tuple(header[:-1])
    return layout, np.array(rows, dtype=np.float64).reshape(len(rows), len(layout)), np.array(flags, dtype=bool)


def cmd_measures(args):
    if args.out is None:
        raise InputError("--out is required")
    data = _load_dataset(args.dataset, args.label_column)
    train, test = split(data, SplitSpec(float(args.test_fraction), int(args.seed), stratified=True))
    clf = _train_classifier(args, train)
    measures = reference_measures(int(args.seed))
    ensemble = UncertaintyEnsemble(measures, random_state=int(args.seed))
    ensemble.fit(train.features, train.labels, clf, n_classes=data.class_count)
    timings = {}
    start = time.perf_counter()
    proba = clf.predict_proba(test.features)
    M, faults = ensemble.score_with_faults(test.features, proba, timings)
    total = time.perf_counter() - start
    flags = np.argmax(proba, axis=1) != test.labels
    write_measures_csv(args.out, ensemble.layout_, M, flags)
    meta = {
        "dataset": os.path.abspath(args.dataset),
        "label_column": args.label_column,
        "classifier": args.classifier,
        "seed": int(args.seed),
        "test_fraction": float(args.test_fraction),
        "n_train": train.n_samples,
        "n_test": test.n_samples,
        "class_count": data.class_count,
        "misclassification_rate": float(flags.mean()),
        "measures": _describe_measures(measures),
        "substitutions": SUBSTITUTION_NOTE,
        "fit_seconds": ensemble.fit_seconds_,
        "score_seconds_per_point": {k: v / test.n_samples for k, v in timings.items()},
        "score_seconds_total": total,
        "faults": faults,
    }
    with open(args.out + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    print(f"wrote {test.n_samples} measure rows to {args.out} "
          f"(misclassification rate {flags.mean():.4f}, {len(faults)} faults)")


# -- train-adjudicator ----------------------------------------------------------

def _detection_stats(estimate_omit, flags):
    tp = int((estimate_omit & flags).sum())
    fp = int((estimate_omit & ~flags).sum())
    fn = int((~estimate_omit & flags).sum())
    tn = int((~estimate_omit & ~flags).sum())
    n = tp + fp + fn + tn
    return {"accuracy": (tp + tn) / n if n else None,
            "misclassification_recall": tp / (tp + fn) if tp + fn else None,
            "omission_precision": tp / (tp + fp) if tp + fp else None,
            "tp": tp, "fp": fp, "fn": fn, "tn": tn}


def cmd_train_adjudicator(args):
    sources = args.dataset or []
    if not sources:
        raise InputError("at least one --dataset measures CSV is required")
    if args.out is None:
        raise InputError("--out is required")
    layout, blocks, flag_blocks, per_point = None, [], [], []
    for path in sources:
        lay, M, flags = read_measures_csv(path)
        if layout is None:
            layout = lay
        elif lay != layout:
            raise InputError(f"{path}: header {list(lay)} differs from {list(layout)}")
        blocks.append(M)
        flag_blocks.append(flags)
        meta_path = path + ".meta.json"
        if os.path.isfile(meta_path):
            with open(meta_path, encoding="utf-8") as fh:
                per_point.append(json.load(fh).get("score_seconds_per_point", {}))
    M, flags = np.vstack(blocks), np.concatenate(flag_blocks)
    if M.shape[0] == 0:
        raise InputError("measure CSVs contain no rows")
    seed = int(args.seed)
    metadata = {"sources": [os.path.abspath(p) for p in sources], "seed": seed,
                "n_examples": int(M.shape[0]), "flag_rate": float(flags.mean())}
    if per_point:
        metadata["score_seconds_per_point"] = {
            name: float(np.mean([p[name] for p in per_point if name in p]))
            for name in layout if any(name in p for p in per_point)}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateTrainingWarning)
        if flags.all() or not flags.any():
            adjudicator = ForestAdjudicator(random_state=seed).fit(M, flags, layout=layout)
        else:
            fit_rows, hold_rows = split_indices(flags.astype(int), SplitSpec(float(args.holdout_fraction), seed))
            probe = ForestAdjudicator(random_state=seed).fit(M[fit_rows], flags[fit_rows], layout=layout)
            metadata["heldout_detection"] = _detection_stats(probe.predict(M[hold_rows]), flags[hold_rows])
            metadata["heldout_fraction"] = float(args.holdout_fraction)
            adjudicator = ForestAdjudicator(random_state=seed).fit(M, flags, layout=layout)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if adjudicator.forest_ is None:
        metadata["constant"] = bool(adjudicator.constant_)
    save_adjudicator(adjudicator, args.out, metadata)
    print(f"wrote adjudicator bundle to {args.out} ({M.shape[0]} examples, flag rate {flags.mean():.4f})")


# -- evaluate -------------------------------------------------------------------

def _format_table(rows):
    width = max(len(r[0]) for r in rows)
    return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def cmd_evaluate(args):
    data = _load_dataset(args.dataset, args.label_column)
    train, test = split(data, SplitSpec(float(args.test_fraction), int(args.seed), stratified=True))
    clf = _train_classifier(args, train)
    measures = reference_measures(int(args.seed))
    layout = tuple(name for name, _ in measures)
    if args.oracle:
        adjudicator = OracleAdjudicator().fit(layout=layout)
    else:
        if args.bundle is None:
            raise InputError("--bundle is required unless --oracle is given")
        try:
            adjudicator = load_adjudicator(args.bundle, expected_layout=layout)
        except (OSError, json.JSONDecodeError, PersistenceError) as exc:
            raise InputError(f"cannot load bundle {args.bundle}: {exc}") from exc
    wrapper = SafetyWrapper(clf, measures, adjudicator, random_state=int(args.seed))
    wrapper.fit(train.features, train.labels)
    trace = wrapper.trace(test.features, test.labels)
    metrics = WrapperMetrics.from_outcomes(trace["predicted"] == test.labels, trace["omit"])
    quality = omission_quality(metrics)
    values = metrics.as_dict()
    rows = [(k, format_float(values[k])) for k in METRIC_ORDER]
    rows.append(("omission_quality", "n/a" if quality is None else format_float(quality)))
    rows += [(k, str(values[k])) for k in ("n", "n_omitted", "n_correct_passed", "n_misc_passed")]
    print(_format_table([(k, f"{float(v):.6f}" if "." in v or "e" in v else v) for k, v in rows]))
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["metric", "value"])
            writer.writerows(rows)
    if args.trace:
        with open(args.trace, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([*layout, "predicted", "label", "omission_estimate", "verdict"])
            for i in range(test.n_samples):
                writer.writerow([*(format_float(v) for v in trace["measures"][i]),
                                 int(trace["predicted"][i]), int(test.labels[i]),
                                 format_float(trace["estimate"][i]),
                                 "omit" if trace["omit"][i] else "pass"])


# -- importance -----------------------------------------------------------------

def cmd_importance(args):
    if args.bundle is None:
        raise InputError("--bundle is required")
    try:
        doc = read_bundle(args.bundle)
        adjudicator = load_adjudicator(args.bundle)
    except (OSError, json.JSONDecodeError, PersistenceError, LayoutError) as exc:
        raise InputError(f"cannot load bundle {args.bundle}: {exc}") from exc
    if not isinstance(adjudicator, ForestAdjudicator):
        raise InputError(f"{type(adjudicator).__name__} bundles carry no importances")
    report = importance_report(adjudicator, doc.get("metadata", {}).get("score_seconds_per_point"))
    ranked = report.ranked()
    header = ["measure", "importance", "time", "reference_importance", "reference_time"]
    rows = [[name, format_float(imp), tclass,
             f"{REFERENCE_IMPORTANCE[name]:.3f}" if name in REFERENCE_IMPORTANCE else "",
             REFERENCE_TIMING.get(name, "")] for name, imp, tclass in ranked]
    shown = [header] + [[r[0], f"{float(r[1]):.6f}", *r[2:]] for r in rows]
    widths = [max(len(str(r[j])) for r in shown) for j in range(len(header))]
    for r in shown:
        print("  ".join(str(v).ljust(w) for v, w in zip(r, widths)).rstrip())
    print(f"total importance {sum(imp for _, imp, _ in ranked):.12f}")
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)


# -- entry point ----------------------------------------------------------------

COMMANDS = {"synth": cmd_synth, "measures": cmd_measures, "train-adjudicator": cmd_train_adjudicator,
            "evaluate": cmd_evaluate, "importance": cmd_importance}


def build_parser():
    parser = argparse.ArgumentParser(prog="safewrap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML file with default flag values (flags win)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        return p

    p = common(sub.add_parser("synth", help="write a Gaussian blob dataset as CSV"))
    p.add_argument("--n", type=int)
    p.add_argument("--features", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--separation", type=float)
    p.add_argument("--label-column")

    p = common(sub.add_parser("measures", help="dataset -> per-point uncertainty measures CSV"))
    p.add_argument("--dataset")
    p.add_argument("--label-column")
    p.add_argument("--classifier")
    p.add_argument("--test-fraction", type=float)

    p = common(sub.add_parser("train-adjudicator", help="measures CSVs -> adjudicator bundle"))
    p.add_argument("--dataset", action="append", help="measures CSV; repeat to pool several")
    p.add_argument("--holdout-fraction", type=float)

    p = common(sub.add_parser("evaluate", help="wrap a classifier and report outcome metrics"))
    p.add_argument("--dataset")
    p.add_argument("--label-column")
    p.add_argument("--classifier")
    p.add_argument("--bundle")
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--trace", help="optional per-point trace CSV")
    p.add_argument("--oracle", action="store_true", default=None,
                   help="use the flag-revealing test adjudicator instead of a bundle")

    p = common(sub.add_parser("importance", help="rank measures by adjudicator importance"))
    p.add_argument("--bundle")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        resolve(args)
        COMMANDS[args.command](args)
    except (InputError, DataError, LayoutError, FileNotFoundError, ClassifierError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI reports every fault as exit 1
        log.exception("internal fault")
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
