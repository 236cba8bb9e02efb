"""Command-line front end and data ingestion.

Subcommands: gen-synthetic, train, recourse, evaluate, sweep. Datasets
are CSV files described by a feature-spec file (one `name,kind,
actionability` line per column); categorical columns are one-hot
expanded and continuous columns z-scored with training-split
statistics. Every option can also come from a flat `key = value` config
file, with precedence flag > config file > built-in default. Exit
codes: 0 success, 1 usage error, 2 data/model error.
"""

import argparse
import csv
import math
import sys
from dataclasses import dataclass

import numpy as np

from ._io import atomic_write_text
from .blackbox import (
    TrainConfig,
    generate_synthetic,
    load_model,
    save_model,
    train_mlp,
)
from .errors import (
    BadLabelValue,
    CvasError,
    EmptyInput,
    EmptySplit,
    SchemaMismatch,
)
from .evalharness import EvalConfig, sweep
from .recourse import default_action_grids, generate_recourse
from .sampler import SamplerConfig
from .surrogate import Divergence

FEATURE_KINDS = ("continuous", "categorical", "binary", "label")
ACTIONABILITIES = ("free", "immutable", "non_decreasing")
DIVERGENCE_NAMES = ("nominal", "quadratic", "bures", "fisher-rao", "logdet")
RECOURSE_HEADER = ("instance_id,mode,divergence,rho_neg,cost,"
                   "surrogate_valid,blackbox_valid")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # raise instead of sys.exit so run() can map usage errors to code 1
    def error(self, message):
        raise _UsageError(message)


@dataclass(frozen=True)
class FeatureColumn:
    name: str
    kind: str
    actionability: str = None


@dataclass(frozen=True)
class FeatureSpec:
    """Per-column schema: exactly one label column, unique names."""

    columns: tuple

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaMismatch("duplicate column names in feature spec")
        labels = [c for c in self.columns if c.kind == "label"]
        if len(labels) != 1:
            raise SchemaMismatch("feature spec must have exactly one label column")
        for c in self.columns:
            if c.kind not in FEATURE_KINDS:
                raise SchemaMismatch(f"unknown column kind {c.kind!r}")
            if c.kind != "label" and c.actionability not in ACTIONABILITIES:
                raise SchemaMismatch(
                    f"column {c.name!r} needs an actionability in "
                    f"{ACTIONABILITIES}")

    @property
    def label_column(self):
        return next(c for c in self.columns if c.kind == "label")

    @property
    def feature_columns(self):
        return tuple(c for c in self.columns if c.kind != "label")


def parse_feature_spec(path):
    """Read a feature-spec file: `name,kind,actionability`, # comments."""
    with open(path, encoding="utf-8") as handle:
        text = handle.read()
    columns = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) == 2 and fields[1] == "label":
            columns.append(FeatureColumn(fields[0], "label"))
        elif len(fields) == 3:
            act = fields[2] if fields[1] != "label" else None
            columns.append(FeatureColumn(fields[0], fields[1], act))
        else:
            raise SchemaMismatch(
                f"{path}:{lineno}: expected `name,kind,actionability`")
    return FeatureSpec(columns=tuple(columns))


@dataclass(frozen=True)
class ColumnInfo:
    """Maps an encoded column back to its source feature."""

    name: str
    source: str
    actionability: str


@dataclass(frozen=True)
class Encoder:
    """Fitted encoding state: categorical levels and z-score statistics.

    Levels and statistics come from the training split of the dataset
    the encoder was fitted on; apply() reuses them verbatim, so shifted
    CSVs land in the same feature space (unseen categorical levels
    encode to all-zero blocks, constant continuous columns stay
    centered but unscaled).
    """

    spec: FeatureSpec
    levels: dict
    means: dict
    stds: dict

    def apply(self, columns_raw, n_rows):
        blocks, infos = [], []
        for col in self.spec.feature_columns:
            raw = columns_raw[col.name]
            if col.kind == "categorical":
                for level in self.levels[col.name]:
                    blocks.append(np.array([1.0 if v == level else 0.0
                                            for v in raw]))
                    infos.append(ColumnInfo(f"{col.name}={level}", col.name,
                                            col.actionability))
                continue
            values = _parse_numeric(col.name, raw)
            if col.kind == "binary":
                if not np.all((values == 0.0) | (values == 1.0)):
                    raise SchemaMismatch(
                        f"binary column {col.name!r} has values outside {{0,1}}")
                blocks.append(values)
            else:
                centered = values - self.means[col.name]
                std = self.stds[col.name]
                blocks.append(centered / std if std > 0.0 else centered)
            infos.append(ColumnInfo(col.name, col.name, col.actionability))
        if blocks:
            features = np.column_stack(blocks)
        else:
            features = np.zeros((n_rows, 0))
        return features, tuple(infos)


@dataclass(frozen=True)
class EncodedDataset:
    features: np.ndarray
    labels: np.ndarray
    columns: tuple
    train_idx: np.ndarray
    test_idx: np.ndarray
    encoder: Encoder

    @property
    def action_kinds(self):
        return tuple(info.actionability for info in self.columns)


def _read_csv(path, spec):
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise SchemaMismatch(f"{path}: empty CSV")
        header = [h.strip() for h in header]
        rows = [[cell.strip() for cell in row] for row in reader]
    if len(set(header)) != len(header):
        raise SchemaMismatch(f"{path}: duplicate column in header")
    expected = {c.name for c in spec.columns}
    missing = expected - set(header)
    if missing:
        raise SchemaMismatch(f"{path}: missing column {sorted(missing)[0]!r}")
    unknown = set(header) - expected
    if unknown:
        raise SchemaMismatch(f"{path}: unknown column {sorted(unknown)[0]!r}")
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise SchemaMismatch(f"{path}: row {i + 1} has {len(row)} cells, "
                                 f"expected {len(header)}")
    columns_raw = {name: [row[j] for row in rows]
                   for j, name in enumerate(header)}
    return columns_raw, len(rows)


def _parse_numeric(name, raw):
    try:
        values = np.array([float(v) for v in raw])
    except ValueError as exc:
        raise SchemaMismatch(f"column {name!r}: {exc}")
    if not np.all(np.isfinite(values)):
        raise SchemaMismatch(f"column {name!r} has non-finite values")
    return values


def _parse_labels(raw):
    labels = np.empty(len(raw))
    for i, cell in enumerate(raw):
        try:
            value = float(cell)
        except ValueError:
            raise BadLabelValue(f"label {cell!r} is not numeric")
        if value not in (-1.0, 0.0, 1.0):
            raise BadLabelValue(f"label {cell!r} not in {{-1,+1}} or {{0,1}}")
        labels[i] = 1.0 if value == 1.0 else -1.0
    return labels


def load_dataset(csv_path, spec_path, split_fraction=0.8, seed=0):
    """Load a CSV + feature spec into an encoded train/test dataset.

    The split is a seeded permutation; categorical levels and z-score
    statistics are fitted on the training split only and applied to all
    rows.
    """
    spec = parse_feature_spec(spec_path)
    columns_raw, n = _read_csv(csv_path, spec)
    labels = _parse_labels(columns_raw[spec.label_column.name])
    n_train = int(split_fraction * n)
    if n_train < 1 or n_train >= n:
        raise EmptySplit(f"split {split_fraction} of {n} rows leaves an "
                         "empty train or test side")
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])

    levels, means, stds = {}, {}, {}
    for col in spec.feature_columns:
        raw = columns_raw[col.name]
        if col.kind == "categorical":
            levels[col.name] = tuple(sorted({raw[i] for i in train_idx}))
        elif col.kind == "continuous":
            values = _parse_numeric(col.name, raw)[train_idx]
            means[col.name] = float(values.mean())
            stds[col.name] = float(values.std())
    encoder = Encoder(spec=spec, levels=levels, means=means, stds=stds)
    features, infos = encoder.apply(columns_raw, n)
    return EncodedDataset(features=features, labels=labels, columns=infos,
                          train_idx=train_idx, test_idx=test_idx,
                          encoder=encoder)


def encode_csv(encoder, csv_path):
    """Apply a fitted encoder to another CSV with the same schema."""
    columns_raw, n = _read_csv(csv_path, encoder.spec)
    labels = _parse_labels(columns_raw[encoder.spec.label_column.name])
    features, _ = encoder.apply(columns_raw, n)
    return features, labels


def _parse_instances(text):
    ids = tuple(int(p) for p in str(text).split(","))
    if not ids or any(i < 0 for i in ids):
        raise ValueError("instance ids must be nonnegative integers")
    return ids


def _parse_range(text):
    """`start:stop:step` inclusive of both ends when step divides the span."""
    parts = str(text).split(":")
    if len(parts) == 1:
        return (float(parts[0]),)
    if len(parts) != 3:
        raise ValueError("expected start:stop:step")
    start, stop, step = (float(p) for p in parts)
    if step <= 0.0 or stop < start:
        raise ValueError("need step > 0 and stop >= start")
    span = (stop - start) / step
    nearest = round(span)
    if abs(span - nearest) <= 1e-9 * max(1.0, abs(span)):
        values = [start + i * step for i in range(int(nearest) + 1)]
        values[-1] = stop
    else:
        values = [start + i * step for i in range(int(math.floor(span)) + 1)]
    return tuple(values)


@dataclass(frozen=True)
class _Opt:
    name: str
    convert: object
    default: object = None
    required: bool = False
    choices: tuple = None
    help: str = ""


_COMMON = (
    _Opt("seed", int, 0, help="master random seed"),
)
_EVAL_SHARED = (
    _Opt("data", str, required=True, help="present-distribution CSV"),
    _Opt("shifted", str, required=True, help="shifted-distribution CSV"),
    _Opt("spec", str, required=True, help="feature-spec file"),
    _Opt("out", str, required=True, help="report path (.csv or .json)"),
    _Opt("divergence", str, "nominal", choices=DIVERGENCE_NAMES,
         help="covariance divergence"),
    _Opt("rho_pos", float, 0.0, help="positive-class radius"),
    _Opt("mode", str, "projection", choices=("projection", "actionable"),
         help="recourse mode"),
    _Opt("split", float, 0.8, help="train fraction"),
    _Opt("epochs", int, 1000, help="training epochs"),
    _Opt("lr", float, 1e-3, help="learning rate"),
    _Opt("n_models", int, 100, help="future-model ensemble size"),
    _Opt("max_instances", int, 25, help="cap on evaluated test instances"),
    _Opt("k", int, 10, help="opposite-class prototypes to scan"),
    _Opt("n_p", int, 1000, help="boundary ball sample count"),
)
_OPTS = {
    "gen-synthetic": _COMMON + (
        _Opt("n", int, required=True, help="number of rows"),
        _Opt("noise", float, 0.0, help="label noise std"),
        _Opt("out", str, required=True, help="output CSV path"),
        _Opt("spec_out", str, None, help="also write a matching feature spec"),
    ),
    "train": _COMMON + (
        _Opt("data", str, required=True, help="training CSV"),
        _Opt("spec", str, required=True, help="feature-spec file"),
        _Opt("out", str, required=True, help="model output path"),
        _Opt("epochs", int, 1000, help="training epochs"),
        _Opt("lr", float, 1e-3, help="learning rate"),
        _Opt("split", float, 0.8, help="train fraction"),
    ),
    "recourse": _COMMON + (
        _Opt("data", str, required=True, help="dataset CSV"),
        _Opt("spec", str, required=True, help="feature-spec file"),
        _Opt("model", str, required=True, help="trained model file"),
        _Opt("instances", _parse_instances, required=True,
             help="comma-separated row ids"),
        _Opt("divergence", str, "nominal", choices=DIVERGENCE_NAMES,
             help="covariance divergence"),
        _Opt("rho_pos", float, 0.0, help="positive-class radius"),
        _Opt("rho_neg", float, 0.0, help="negative-class radius"),
        _Opt("mode", str, "projection",
             choices=("projection", "actionable"), help="recourse mode"),
        _Opt("out", str, required=True, help="output CSV path"),
        _Opt("split", float, 0.8, help="train fraction"),
        _Opt("k", int, 10, help="opposite-class prototypes to scan"),
        _Opt("n_p", int, 1000, help="boundary ball sample count"),
    ),
    "evaluate": _COMMON + _EVAL_SHARED + (
        _Opt("rho_neg", float, 0.0, help="negative-class radius"),
    ),
    "sweep": _COMMON + _EVAL_SHARED + (
        _Opt("rho_neg", _parse_range, (0.0,),
             help="radius grid start:stop:step"),
    ),
}


def _build_parser():
    parser = _Parser(prog="cvas", description=__doc__.splitlines()[0])
    subparsers = parser.add_subparsers(dest="command")
    for command, opts in _OPTS.items():
        sub = subparsers.add_parser(command)
        sub.add_argument("--config", default=None,
                         help="flat key = value config file")
        for opt in opts:
            sub.add_argument("--" + opt.name.replace("_", "-"),
                             dest=opt.name, default=None, help=opt.help)
    return parser


def _read_config_file(path):
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise _UsageError(f"cannot read config file: {exc}")
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise _UsageError(f"{path}:{lineno}: expected `key = value`")
        values[key.strip()] = value.strip()
    return values


def _resolve(args, opts, config_values):
    known = {o.name for o in opts}
    unknown = sorted(set(config_values) - known)
    if unknown:
        raise _UsageError(f"unknown config key {unknown[0]!r}")
    resolved = argparse.Namespace()
    for opt in opts:
        flag = "--" + opt.name.replace("_", "-")
        raw = getattr(args, opt.name)
        if raw is None:
            raw = config_values.get(opt.name)
        if raw is None:
            if opt.required:
                raise _UsageError(f"missing required option {flag}")
            setattr(resolved, opt.name, opt.default)
            continue
        try:
            value = opt.convert(raw)
        except (TypeError, ValueError) as exc:
            raise _UsageError(f"invalid value {raw!r} for {flag}: {exc}")
        if opt.choices is not None and value not in opt.choices:
            raise _UsageError(f"{flag} must be one of {', '.join(opt.choices)}")
        setattr(resolved, opt.name, value)
    return resolved


def _make_divergence(ns):
    try:
        return Divergence(kind=ns.divergence, rho_pos=ns.rho_pos,
                          rho_neg=ns.rho_neg)
    except ValueError as exc:
        raise _UsageError(str(exc))


def _format_bool(value):
    return "" if value is None else str(bool(value)).lower()


def _cmd_gen_synthetic(ns):
    features, labels = generate_synthetic(ns.n, noise_std=ns.noise,
                                          seed=ns.seed)
    lines = ["x1,x2,label"]
    for row, label in zip(features, labels):
        lines.append(f"{float(row[0])!r},{float(row[1])!r},{int(label)}")
    atomic_write_text(ns.out, "\n".join(lines) + "\n")
    if ns.spec_out is not None:
        atomic_write_text(ns.spec_out,
                          "x1,continuous,free\nx2,continuous,free\n"
                          "label,label\n")


def _cmd_train(ns):
    dataset = load_dataset(ns.data, ns.spec, split_fraction=ns.split,
                           seed=ns.seed)
    config = TrainConfig(epochs=ns.epochs, learning_rate=ns.lr, seed=ns.seed)
    model = train_mlp(dataset.features[dataset.train_idx],
                      dataset.labels[dataset.train_idx], config)
    save_model(model, ns.out)


def _cmd_recourse(ns):
    dataset = load_dataset(ns.data, ns.spec, split_fraction=ns.split,
                           seed=ns.seed)
    model = load_model(ns.model)
    divergence = _make_divergence(ns)
    train_features = dataset.features[dataset.train_idx]
    sampler_config = SamplerConfig(k=ns.k, n_p=ns.n_p, seed=ns.seed)
    lines = [RECOURSE_HEADER]
    for instance_id in ns.instances:
        if instance_id >= dataset.features.shape[0]:
            raise _UsageError(f"instance id {instance_id} out of range "
                              f"(dataset has {dataset.features.shape[0]} rows)")
        x0 = dataset.features[instance_id]
        actions = None
        if ns.mode == "actionable":
            actions = default_action_grids(x0, train_features,
                                           kinds=dataset.action_kinds)
        result = generate_recourse(model, x0, train_features, sampler_config,
                                   divergence, ns.mode, actions=actions)
        lines.append(",".join([
            str(instance_id), ns.mode, divergence.kind.value,
            repr(ns.rho_neg), repr(result.cost),
            _format_bool(result.surrogate_valid),
            _format_bool(result.blackbox_valid),
        ]))
    atomic_write_text(ns.out, "\n".join(lines) + "\n")


def _run_eval(ns, rho_grid):
    dataset = load_dataset(ns.data, ns.spec, split_fraction=ns.split,
                           seed=ns.seed)
    shifted = encode_csv(dataset.encoder, ns.shifted)
    train_config = TrainConfig(epochs=ns.epochs, learning_rate=ns.lr,
                               seed=ns.seed)
    train_features = dataset.features[dataset.train_idx]
    train_labels = dataset.labels[dataset.train_idx]
    # Reproduced bit-exactly inside sweep(), which trains with the same
    # config on the same split; only instance selection happens here.
    model = train_mlp(train_features, train_labels, train_config)
    test_features = dataset.features[dataset.test_idx]
    unfavorable = test_features[model.label(test_features) == -1]
    if unfavorable.shape[0] == 0:
        raise EmptyInput("no unfavorably classified test instances")
    instances = unfavorable[:ns.max_instances]
    config = EvalConfig(seed=ns.seed, rho_pos=ns.rho_pos,
                        sampler=SamplerConfig(k=ns.k, n_p=ns.n_p),
                        train=train_config, n_models=ns.n_models,
                        action_kinds=dataset.action_kinds)
    report = sweep((train_features, train_labels), shifted, instances,
                   ns.divergence, rho_grid, ns.mode, config)
    if str(ns.out).endswith(".json"):
        report.to_json(ns.out)
    else:
        report.to_csv(ns.out)


def _cmd_evaluate(ns):
    _run_eval(ns, [ns.rho_neg])


def _cmd_sweep(ns):
    _run_eval(ns, list(ns.rho_neg))


_HANDLERS = {
    "gen-synthetic": _cmd_gen_synthetic,
    "train": _cmd_train,
    "recourse": _cmd_recourse,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
}


def run(argv):
    """Parse argv, dispatch, and map errors to exit codes."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError("a subcommand is required "
                              f"(one of: {', '.join(_OPTS)})")
        config_values = ({} if args.config is None
                         else _read_config_file(args.config))
        resolved = _resolve(args, _OPTS[args.command], config_values)
        _HANDLERS[args.command](resolved)
    except (_UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CvasError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
