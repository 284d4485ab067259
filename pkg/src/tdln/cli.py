"""Command-line interface: ``tdln {gen,train,detect,eval,ablate}``.

Every tunable lives in :class:`RunConfig`. Values come from the dataclass
defaults, then an optional ``--config`` file (``key = value`` per line, ``#``
comments), then command-line flags. The resolved configuration is echoed to
stderr in the same ``key = value`` form, so it can be saved and replayed.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import csvio, datagen, metrics, modelfile
from .pipeline import MODES, ForestConfig, PipelineConfig, TdlnModel, detect_labeled, detect_online, fit_offline
from .preprocess import RawSeries, WindowSpec
from .training import NetConfig, TrainConfig, TrainingDiverged


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    w: int = 30
    s: int = 20
    epochs: int = 50
    batch_size: int = 1024
    lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    dropout: float = 0.4
    blstm_hidden: int = 128
    lstm_hidden: int = 128
    fcnn_sizes: tuple = (500, 180)
    forget_bias: float = 1.0
    n_estimators: int = 112
    max_depth: int | None = 31
    subset_size: int | None = None
    bootstrap: bool = False
    mode: str = "full"
    refine_rounds: int = 1
    val_fraction: float = 0.2
    best_checkpoint: bool = False
    drop_classes: tuple = ()
    threads: int = 0  # 0: all available cores
    # synthetic data generation
    classes: int = 5
    channels: int = 12
    train_runs: int = 40
    test_runs: int = 10
    train_length: int = 240
    test_length: int = 240
    out: str | None = None

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        for name in ("w", "s", "epochs", "batch_size", "blstm_hidden", "lstm_hidden", "n_estimators",
                     "refine_rounds", "classes", "channels", "train_runs", "test_runs", "train_length",
                     "test_length"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.classes < 2:
            raise ConfigError("classes must be >= 2 (normal plus at least one fault)")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if not 0 < self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in (0, 1)")
        if not self.fcnn_sizes or min(self.fcnn_sizes) < 1:
            raise ConfigError("fcnn_sizes needs at least one positive layer size")
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1 or none")
        if self.subset_size is not None and self.subset_size < 1:
            raise ConfigError("subset_size must be >= 1 or none")
        if self.threads < 0:
            raise ConfigError("threads must be >= 0")
        if 0 in self.drop_classes:
            raise ConfigError("the normal class 0 cannot be dropped")
        return self

    @property
    def thread_count(self) -> int:
        return self.threads or (os.cpu_count() or 1)

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(
            window=WindowSpec(self.w, self.s),
            train=TrainConfig(self.epochs, self.batch_size, self.lr, self.adam_beta1, self.adam_beta2,
                              self.adam_epsilon, self.seed, self.best_checkpoint),
            net=NetConfig(self.blstm_hidden, self.lstm_hidden, tuple(self.fcnn_sizes), self.dropout,
                          self.forget_bias),
            forest=ForestConfig(self.n_estimators, self.max_depth, self.subset_size, self.bootstrap),
            mode=self.mode, refine_rounds=self.refine_rounds, val_fraction=self.val_fraction, seed=self.seed,
            threads=self.thread_count,
        )


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _int_list(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(v) for v in text.replace(" ", "").split(","))


def _optional_int(text: str):
    return None if text.strip().lower() in ("none", "") else int(text)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_PARSERS = {
    "fcnn_sizes": _int_list, "drop_classes": _int_list, "max_depth": _optional_int,
    "subset_size": _optional_int, "bootstrap": _bool, "best_checkpoint": _bool,
    "mode": str, "out": str, "lr": float, "dropout": float, "adam_beta1": float, "adam_beta2": float,
    "adam_epsilon": float, "forget_bias": float, "val_fraction": float,
}


def parse_value(key: str, text: str):
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return _PARSERS.get(key, int)(text.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None


def read_config_file(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        try:
            out[key] = parse_value(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return out


def format_config(cfg: RunConfig) -> str:
    lines = []
    for name in _FIELDS:
        v = getattr(cfg, name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        elif v is None:
            v = "none"
        lines.append(f"{name} = {v}")
    return "\n".join(lines) + "\n"


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for name in _FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    return RunConfig(**values).validate()


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value configuration file (flags override it)")
    for name in _FIELDS:
        flag = "--" + name.replace("_", "-")
        if name == "bootstrap":
            p.add_argument(flag, action="store_const", const=True, default=None,
                           help="bootstrap-resample each tree's training rows")
            continue
        kind = "mode" if name == "mode" else name
        p.add_argument(flag, dest=name, default=None, metavar=name.upper(),
                       type=lambda text, key=kind: parse_value(key, text),
                       choices=MODES if name == "mode" else None)


def _echo(cfg: RunConfig):
    sys.stderr.write("# resolved configuration\n" + format_config(cfg))


def drop_and_redensify(series: RawSeries, drop: tuple) -> tuple[RawSeries, dict]:
    """Remove rows whose label is in ``drop`` and renumber the remaining labels
    densely in increasing order. Returns the series and the old -> new map."""
    keep_labels = [c for c in range(series.class_count) if c not in set(drop)]
    mapping = {old: new for new, old in enumerate(keep_labels)}
    if not drop:
        return series, mapping
    rows = ~np.isin(series.labels, list(drop))
    lut = np.full(series.class_count, -1, dtype=np.int64)
    for old, new in mapping.items():
        lut[old] = new
    return RawSeries(series.values[rows], lut[series.labels[rows]], len(keep_labels)), mapping


def _load_labeled(path, cfg: RunConfig) -> RawSeries:
    series, labeled = csvio.read_series(path)
    if not labeled:
        raise csvio.CsvFormatError(f"{path}: line 1: training data needs a label column")
    if cfg.drop_classes:
        series, mapping = drop_and_redensify(series, cfg.drop_classes)
        print("class mapping (original -> new): " + ", ".join(f"{a}->{b}" for a, b in mapping.items()))
    return series


def cmd_gen(args, cfg: RunConfig) -> int:
    out = Path(cfg.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    spec = datagen.ProcessSpec.random(cfg.channels, cfg.seed)
    train, test = datagen.generate_benchmark(spec, cfg.classes, cfg.train_runs, cfg.test_runs,
                                             cfg.train_length, cfg.test_length)
    csvio.write_series(train, out / "train.csv")
    csvio.write_series(test, out / "test.csv")
    print("class  family            magnitude  channels")
    print("    0  normal                    -  -")
    for c, f in datagen.fault_catalogue(spec, cfg.classes).items():
        print(f"{c:5d}  {f.family:<16}  {f.magnitude:9.3f}  {','.join(map(str, f.channels))}")
    print(f"wrote {out / 'train.csv'} ({len(train)} rows) and {out / 'test.csv'} ({len(test)} rows)")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    series = _load_labeled(args.train, cfg)
    model = fit_offline(series, cfg.pipeline())
    out = cfg.out or "model.tdln"
    modelfile.save_model(model, out)
    curve = model.metadata["curve"]
    if curve["train_accuracy"]:
        print("epoch  train_acc  train_loss  val_acc  val_loss  seconds")
        for e in range(len(curve["train_accuracy"])):
            print(f"{e + 1:5d}  {curve['train_accuracy'][e]:9.4f}  {curve['train_loss'][e]:10.5f}  "
                  f"{curve['val_accuracy'][e]:7.4f}  {curve['val_loss'][e]:8.5f}  {model.training_seconds[e]:7.2f}")
    print(f"training windows: {model.metadata['windows_train']}  validation windows: "
          f"{model.metadata['windows_validation']}  dropped short runs: {model.metadata['dropped_short_runs']}")
    for c, v in enumerate(model.metadata["validation_fdr"]):
        print(f"validation FDR class {c}: " + ("undefined" if v is None else f"{100 * v:.2f}%"))
    m = model.metadata["validation_macro_fdr"]
    print("validation macro FDR: " + ("undefined" if m is None else f"{100 * m:.2f}%"))
    print(f"wrote model ({model.mode}) to {out}")
    return 0


def _detections(model: TdlnModel, path, ignore_labels: bool, cfg: RunConfig):
    series, labeled = csvio.read_series(path, ignore_labels=ignore_labels)
    if len(series) == 0:
        raise csvio.CsvFormatError(f"{path}: no data rows")
    if series.channels != model.channels:
        raise ValueError(f"channel mismatch: data has {series.channels} channels, model expects {model.channels}")
    if labeled:
        if cfg.drop_classes:
            series, _ = drop_and_redensify(series, cfg.drop_classes)
        if series.class_count > model.class_count:
            raise ValueError(f"data has label {series.class_count - 1}, model knows {model.class_count} classes")
        return detect_labeled(model, series)
    return detect_online(model, series.values)


def cmd_detect(args, cfg: RunConfig) -> int:
    model = modelfile.load_model(args.model)
    if args.as_mode:
        model = model.with_mode(args.as_mode)
    dets = _detections(model, args.data, args.ignore_labels, cfg)
    text = csvio.format_detections(dets, model.class_count)
    if cfg.out:
        Path(cfg.out).write_text(text, encoding="utf-8", newline="\n")
        print(f"wrote {len(dets)} detections to {cfg.out}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    return 0


def _truths_from_labels(starts: np.ndarray, path) -> np.ndarray:
    series, labeled = csvio.read_series(path)
    if not labeled:
        raise ValueError(f"{path} has no label column")
    if starts.size and (starts.min() < 0 or starts.max() >= len(series)):
        raise ValueError(f"alignment mismatch: window start {int(starts.max())} outside the "
                         f"{len(series)}-row label file")
    return series.labels[starts]


def cmd_eval(args, cfg: RunConfig) -> int:
    det = csvio.parse_detections(Path(args.detections).read_text(encoding="utf-8"))
    truth = det["truth"]
    if args.labels:
        from_labels = _truths_from_labels(det["start"], args.labels)
        if truth is not None and not np.array_equal(truth, from_labels):
            raise ValueError("alignment mismatch: truth column disagrees with the label file")
        truth = from_labels
    if truth is None:
        raise ValueError("alignment mismatch: detections carry no truth column and no --labels file was given")
    proba = det["proba"]
    if not np.all(np.isfinite(proba)):
        raise ValueError("detections contain non-finite probabilities")
    n = proba.shape[1]
    if truth.size and truth.max() >= n:
        raise ValueError(f"alignment mismatch: truth label {int(truth.max())} but only {n} probability columns")
    rep = metrics.report(det["predicted"], proba, truth, n)
    sys.stdout.write(metrics.text_table(rep))
    sys.stdout.write(metrics.machine_block(rep))
    if args.roc_csv:
        curve = rep.roc.get("micro")
        if curve is None:
            raise ValueError("micro ROC undefined for these detections")
        Path(args.roc_csv).write_text(metrics.roc_csv(curve), encoding="utf-8", newline="\n")
    return 0


def cmd_ablate(args, cfg: RunConfig) -> int:
    """Fit full and ml_only models on one training file and score them (plus the
    dl_only view of the full model) on a labeled test file."""
    from .pipeline import evaluate

    train = _load_labeled(args.train, cfg)
    test = _load_labeled(args.test, cfg)
    full = fit_offline(train, dataclasses.replace(cfg.pipeline(), mode="full"))
    ml = fit_offline(train, dataclasses.replace(cfg.pipeline(), mode="ml_only"))
    rows = [("full", evaluate(full, test)), ("dl_only", evaluate(full.with_mode("dl_only"), test)),
            ("ml_only", evaluate(ml, test))]
    base = rows[0][1].macro_fdr
    print("mode      macro_fdr%   delta   micro_auc")
    for name, rep in rows:
        print(f"{name:<8}  {100 * rep.macro_fdr:10.2f}  {100 * (rep.macro_fdr - base):6.2f}  {rep.micro_auc:10.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdln", description="Time-series fault detection with a deep "
                                     "recurrent feature extractor and an extra-trees classifier.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write synthetic train.csv / test.csv")
    _add_config_flags(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="fit a model on a labeled CSV")
    p.add_argument("train", help="labeled training CSV")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="classify the windows of a CSV with a saved model")
    p.add_argument("model")
    p.add_argument("data", help="CSV with or without a label column")
    p.add_argument("--ignore-labels", action="store_true",
                   help="treat a labeled file as one unlabeled stream")
    p.add_argument("--as-mode", choices=("dl_only",), default=None,
                   help="use the network head of a full model")
    _add_config_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="metrics report for a detection CSV")
    p.add_argument("detections")
    p.add_argument("--labels", help="labeled CSV supplying the truth of each window start row")
    p.add_argument("--roc-csv", help="write the micro-averaged ROC curve here")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="full vs dl_only vs ml_only on a train/test pair")
    p.add_argument("train")
    p.add_argument("test")
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (ConfigError, OSError, TypeError) as exc:
        print(f"tdln: config error: {exc}", file=sys.stderr)
        return 2
    _echo(cfg)
    try:
        return args.func(args, cfg)
    except TrainingDiverged as exc:
        print(f"tdln: training aborted: {exc}", file=sys.stderr)
        return 3
    except (csvio.CsvFormatError, modelfile.ModelFileError, ValueError, OSError) as exc:
        print(f"tdln: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
