"""``fedprint`` command line: synth, extract, analyze, train, evaluate,
predict and reproduce.

Every subcommand accepts ``--seed``, ``--config <json>`` and ``--out <dir>``.
Settings come from built-in defaults, then the config file, then flags
(flags win). All outputs land under ``--out``:

    <out>/corpus/manifest.csv, <out>/corpus/{train,test}/*.pcap
    <out>/features/{train,test}.csv
    <out>/analysis/ranking.csv, histograms.csv[, packet_kl.csv]
    <out>/models/<clf>.json, <clf>_cv.csv, <clf>_chosen.json
    <out>/reports/<clf>.json, <clf>_table.txt

Exit codes: 0 ok, 1 config error, 2 data error, 3 reproduce thresholds unmet.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from . import classifiers as clf_mod
from .errors import ArityMismatch, ConfigError, DataError, FingerprintError, IoFailure
from .evaluation import evaluate, render_table, report_json
from .features import (
    DEFAULT_BINS,
    DEFAULT_K,
    FEATURE_NAMES,
    build_dataset,
    extract_features,
    packet_level_kl,
    rank_features,
    ranking_csv,
    read_dataset_csv,
    select_features,
    write_dataset_csv,
)
from .pcap import parse_pcap
from .session import LABELS, CaptureConfig, Endpoint, Label, segment_session
from .synth import (
    DEFAULT_NOISE,
    MANIFEST_NAME,
    CorpusSpec,
    NoiseProfile,
    WorkloadProfile,
    default_profiles,
    generate_corpus,
    read_manifest,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_THRESHOLD = 0, 1, 2, 3
DISPLAY_NAMES = {"forest": "Random Forest", "svm": "SVM", "gbm": "GBM"}
# minimum test accuracy per classifier for reproduce; SVM/GBM allow one miss on 23
THRESHOLDS = {"forest": 1.0, "svm": 22 / 23, "gbm": 22 / 23}


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "out"
    corpus: Optional[str] = None  # defaults to <out>/corpus
    model: Optional[str] = None  # defaults to <out>/models/<clf>.json
    bins: int = DEFAULT_BINS
    k: int = DEFAULT_K
    clf: str = "forest"
    grid: Optional[List[dict]] = None
    folds: Optional[int] = None
    window: Optional[float] = None
    per_packet: bool = False
    separation: float = 1.0
    jitter: float = 0.4
    train_cnn: int = 8
    train_rnn: int = 8
    test_cnn: int = 12
    test_rnn: int = 11
    noisy_fraction: float = 0.5
    server: str = "10.0.0.1:8080"
    policy: str = "enforce"
    # optional overrides, same key sets as WorkloadProfile/NoiseProfile.to_dict()
    cnn_profile: Optional[dict] = None
    rnn_profile: Optional[dict] = None
    noise: Optional[dict] = None

    def validate(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an integer in [0, 2**64)")
        if self.clf not in clf_mod.KINDS:
            raise ConfigError(f"unknown classifier {self.clf!r}; expected one of {clf_mod.KINDS}")
        if int(self.bins) < 1:
            raise ConfigError("bins must be >= 1")
        if self.window is not None and not float(self.window) > 0:
            raise ConfigError("window must be positive")
        if not 0.0 <= float(self.separation) <= 1.0:
            raise ConfigError("separation must lie in [0, 1]")
        if not 0.0 <= float(self.noisy_fraction) <= 1.0:
            raise ConfigError("noisy_fraction must lie in [0, 1]")
        if min(self.train_cnn, self.train_rnn, self.test_cnn, self.test_rnn) < 0:
            raise ConfigError("session counts must be >= 0")
        if self.policy not in ("enforce", "report"):
            raise ConfigError("policy must be 'enforce' or 'report'")
        if self.grid is not None and (
            not isinstance(self.grid, list) or not all(isinstance(g, dict) for g in self.grid)
        ):
            raise ConfigError("grid must be a list of parameter objects")
        Endpoint.parse(self.server)
        return self

    # derived paths
    @property
    def corpus_dir(self) -> Path:
        return Path(self.corpus) if self.corpus else Path(self.out) / "corpus"

    @property
    def features_dir(self) -> Path:
        return Path(self.out) / "features"

    @property
    def model_path(self) -> Path:
        return Path(self.model) if self.model else Path(self.out) / "models" / f"{self.clf}.json"


_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoFailure(path, exc.strerror or exc) from exc
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    unknown = sorted(set(doc) - _FIELDS)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    return doc


def resolve_config(args: argparse.Namespace) -> RunConfig:
    merged = load_config(args.config)
    for name in _FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    try:
        return RunConfig(**merged).validate()
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from None


# --- small io helpers ------------------------------------------------------


def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise IoFailure(path, exc.strerror or exc) from exc
    return path


def _read_text(path: Path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise IoFailure(path, exc.strerror or exc) from exc


def _read_bytes(path: Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(path, exc.strerror or exc) from exc


def _log(msg: str):
    print(msg, file=sys.stderr)


# --- commands ---------------------------------------------------------------


def cmd_synth(cfg: RunConfig) -> Path:
    counts = CorpusSpec.paper_counts(
        cfg.train_cnn, cfg.train_rnn, cfg.test_cnn, cfg.test_rnn, cfg.noisy_fraction
    )
    spec = CorpusSpec(counts, base_seed=int(cfg.seed), server=Endpoint.parse(cfg.server), jitter=cfg.jitter)
    cnn, rnn = default_profiles(cfg.separation)
    if cfg.cnn_profile is not None:
        cnn = WorkloadProfile.from_dict(cfg.cnn_profile)
    if cfg.rnn_profile is not None:
        rnn = WorkloadProfile.from_dict(cfg.rnn_profile)
    noise = DEFAULT_NOISE if cfg.noise is None else NoiseProfile.from_dict(cfg.noise)
    rows = generate_corpus(spec, cfg.corpus_dir, cnn, rnn, noise)
    n_train = sum(r.role == "train" for r in rows)
    n_test = sum(r.role == "test" for r in rows)
    print(f"train:{n_train} test:{n_test}")
    if n_test == 0:
        _log("warning: test set is empty")
    return cfg.corpus_dir / MANIFEST_NAME


def _load_sessions(cfg: RunConfig, role: str):
    """Parse the manifest's pcaps for ``role``. Returns (sessions, failures)."""
    manifest = cfg.corpus_dir / MANIFEST_NAME
    if not manifest.exists():
        raise IoFailure(manifest, "manifest not found; run synth first")
    capture = CaptureConfig(Endpoint.parse(cfg.server))
    sessions, failures = [], []
    for row in read_manifest(manifest):
        if row.role != role:
            continue
        try:
            raw = _read_bytes(cfg.corpus_dir / row.path)
            sessions.append(
                parse_pcap(raw, capture, label=row.label, condition=row.condition, session_id=row.path)
            )
        except DataError as exc:
            failures.append((row.path, exc))
    return sessions, failures


def cmd_extract(cfg: RunConfig) -> List[Path]:
    written, failures = [], []
    for role in ("train", "test"):
        sessions, bad = _load_sessions(cfg, role)
        failures += bad
        if cfg.window is not None:
            sessions = [w for s in sessions for w in segment_session(s, float(cfg.window))]
        if not sessions:
            _log(f"warning: no {role} sessions; {role}.csv not written")
            continue
        ds = build_dataset(sessions)
        written.append(_write(cfg.features_dir / f"{role}.csv", write_dataset_csv(ds)))
        print(f"{role}: {len(ds)} rows x {len(ds.names)} features")
    for path, exc in failures:
        _log(f"error: {path}: {exc}")
    if failures:
        raise DataError(f"{len(failures)} capture file(s) failed")
    return written


def _read_features(cfg: RunConfig, role: str):
    return read_dataset_csv(_read_text(cfg.features_dir / f"{role}.csv"))


def _histogram_rows(ranking, bins: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("feature", "class", "bin", "left", "right", "mass"))
    for r in ranking:
        for lab, h in ((Label.CNN, r.hist_a), (Label.RNN, r.hist_b)):
            for b in range(bins):
                w.writerow((r.name, lab.value, b, repr(float(h.edges[b])), repr(float(h.edges[b + 1])), repr(float(h.mass[b]))))
    return buf.getvalue()


def cmd_analyze(cfg: RunConfig) -> Path:
    train = _read_features(cfg, "train")
    ranking = rank_features(train, int(cfg.bins))
    out = Path(cfg.out) / "analysis"
    path = _write(out / "ranking.csv", ranking_csv(ranking))
    _write(out / "histograms.csv", _histogram_rows(ranking, int(cfg.bins)))
    if cfg.per_packet:
        sessions, failures = _load_sessions(cfg, "train")
        if failures:
            raise failures[0][1]
        lines = ["quantity,kl_ab,kl_ba"]
        for q in ("frame", "ia", "dir"):
            _, _, ab, ba = packet_level_kl(sessions, q, int(cfg.bins))
            lines.append(f"{q},{ab!r},{ba!r}")
        _write(out / "packet_kl.csv", "\n".join(lines) + "\n")
    for i, r in enumerate(ranking, start=1):
        print(f"{i:2d} {r.name:<12} fisher={r.fisher:.4g} kl_ab={r.kl_ab:.4g} kl_ba={r.kl_ba:.4g}")
    return path


def _cv_table(cv) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "params", "mean_accuracy"] + [f"fold_{f}" for f in range(cv.k_folds)] + ["chosen"])
    for i, (g, m, folds) in enumerate(zip(cv.grid, cv.mean_accuracy, cv.fold_accuracy)):
        w.writerow([i, json.dumps(g, sort_keys=True), repr(m)] + [repr(a) for a in folds] + [int(i == cv.chosen)])
    return buf.getvalue()


def train_one(cfg: RunConfig, kind: str, train) -> tuple:
    selected = select_features(train, int(cfg.k), int(cfg.bins))
    cv = clf_mod.grid_search_cv(selected, kind, cfg.grid, cfg.folds, int(cfg.seed))
    model = clf_mod.train_model(kind, selected, cv.best_params, int(cfg.seed))
    return model, cv


def cmd_train(cfg: RunConfig) -> Path:
    train = _read_features(cfg, "train")
    model, cv = train_one(cfg, cfg.clf, train)
    path = cfg.model_path
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(clf_mod.save_model(model))
    except OSError as exc:
        raise IoFailure(path, exc.strerror or exc) from exc
    stem = path.with_suffix("")
    _write(Path(f"{stem}_cv.csv"), _cv_table(cv))
    chosen = {"classifier": cfg.clf, "seed": int(cfg.seed), "k_folds": cv.k_folds,
              "features": list(model.names), "params": cv.best_params,
              "mean_accuracy": cv.mean_accuracy[cv.chosen]}
    _write(Path(f"{stem}_chosen.json"), json.dumps(chosen, indent=2, sort_keys=True) + "\n")
    print(f"{cfg.clf}: chose {json.dumps(cv.best_params, sort_keys=True)} cv_accuracy={cv.mean_accuracy[cv.chosen]:.4f}")
    return path


def _load_model(path: Path):
    return clf_mod.load_model(_read_bytes(path))


def cmd_evaluate(cfg: RunConfig) -> Path:
    model = _load_model(cfg.model_path)
    report = evaluate(model, _read_features(cfg, "test"))
    out = Path(cfg.out) / "reports"
    name = model.kind
    path = _write(out / f"{name}.json", report_json(report, classifier=name, seed=int(cfg.seed), features=list(model.names)))
    table = render_table([(DISPLAY_NAMES[name], report)])
    _write(out / f"{name}_table.txt", table)
    print(table, end="")
    return path


def cmd_predict(cfg: RunConfig, pcap_path: str) -> str:
    model = _load_model(cfg.model_path)
    session = parse_pcap(_read_bytes(Path(pcap_path)), CaptureConfig(Endpoint.parse(cfg.server)))
    values = dict(zip(FEATURE_NAMES, extract_features(session)))
    missing = [n for n in model.names if n not in values]
    if missing:
        raise ArityMismatch(f"model expects unknown features {missing}")
    pred = clf_mod.predict(model, [values[n] for n in model.names])
    line = f"{pred.label.value} {pred.score:.6f}"
    print(line)
    return line


def summary_table(rows: List[tuple]) -> str:
    """One line per classifier: accuracy then P/R/F1 for each class."""
    head = ["Classifier", "Accuracy"] + [f"{lab.value} {m}" for lab in LABELS for m in ("P", "R", "F1")]
    body = []
    for name, rep in rows:
        cells = [name, f"{100 * rep.accuracy:.2f}%"]
        for lab in LABELS:
            m = rep.per_class[lab]
            cells += [f"{m.precision:.2f}", f"{m.recall:.2f}", f"{m.f1:.2f}"]
        body.append(cells)
    widths = [max(len(head[j]), *(len(r[j]) for r in body)) for j in range(len(head))]
    fmt = lambda r: "  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip()  # noqa: E731
    return "\n".join([fmt(head)] + [fmt(r) for r in body]) + "\n"


def check_thresholds(reports: dict) -> List[str]:
    """Names of classifiers whose accuracy falls below their threshold."""
    return [k for k, rep in reports.items() if rep.accuracy < THRESHOLDS[k] - 1e-12]


def cmd_reproduce(cfg: RunConfig) -> int:
    with _quiet():
        cmd_synth(cfg)
        cmd_extract(cfg)
        cmd_analyze(cfg)
    train = _read_features(cfg, "train")
    test = _read_features(cfg, "test")
    reports = {}
    for kind in clf_mod.KINDS:
        model, _ = train_one(cfg, kind, train)
        reports[kind] = evaluate(model, test)
    table = summary_table([(DISPLAY_NAMES[k], r) for k, r in reports.items()])
    failed = check_thresholds(reports)
    verdict = "thresholds: PASS" if not failed else "thresholds: FAIL (" + ", ".join(DISPLAY_NAMES[k] for k in failed) + ")"
    text = f"seed {int(cfg.seed)}\n{table}{verdict}\n"
    _write(Path(cfg.out) / "reports" / "summary.txt", text)
    print(text, end="")
    if failed and cfg.policy == "enforce":
        return EXIT_THRESHOLD
    return EXIT_OK


class _quiet:
    """Silence stdout of the intermediate steps so reproduce prints only the summary."""

    def __enter__(self):
        self._old, sys.stdout = sys.stdout, io.StringIO()

    def __exit__(self, *exc):
        sys.stdout = self._old
        return False


# --- argument parsing --------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, help="base seed for every random stream")
    common.add_argument("--config", help="JSON config; flags override its values")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--corpus", help="corpus directory (default: <out>/corpus)")
    common.add_argument("--server", help="server endpoint ip:port used to infer direction")

    p = _Parser(prog="fedprint", description="Fingerprint the model architecture trained by a federated-learning client from packet metadata.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def corpus_flags(sp):
        sp.add_argument("--train-cnn", dest="train_cnn", type=int)
        sp.add_argument("--train-rnn", dest="train_rnn", type=int)
        sp.add_argument("--test-cnn", dest="test_cnn", type=int)
        sp.add_argument("--test-rnn", dest="test_rnn", type=int)
        sp.add_argument("--noisy-fraction", dest="noisy_fraction", type=float)
        sp.add_argument("--jitter", type=float, help="per-session variation factor in [0, 1)")
        sp.add_argument("--separation", type=float, help="1 = default class profiles, 0 = identical classes")

    def model_flags(sp):
        sp.add_argument("--clf", choices=clf_mod.KINDS)
        sp.add_argument("--model", help="model file (default: <out>/models/<clf>.json)")

    sp = sub.add_parser("synth", parents=[common], help="generate a labeled pcap corpus")
    corpus_flags(sp)

    sp = sub.add_parser("extract", parents=[common], help="pcaps -> feature CSVs")
    sp.add_argument("--window", type=float, help="split sessions into windows of this many seconds")

    sp = sub.add_parser("analyze", parents=[common], help="rank features, dump histograms")
    sp.add_argument("--bins", type=int)
    sp.add_argument("--per-packet", dest="per_packet", action="store_const", const=True)

    sp = sub.add_parser("train", parents=[common], help="select features, grid-search, fit a model")
    model_flags(sp)
    sp.add_argument("--k", type=int, help="number of top-ranked features to keep")
    sp.add_argument("--bins", type=int)
    sp.add_argument("--folds", type=int)

    sp = sub.add_parser("evaluate", parents=[common], help="score a model on the test features")
    model_flags(sp)

    sp = sub.add_parser("predict", parents=[common], help="classify one pcap")
    model_flags(sp)
    sp.add_argument("pcap")

    sp = sub.add_parser("reproduce", parents=[common], help="run the whole experiment")
    corpus_flags(sp)
    sp.add_argument("--k", type=int)
    sp.add_argument("--bins", type=int)
    sp.add_argument("--folds", type=int)
    sp.add_argument("--policy", choices=("enforce", "report"),
                    help="enforce: exit 3 when accuracy thresholds are unmet; report: always exit 0")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        if args.command == "synth":
            cmd_synth(cfg)
        elif args.command == "extract":
            cmd_extract(cfg)
        elif args.command == "analyze":
            cmd_analyze(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "evaluate":
            cmd_evaluate(cfg)
        elif args.command == "predict":
            cmd_predict(cfg, args.pcap)
        elif args.command == "reproduce":
            return cmd_reproduce(cfg)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except (DataError, FingerprintError) as exc:
        _log(f"error: {exc}")
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
