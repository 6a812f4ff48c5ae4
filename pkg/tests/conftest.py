import sys

import numpy as np
import pytest

from fedprint.features import FEATURE_NAMES, LabeledDataset, build_dataset
from fedprint.session import Condition, Label, TraceSession
from fedprint.synth import DEFAULT_NOISE, CorpusSpec, corpus_session, default_profiles


def make_session(ts, lengths, dirs, label=None, **kw):
    return TraceSession(np.asarray(ts, float), np.asarray(lengths), np.asarray(dirs), label=label, **kw)


def make_dataset(X, labels, names=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    labels = [Label(v) if not isinstance(v, (int, np.integer)) else Label.from_sign(v) for v in labels]
    names = names or tuple(f"f{j}" for j in range(X.shape[1]))
    return LabeledDataset(X, labels, tuple(names))


def corpus_sessions(base_seed=0, role=None):
    """In-memory default corpus (no files), as (role, session) pairs."""
    spec = CorpusSpec(base_seed=base_seed)
    cnn, rnn = default_profiles()
    prof = {Label.CNN: cnn, Label.RNN: rnn}
    out = []
    for r, lab, cond, i in spec.plan():
        if role is not None and r != role:
            continue
        seed = spec.session_seed(r, i)
        sid = f"{r}/{lab.value}_{cond.value}_{i}.pcap"
        out.append((r, corpus_session(spec, prof[lab], cond, seed, DEFAULT_NOISE, sid)))
    return out


@pytest.fixture(scope="session")
def default_corpus():
    """(train, test) feature datasets of the default corpus with base seed 0."""
    pairs = corpus_sessions(0)
    train = build_dataset([s for r, s in pairs if r == "train"])
    test = build_dataset([s for r, s in pairs if r == "test"])
    return train, test


__all__ = ["make_session", "make_dataset", "corpus_sessions", "FEATURE_NAMES", "Condition"]


def pytest_terminal_summary(terminalreporter):
    results = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)
