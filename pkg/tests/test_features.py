import math
import statistics
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, example, given, settings
from hypothesis import strategies as st

from conftest import corpus_sessions, make_dataset, make_session
from fedprint.errors import (
    ArityMismatch,
    BadRange,
    EdgeMismatch,
    EmptyDataset,
    EmptyValues,
    IndexOutOfRange,
    MinPacketsNotMet,
    SchemaMismatch,
    SingleClassDataset,
    UnlabeledSession,
)
from fedprint.features import (
    FEATURE_NAMES,
    SMOOTHING,
    Histogram,
    LabeledDataset,
    build_dataset,
    count_peaks,
    estimate_histogram,
    extract_features,
    feature_dict,
    fisher_score,
    interarrival_series,
    kl_divergence,
    packet_level_kl,
    pooled_range,
    rank_features,
    ranking_csv,
    read_dataset_csv,
    select_features,
    write_dataset_csv,
)

# --- pure-python reference implementations ---------------------------------


def peaks_oracle(xs):
    n = len(xs)
    if n < 3:
        return 0
    thr = statistics.fmean(xs) + statistics.pstdev(xs)
    return sum(1 for i in range(1, n - 1) if xs[i] > xs[i - 1] and xs[i] > xs[i + 1] and xs[i] > thr)


def fisher_oracle(a, b):
    num = (statistics.fmean(a) - statistics.fmean(b)) ** 2
    den = statistics.pvariance(a) + statistics.pvariance(b)
    if den == 0:
        return math.inf if num > 0 else 0.0
    return num / den


def hist_oracle(values, bins, lo, hi):
    counts = [0] * bins
    for v in values:
        k = int(math.floor((v - lo) / (hi - lo) * bins))
        counts[min(max(k, 0), bins - 1)] += 1
    n = len(values)
    return [(c + SMOOTHING) / (n + bins * SMOOTHING) for c in counts]


def kl_oracle(p, q):
    return sum(pi * math.log(pi / qi) for pi, qi in zip(p, q) if pi > 0)


# --- interarrival / peaks --------------------------------------------------------


def test_interarrival_examples():
    assert interarrival_series(make_session([0.0, 0.5, 1.5], [60] * 3, [1] * 3)).tolist() == [0.5, 1.0]
    assert interarrival_series(make_session([3.0, 3.0], [60] * 2, [1] * 2)).tolist() == [0.0]
    with pytest.raises(MinPacketsNotMet):
        interarrival_series(make_session([0.0], [60], [1]))


def test_count_peaks_examples():
    assert count_peaks([1, 3, 1, 5, 1]) == 1
    assert count_peaks([4, 4, 4, 4]) == 0
    assert count_peaks([1, 9]) == 0
    assert count_peaks([]) == 0


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(-20, 20), max_size=40))
def test_count_peaks_matches_scan(xs):
    assert count_peaks(xs) == peaks_oracle([float(x) for x in xs])


# --- extraction -----------------------------------------------------------------


def test_extract_two_packet_example():
    f = feature_dict(extract_features(make_session([0.0, 0.5], [100, 300], [1, 1])))
    assert f == {
        "mean_frame": 200.0, "std_frame": 100.0, "min_frame": 100.0, "max_frame": 300.0, "peaks_frame": 0.0,
        "mean_dir": 1.0, "uplink_prop": 1.0, "downlink_prop": 0.0,
        "mean_ia": 0.5, "std_ia": 0.0, "min_ia": 0.5, "max_ia": 0.5, "peaks_ia": 0.0,
    }


def test_extract_all_downlink_and_constant():
    f = feature_dict(extract_features(make_session([0, 1, 2, 3], [500] * 4, [-1] * 4)))
    assert f["mean_dir"] == -1 and f["uplink_prop"] == 0 and f["downlink_prop"] == 1
    assert f["std_frame"] == 0 and f["std_ia"] == 0
    assert f["peaks_frame"] == 0 and f["peaks_ia"] == 0


def test_schema_is_fixed():
    assert FEATURE_NAMES == (
        "mean_frame", "std_frame", "min_frame", "max_frame", "peaks_frame",
        "mean_dir", "uplink_prop", "downlink_prop",
        "mean_ia", "std_ia", "min_ia", "max_ia", "peaks_ia",
    )


def session_strategy(min_size=2, max_size=60):
    return st.integers(min_size, max_size).flatmap(
        lambda n: st.tuples(
            st.lists(st.integers(0, 2**20), min_size=n, max_size=n),
            st.lists(st.integers(54, 1514), min_size=n, max_size=n),
            st.lists(st.sampled_from([-1, 1]), min_size=n, max_size=n),
        )
    )


def build(data, scale=1.0 / 1024, shift=0.0):
    ticks, lengths, dirs = data
    t = np.sort(np.array(ticks, dtype=float)) * scale + shift
    return make_session(t, lengths, dirs)


@settings(max_examples=150, deadline=None)
@given(session_strategy())
def test_feature_vector_invariants(data):
    s = build(data)
    f = feature_dict(extract_features(s))
    assert f["min_frame"] <= f["mean_frame"] <= f["max_frame"]
    assert f["min_ia"] <= f["mean_ia"] <= f["max_ia"]
    assert f["std_frame"] >= 0 and f["std_ia"] >= 0
    assert abs(f["uplink_prop"] + f["downlink_prop"] - 1) <= 1e-12
    assert abs(f["mean_dir"] - (2 * f["uplink_prop"] - 1)) <= 1e-12
    assert f["peaks_frame"] == peaks_oracle(s.frame_lengths.astype(float).tolist())
    assert f["peaks_ia"] == peaks_oracle(np.diff(s.timestamps).tolist())


@settings(max_examples=100, deadline=None)
@given(session_strategy(), st.integers(0, 10**4))
def test_time_shift_invariance(data, shift):
    # dyadic timestamps and integer shifts keep every difference exact
    a = extract_features(build(data))
    b = extract_features(build(data, shift=float(shift)))
    assert a.tolist() == b.tolist()


@settings(max_examples=100, deadline=None)
@given(session_strategy(), st.sampled_from([0.25, 0.5, 2.0, 8.0]), st.floats(0.01, 100))
def test_gap_scaling(data, pow2, c):
    base = extract_features(build(data))
    idx = [FEATURE_NAMES.index(n) for n in ("mean_ia", "std_ia", "min_ia", "max_ia")]
    rest = [j for j in range(len(FEATURE_NAMES)) if j not in idx]
    exact = extract_features(build(data, scale=pow2 / 1024))
    assert exact[idx].tolist() == (base[idx] * pow2).tolist()
    assert exact[rest].tolist() == base[rest].tolist()
    approx = extract_features(build(data, scale=c / 1024))
    np.testing.assert_allclose(approx[idx], base[idx] * c, rtol=1e-9, atol=1e-300)
    assert approx[rest].tolist() == base[rest].tolist()


# --- datasets ---------------------------------------------------------------------


def test_build_dataset():
    sessions = [
        make_session([0, 1, 3], [60, 70, 80], [1, -1, 1], label=lab, session_id=f"s{i}")
        for i, lab in enumerate(["CNN", "RNN"] * 8)
    ]
    ds = build_dataset(sessions)
    assert ds.X.shape == (16, 13)
    assert ds.session_ids == tuple(f"s{i}" for i in range(16))
    with pytest.raises(EmptyDataset):
        build_dataset([])
    with pytest.raises(UnlabeledSession, match="nolabel"):
        build_dataset(sessions + [make_session([0, 1], [60, 60], [1, 1], session_id="nolabel")])
    with pytest.raises(MinPacketsNotMet, match="short"):
        build_dataset([make_session([0], [60], [1], label="CNN", session_id="short")])


def test_dataset_validation_and_projection():
    with pytest.raises(SchemaMismatch):
        LabeledDataset(np.zeros((2, 3)), ["CNN"], ("a", "b", "c"))
    with pytest.raises(SchemaMismatch):
        LabeledDataset(np.zeros((1, 2)), ["CNN"], ("a", "a"))
    ds = LabeledDataset(np.arange(6.0).reshape(2, 3), ["CNN", "RNN"], ("a", "b", "c"))
    assert ds.project(["c", "a"]).X.tolist() == [[2.0, 0.0], [5.0, 3.0]]
    with pytest.raises(ArityMismatch):
        ds.project(["zzz"])


def test_dataset_csv_round_trip():
    ds = LabeledDataset(
        np.random.default_rng(0).normal(size=(5, 3)), ["CNN", "RNN", "CNN", "RNN", "RNN"], ("a", "b", "c"),
        session_ids=[f"x{i}" for i in range(5)],
    )
    text = write_dataset_csv(ds)
    assert text.splitlines()[0] == "session_id,a,b,c,label"
    back = read_dataset_csv(text)
    assert back.X.tolist() == ds.X.tolist()
    assert back.labels == ds.labels and back.names == ds.names and back.session_ids == ds.session_ids
    plain = read_dataset_csv("a,b,label\n1,2,CNN\n3,4,RNN\n")
    assert plain.session_ids is None and plain.X.tolist() == [[1, 2], [3, 4]]
    with pytest.raises(SchemaMismatch):
        read_dataset_csv("a,b\n1,2\n")
    with pytest.raises(SchemaMismatch):
        read_dataset_csv("a,label\n1,DNN\n")


# --- histograms and KL -------------------------------------------------------------


def test_histogram_examples():
    np.testing.assert_allclose(estimate_histogram([0, 1, 2, 3], 2, (0, 4)).mass, [0.5, 0.5], atol=1e-9)
    np.testing.assert_allclose(estimate_histogram([1, 1, 1, 9], 2, (0, 10)).mass, [0.75, 0.25], atol=1e-9)
    h = estimate_histogram([4, 4, 4], 4, (0, 4))
    assert h.mass[-1] == pytest.approx(1.0, abs=1e-8) and h.mass[-1] < 1.0
    assert np.all(h.mass[:-1] > 0)
    with pytest.raises(BadRange):
        estimate_histogram([1], 2, (1, 1))
    with pytest.raises(EmptyValues):
        estimate_histogram([], 2, (0, 1))


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50),
    st.integers(1, 30),
    st.floats(-500, 500),
    st.floats(1e-3, 500),
)
def test_histogram_matches_oracle(values, bins, lo, width):
    h = estimate_histogram(values, bins, (lo, lo + width))
    assume(lo + width > lo)
    assert abs(h.mass.sum() - 1) <= 1e-9
    assert np.all(np.diff(h.edges) > 0) and np.all(h.mass >= 0)
    np.testing.assert_allclose(h.mass, hist_oracle(values, bins, lo, lo + width), rtol=1e-12, atol=0)


def test_kl_examples():
    edges = [0.0, 1.0, 2.0]
    p, q = Histogram(edges, [0.5, 0.5]), Histogram(edges, [0.25, 0.75])
    assert kl_divergence(p, q) == pytest.approx(0.5 * math.log(2) + 0.5 * math.log(2 / 3), abs=1e-12)
    assert kl_divergence(p, q) == pytest.approx(0.1438, abs=1e-3)
    assert kl_divergence(p, p) == 0.0
    with pytest.raises(EdgeMismatch):
        kl_divergence(p, Histogram([0.0, 1.0, 3.0], [0.5, 0.5]))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 25).flatmap(lambda b: st.tuples(
    st.lists(st.floats(0, 1e6), min_size=b, max_size=b),
    st.lists(st.floats(0, 1e6), min_size=b, max_size=b),
)))
def test_kl_nonnegative_and_matches_oracle(pair):
    a, b = pair
    a = np.array(a) + 1e-6
    b = np.array(b) + 1e-6
    edges = np.arange(len(a) + 1, dtype=float)
    p, q = Histogram(edges, a / a.sum()), Histogram(edges, b / b.sum())
    assert kl_divergence(p, q) >= 0
    assert kl_divergence(p, p) == 0
    assert kl_divergence(p, q) == pytest.approx(max(kl_oracle(p.mass, q.mass), 0.0), rel=1e-9, abs=1e-12)


def test_pooled_range():
    assert pooled_range([1, 2], [5]) == (1.0, 5.0)
    assert pooled_range([3, 3], [3]) == (2.5, 3.5)


# --- Fisher and ranking -----------------------------------------------------------


def test_fisher_examples():
    ds = make_dataset([1, 2, 3, 7, 8, 9], ["CNN"] * 3 + ["RNN"] * 3)
    assert fisher_score(ds, 0) == pytest.approx(27.0, abs=1e-9)
    assert fisher_score(make_dataset([4, 4, 4, 4], ["CNN", "CNN", "RNN", "RNN"]), 0) == 0.0
    assert fisher_score(make_dataset([0, 0, 1, 1], ["CNN", "CNN", "RNN", "RNN"]), 0) == math.inf
    with pytest.raises(SingleClassDataset):
        fisher_score(make_dataset([1, 2], ["CNN", "CNN"]), 0)
    with pytest.raises(IndexOutOfRange):
        fisher_score(ds, 1)


labeled_matrix = st.integers(2, 12).flatmap(
    lambda n: st.tuples(
        st.lists(st.lists(st.integers(-5, 5), min_size=4, max_size=4), min_size=n, max_size=n),
        st.lists(st.sampled_from(["CNN", "RNN"]), min_size=n, max_size=n),
    )
).filter(lambda t: len(set(t[1])) == 2)


@settings(max_examples=200, deadline=None)
@given(labeled_matrix)
def test_fisher_symmetric_and_matches_oracle(data):
    X, labels = data
    ds = make_dataset(X, labels)
    swapped = make_dataset(X, ["RNN" if v == "CNN" else "CNN" for v in labels])
    for j in range(4):
        a = [float(r[j]) for r, v in zip(X, labels) if v == "CNN"]
        b = [float(r[j]) for r, v in zip(X, labels) if v == "RNN"]
        want = fisher_oracle(a, b)
        got = fisher_score(ds, j)
        assert got == pytest.approx(want, rel=1e-9, abs=1e-12) or (math.isinf(got) and math.isinf(want))
        assert fisher_score(swapped, j) == got


@settings(max_examples=150, deadline=None)
@given(labeled_matrix, st.integers(1, 10))
# exact Fisher ties that float rounding splits apart
@example(([[0, 0, 0, 0], [0, 0, 0, 1], [0, 0, 0, 1], [0, 0, 1, 1]], ["CNN", "CNN", "RNN", "CNN"]), 1)
# infinite score next to zero scores
@example(([[0, 0, 0, 1], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]], ["CNN", "RNN", "RNN", "RNN"]), 1)
def test_ranking_matches_brute_force(data, bins):
    X, labels = data
    ds = make_dataset(X, labels)
    ranking = rank_features(ds, bins)
    expected = []
    for j in range(4):
        a = [float(r[j]) for r, v in zip(X, labels) if v == "CNN"]
        b = [float(r[j]) for r, v in zip(X, labels) if v == "RNN"]
        lo, hi = min(a + b), max(a + b)
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        ha, hb = hist_oracle(a, bins, lo, hi), hist_oracle(b, bins, lo, hi)
        expected.append((fisher_oracle(a, b), j, kl_oracle(ha, hb), kl_oracle(hb, ha)))
    # exact rationals for the sort key so float ties cannot reorder

    def exact_fisher(j):
        a = [Fraction(r[j]) for r, v in zip(X, labels) if v == "CNN"]
        b = [Fraction(r[j]) for r, v in zip(X, labels) if v == "RNN"]
        ma, mb = sum(a) / len(a), sum(b) / len(b)
        va = sum((x - ma) ** 2 for x in a) / len(a)
        vb = sum((x - mb) ** 2 for x in b) / len(b)
        if va + vb == 0:
            return (1, 0) if ma != mb else (0, 0)
        return (0, (ma - mb) ** 2 / (va + vb))

    order = sorted(range(4), key=lambda j: (tuple(-v for v in exact_fisher(j)), j))
    assert [r.index for r in ranking] == order
    for r in ranking:
        f, j, kab, kba = expected[r.index]
        assert r.name == f"f{j}"
        assert r.kl_ab == pytest.approx(kab, rel=1e-9, abs=1e-12)
        assert r.kl_ba == pytest.approx(kba, rel=1e-9, abs=1e-12)


def test_single_differing_feature_ranks_first_and_ties_by_index():
    X = [[1, 5, 2], [1, 5, 2], [1, 9, 2], [1, 9, 2]]
    ds = make_dataset(X, ["CNN", "CNN", "RNN", "RNN"])
    ranking = rank_features(ds)
    assert [r.index for r in ranking] == [1, 0, 2]
    assert select_features(ds, 1).names == ("f1",)
    assert select_features(ds, 1).X[:, 0].tolist() == [5, 5, 9, 9]


def test_select_all_is_permutation():
    rng = np.random.default_rng(3)
    ds = make_dataset(rng.normal(size=(10, 5)), ["CNN", "RNN"] * 5)
    full = select_features(ds, 5)
    assert sorted(full.names) == sorted(ds.names)
    assert full.X.tolist() == ds.project(full.names).X.tolist()
    with pytest.raises(IndexOutOfRange):
        select_features(ds, 0)
    with pytest.raises(IndexOutOfRange):
        select_features(ds, 6)
    with pytest.raises(SingleClassDataset):
        rank_features(make_dataset([1, 2], ["CNN", "CNN"]))


def test_ranking_csv_layout():
    ds = make_dataset([[1, 2], [2, 2], [5, 1], [6, 3]], ["CNN", "CNN", "RNN", "RNN"])
    lines = ranking_csv(rank_features(ds)).splitlines()
    assert lines[0] == "rank,name,fisher,kl_ab,kl_ba"
    assert lines[1].startswith("1,f0,")


# --- default corpus behaviour ------------------------------------------------------


def test_default_corpus_interarrival_beats_frame_size(default_corpus):
    train, _ = default_corpus
    ranking = rank_features(train)
    pos = {r.name: i for i, r in enumerate(ranking)}
    assert pos["mean_ia"] < pos["mean_frame"]
    assert pos["std_ia"] < pos["mean_frame"]
    by = {r.name: r for r in ranking}
    assert by["mean_ia"].kl_ab + by["mean_ia"].kl_ba > by["mean_frame"].kl_ab + by["mean_frame"].kl_ba


def test_packet_level_kl_runs_on_corpus():
    sessions = [s for _, s in corpus_sessions(0, "train")]
    for q in ("frame", "ia", "dir"):
        ha, hb, ab, ba = packet_level_kl(sessions, q, 20)
        assert ab >= 0 and ba >= 0 and len(ha.mass) == 20
    with pytest.raises(SingleClassDataset):
        packet_level_kl([s for s in sessions if s.label.value == "CNN"], "frame")
