"""End-to-end checks that the compiled extension behaves through python."""

import json
import math

import pytest

import disputekit as dk

CORPUS_LINES = [
    {
        "conv_id": "c1",
        "escalated": False,
        "utterances": [
            {"index": 0, "speaker": "a", "text": "please stop", "tactics": ["policing"]},
            {"index": 1, "speaker": "b", "text": "here is why", "tactics": ["counterargument"]},
        ],
    },
    {
        "conv_id": "c2",
        "escalated": True,
        "utterances": [
            {"index": 0, "speaker": "a", "text": "you are wrong", "tactics": ["credibility-attack"]},
            {"index": 1, "speaker": "b", "text": "let us fix the page", "tactics": ["coordinating-edits"]},
        ],
    },
]


@pytest.fixture()
def corpus_path(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text("\n".join(json.dumps(c) for c in CORPUS_LINES) + "\n")
    return str(path)


def test_version_matches_package():
    assert dk.version() == dk.__version__
    assert dk.version().count(".") == 2


def test_tactic_names_canonical():
    names = dk.tactic_names()
    assert len(names) == 18
    assert names[0] == "name-calling"
    assert "refuting-central-point" in names


def test_metrics():
    preds = [["counterargument"], ["refutation", "policing"]]
    golds = [["counterargument"], ["refutation"]]
    assert dk.emr(preds, golds) == 0.5
    assert dk.jaccard(preds, golds) == pytest.approx(0.75)
    assert dk.hamming_loss(preds, golds) == pytest.approx(1 / 36)
    assert dk.at_least_one_correct(preds, golds) == 1.0
    with pytest.raises(dk.DisputeError):
        dk.emr([["not-a-tactic"]], [["other"]])


def test_statistics():
    rho, p = dk.spearman([1.0, 2.0, 3.0, 4.0], [1.0, 3.0, 2.0, 4.0], 200, 7)
    assert rho == pytest.approx(0.8)
    assert 0.0 < p <= 1.0
    assert dk.pearson([0.0, 1.0, 2.0], [0.0, 2.0, 4.0]) == pytest.approx(1.0)
    assert dk.cohens_kappa([0, 0, 1, 1], [0, 1, 1, 1]) == pytest.approx(0.5)
    assert dk.pmi(4, 4, 4, 8) == pytest.approx(1.0)
    diff, p = dk.paired_permutation_test([1.0, 2.0], [1.0, 2.0], 100, 3)
    assert diff == 0.0
    assert p == 1.0
    assert dk.pr_auc([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0]) == pytest.approx(5 / 6)


def test_ordinality_sequence():
    seq = dk.ordinality_sequence(
        [["counterargument"], ["coordinating-edits"], ["name-calling"]]
    )
    assert seq == ["up", "coordination", "down"]


def test_corpus_helpers(corpus_path):
    assert dk.corpus_counts(corpus_path) == (2, 4)
    assert dk.validate_file(corpus_path) == []


def test_cli_round_trip(corpus_path, tmp_path):
    assert dk.run(["validate", corpus_path]) == 0

    stats_out = tmp_path / "stats.json"
    assert dk.run(["stats", corpus_path, "--out", str(stats_out)]) == 0
    stats = json.loads(stats_out.read_text())
    assert stats["n_conversations"] == 2
    assert stats["n_utterances"] == 4

    report = dk.render_report(stats_out.read_text())
    assert "| measure | value |" in report
    assert "| n_conversations | 2 |" in report

    assert dk.run(["no-such-subcommand"]) == 2


def test_error_type_is_catchable():
    with pytest.raises(dk.DisputeError):
        dk.render_report("not json")
    assert not math.isnan(dk.pearson([1.0, 2.0], [2.0, 1.0]))
