"""Dispute tactics toolkit: corpus checks, conversation analyses, and models."""

from disputekit._core import (
    DisputeError,
    at_least_one_correct,
    cohens_kappa,
    corpus_counts,
    emr,
    hamming_loss,
    jaccard,
    ordinality_sequence,
    paired_permutation_test,
    pearson,
    pmi,
    pr_auc,
    render_report,
    run,
    spearman,
    tactic_names,
    validate_file,
    version,
)

__version__ = version()

__all__ = [
    "DisputeError",
    "at_least_one_correct",
    "cohens_kappa",
    "corpus_counts",
    "emr",
    "hamming_loss",
    "jaccard",
    "ordinality_sequence",
    "paired_permutation_test",
    "pearson",
    "pmi",
    "pr_auc",
    "render_report",
    "run",
    "spearman",
    "tactic_names",
    "validate_file",
    "version",
]
