#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "dispute/analysis.hpp"
#include "dispute/cli.hpp"
#include "dispute/corpus.hpp"
#include "dispute/error.hpp"
#include "dispute/stats.hpp"
#include "dispute/tasks.hpp"
#include "dispute/taxonomy.hpp"
#include "dispute/version.hpp"

namespace py = pybind11;

namespace {

using namespace dispute;

LabelVector names_to_vector(const std::vector<std::string>& names) {
  LabelVector v;
  for (const std::string& name : names) {
    auto t = find_tactic(name);
    if (!t.has_value()) throw Error("unknown label '" + name + "'");
    v.set(*t);
  }
  return v;
}

std::vector<LabelVector> names_to_vectors(
    const std::vector<std::vector<std::string>>& labelsets) {
  std::vector<LabelVector> out;
  out.reserve(labelsets.size());
  for (const auto& names : labelsets) out.push_back(names_to_vector(names));
  return out;
}

LabelSchema schema_or_canonical(const std::string& path) {
  if (path.empty()) return LabelSchema::canonical();
  return LabelSchema::load(path);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dispute tactics toolkit core";
  py::register_exception<Error>(m, "DisputeError");

  m.def("version", [] { return std::string(kVersion); });
  m.def("tactic_names", [] {
    std::vector<std::string> names;
    for (const TacticInfo& info : tactic_table()) names.emplace_back(info.name);
    return names;
  });

  m.def(
      "run", [](const std::vector<std::string>& args) { return run(args); },
      py::arg("args"), "Full CLI dispatch; returns the exit code");
  m.def("render_report", &render_report, py::arg("report_json"));

  m.def(
      "validate_file",
      [](const std::string& path, const std::string& schema) {
        const Corpus corpus = parse_corpus(path, schema_or_canonical(schema));
        std::vector<std::string> lines;
        for (const Violation& v : validate_corpus(corpus)) {
          std::string line = v.conv_id;
          if (v.utterance_index >= 0) line += "[" + std::to_string(v.utterance_index) + "]";
          lines.push_back(line + ": " + v.rule + ": " + v.message);
        }
        return lines;
      },
      py::arg("path"), py::arg("schema") = std::string(),
      "Violation lines; empty when the corpus is valid");

  m.def(
      "corpus_counts",
      [](const std::string& path, const std::string& schema) {
        const CorpusStats s = corpus_stats(parse_corpus(path, schema_or_canonical(schema)));
        return py::make_tuple(s.n_conversations, s.n_utterances);
      },
      py::arg("path"), py::arg("schema") = std::string());

  m.def(
      "emr",
      [](const std::vector<std::vector<std::string>>& preds,
         const std::vector<std::vector<std::string>>& golds) {
        return emr(names_to_vectors(preds), names_to_vectors(golds));
      },
      py::arg("preds"), py::arg("golds"));
  m.def(
      "hamming_loss",
      [](const std::vector<std::vector<std::string>>& preds,
         const std::vector<std::vector<std::string>>& golds) {
        return hamming_loss(names_to_vectors(preds), names_to_vectors(golds));
      },
      py::arg("preds"), py::arg("golds"));
  m.def(
      "jaccard",
      [](const std::vector<std::vector<std::string>>& preds,
         const std::vector<std::vector<std::string>>& golds) {
        return jaccard(names_to_vectors(preds), names_to_vectors(golds));
      },
      py::arg("preds"), py::arg("golds"));
  m.def(
      "at_least_one_correct",
      [](const std::vector<std::vector<std::string>>& preds,
         const std::vector<std::vector<std::string>>& golds) {
        return at_least_one_correct(names_to_vectors(preds), names_to_vectors(golds));
      },
      py::arg("preds"), py::arg("golds"));

  m.def(
      "pr_auc",
      [](const std::vector<double>& scores, const std::vector<int>& labels) {
        return pr_auc(scores, labels);
      },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "pearson",
      [](const std::vector<double>& x, const std::vector<double>& y) {
        return pearson(x, y);
      },
      py::arg("x"), py::arg("y"));
  m.def(
      "spearman",
      [](const std::vector<double>& x, const std::vector<double>& y, long resamples,
         std::uint64_t seed, int threads) {
        const TestResult r = spearman(x, y, resamples, seed, threads);
        return py::make_tuple(r.statistic, r.p_value);
      },
      py::arg("x"), py::arg("y"), py::arg("resamples") = 10000, py::arg("seed") = 0,
      py::arg("threads") = 1, "Returns (rho, p_value)");
  m.def(
      "cohens_kappa",
      [](const std::vector<int>& a, const std::vector<int>& b) {
        return cohens_kappa(a, b);
      },
      py::arg("a"), py::arg("b"));
  m.def("pmi", &pmi, py::arg("count_xy"), py::arg("count_x"), py::arg("count_y"),
        py::arg("n"));
  m.def(
      "paired_permutation_test",
      [](const std::vector<double>& a, const std::vector<double>& b, long resamples,
         std::uint64_t seed, int threads) {
        const TestResult r = paired_permutation_test(a, b, resamples, seed, threads);
        return py::make_tuple(r.statistic, r.p_value);
      },
      py::arg("a"), py::arg("b"), py::arg("resamples") = 10000, py::arg("seed") = 0,
      py::arg("threads") = 1, "Returns (mean_diff, p_value)");

  m.def(
      "ordinality_sequence",
      [](const std::vector<std::vector<std::string>>& labelsets) {
        const std::vector<LabelVector> vectors = names_to_vectors(labelsets);
        std::vector<std::string> out;
        for (Ordinality o : ordinality_sequence(vectors)) {
          out.emplace_back(ordinality_name(o));
        }
        return out;
      },
      py::arg("labelsets"));
}
