#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "signet/dataset.hpp"
#include "signet/model.hpp"
#include "signet/tensor.hpp"

namespace signet {

// Rows are true classes, columns are predicted classes.
struct ConfusionMatrix {
  std::int64_t num_classes = 0;
  std::vector<std::int64_t> cells;  // K*K row-major

  std::int64_t& at(std::int64_t truth, std::int64_t predicted) {
    return cells[static_cast<std::size_t>(truth * num_classes + predicted)];
  }
  std::int64_t at(std::int64_t truth, std::int64_t predicted) const {
    return cells[static_cast<std::size_t>(truth * num_classes + predicted)];
  }
  std::int64_t total() const;
};

ConfusionMatrix confusion(const std::vector<std::int64_t>& truth,
                          const std::vector<std::int64_t>& predicted,
                          std::int64_t num_classes);

struct ClassMetrics {
  std::int64_t class_id = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
  // True when any of the ratios was 0/0 and defined as 0.
  bool zero_division = false;
};

// P = diag/colsum, R = diag/rowsum, F1 = 2PR/(P+R); 0/0 cases are defined
// as 0 and flagged rather than propagated as NaN.
std::vector<ClassMetrics> precision_recall_f1(const ConfusionMatrix& cm);

// Rank-statistic AUC with midranks for ties: the probability that a random
// positive scores above a random negative, ties counting one half.
// Errors when either side is empty (the AUC is undefined).
double auc_from_scores(const std::vector<double>& scores,
                       const std::vector<bool>& positive);

struct RocResult {
  std::int64_t class_id = 0;
  // (false-positive rate, true-positive rate), threshold descending; starts
  // at (0,0) and ends at (1,1).
  std::vector<std::pair<double, double>> points;
  double auc = 0.0;
};

// One-vs-rest ROC for class k over softmax probability rows (N,K); each row
// must sum to 1 within 1e-5.
RocResult roc_auc(const Tensor& scores,
                  const std::vector<std::int64_t>& labels, std::int64_t k);

// -------------------------------------------------------------- reporting --

struct PredictionRow {
  std::int64_t label = 0;
  std::int64_t predicted = 0;
  std::vector<double> scores;  // softmax probabilities, length K
};

// Deterministic eval pipeline over every record, in manifest order.
std::vector<PredictionRow> predict_all(const SignNet& model,
                                       const std::vector<ClipRecord>& records,
                                       std::int64_t batch_size);

struct ReportClassRow {
  std::int64_t class_id = 0;
  std::string gloss;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
  std::optional<double> auc;  // absent when undefined for the class
  bool zero_division = false;
};

struct MetricsReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<ReportClassRow> classes;
  ConfusionMatrix matrix;
};

MetricsReport report_from_predictions(
    const std::vector<PredictionRow>& predictions, std::int64_t num_classes,
    const std::vector<std::string>& glosses);

MetricsReport evaluate(const SignNet& model,
                       const std::vector<ClipRecord>& records,
                       std::int64_t batch_size);

// metrics.json schema: {"accuracy", "macro_f1", "classes": [{"class",
// "gloss", "precision", "recall", "f1", "support", "auc"}], "confusion"}.
std::string metrics_report_to_json(const MetricsReport& report);

// Human-readable table; 0/0 rows are marked with '*'.
void print_metrics_report(const MetricsReport& report, std::ostream& out);

}  // namespace signet
