#include "signet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>

#include <json.hpp>

#include "signet/error.hpp"
#include "signet/nn_ops.hpp"

namespace signet {

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(cells.begin(), cells.end(), std::int64_t{0});
}

ConfusionMatrix confusion(const std::vector<std::int64_t>& truth,
                          const std::vector<std::int64_t>& predicted,
                          std::int64_t num_classes) {
  if (truth.size() != predicted.size()) {
    throw Error(ErrorKind::data, "label vectors differ in length");
  }
  if (num_classes < 1) {
    throw Error(ErrorKind::data, "confusion matrix needs at least one class");
  }
  ConfusionMatrix cm;
  cm.num_classes = num_classes;
  cm.cells.assign(static_cast<std::size_t>(num_classes * num_classes), 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 ||
        predicted[i] >= num_classes) {
      throw Error(ErrorKind::data,
                  "label out of range at sample " + std::to_string(i));
    }
    ++cm.at(truth[i], predicted[i]);
  }
  return cm;
}

std::vector<ClassMetrics> precision_recall_f1(const ConfusionMatrix& cm) {
  std::vector<ClassMetrics> out;
  for (std::int64_t k = 0; k < cm.num_classes; ++k) {
    std::int64_t col = 0, row = 0;
    for (std::int64_t j = 0; j < cm.num_classes; ++j) {
      col += cm.at(j, k);
      row += cm.at(k, j);
    }
    const std::int64_t tp = cm.at(k, k);
    ClassMetrics m;
    m.class_id = k;
    m.support = row;
    if (col == 0) {
      m.precision = 0.0;
      m.zero_division = true;
    } else {
      m.precision = static_cast<double>(tp) / static_cast<double>(col);
    }
    if (row == 0) {
      m.recall = 0.0;
      m.zero_division = true;
    } else {
      m.recall = static_cast<double>(tp) / static_cast<double>(row);
    }
    if (m.precision + m.recall == 0.0) {
      m.f1 = 0.0;
      m.zero_division = true;
    } else {
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    }
    out.push_back(m);
  }
  return out;
}

double auc_from_scores(const std::vector<double>& scores,
                       const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) {
    throw Error(ErrorKind::data, "score/label length mismatch");
  }
  std::int64_t n_pos = 0;
  for (bool p : positive) n_pos += p ? 1 : 0;
  const std::int64_t n_neg = static_cast<std::int64_t>(scores.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw Error(ErrorKind::data,
                "AUC undefined: class has no " +
                    std::string(n_pos == 0 ? "positive" : "negative") +
                    " samples");
  }

  // Midranks over ascending scores.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  std::vector<double> rank(scores.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() &&
           scores[order[j + 1]] == scores[order[i]]) {
      ++j;
    }
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
    i = j + 1;
  }

  double pos_rank_sum = 0.0;
  for (std::size_t s = 0; s < scores.size(); ++s) {
    if (positive[s]) pos_rank_sum += rank[s];
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

RocResult roc_auc(const Tensor& scores,
                  const std::vector<std::int64_t>& labels, std::int64_t k) {
  if (scores.ndim() != 2) {
    throw Error(ErrorKind::shape, "scores must be (N,K)");
  }
  const std::int64_t n = scores.dim(0), classes = scores.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != n) {
    throw Error(ErrorKind::data, "label count does not match score rows");
  }
  if (k < 0 || k >= classes) {
    throw Error(ErrorKind::data, "class " + std::to_string(k) +
                                     " outside score width " +
                                     std::to_string(classes));
  }
  for (std::int64_t r = 0; r < n; ++r) {
    double sum = 0.0;
    for (std::int64_t c = 0; c < classes; ++c) sum += scores[r * classes + c];
    if (std::abs(sum - 1.0) > 1e-5) {
      throw Error(ErrorKind::data,
                  "score row " + std::to_string(r) + " sums to " +
                      std::to_string(sum) + ", expected 1");
    }
  }

  std::vector<double> col(static_cast<std::size_t>(n));
  std::vector<bool> positive(static_cast<std::size_t>(n));
  std::int64_t n_pos = 0;
  for (std::int64_t r = 0; r < n; ++r) {
    col[static_cast<std::size_t>(r)] = scores[r * classes + k];
    positive[static_cast<std::size_t>(r)] = labels[static_cast<std::size_t>(r)] == k;
    n_pos += positive[static_cast<std::size_t>(r)] ? 1 : 0;
  }
  const std::int64_t n_neg = n - n_pos;

  RocResult res;
  res.class_id = k;
  res.auc = auc_from_scores(col, positive);  // also validates pos/neg counts

  // Sweep thresholds over distinct scores, descending; ties move together.
  std::vector<std::size_t> order(col.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return col[a] > col[b];
  });
  res.points.emplace_back(0.0, 0.0);
  std::int64_t tp = 0, fp = 0;
  std::size_t idx = 0;
  while (idx < order.size()) {
    const double threshold = col[order[idx]];
    while (idx < order.size() && col[order[idx]] == threshold) {
      if (positive[order[idx]]) {
        ++tp;
      } else {
        ++fp;
      }
      ++idx;
    }
    res.points.emplace_back(static_cast<double>(fp) / static_cast<double>(n_neg),
                            static_cast<double>(tp) / static_cast<double>(n_pos));
  }
  return res;
}

// --------------------------------------------------------------- reporting --

std::vector<PredictionRow> predict_all(const SignNet& model,
                                       const std::vector<ClipRecord>& records,
                                       std::int64_t batch_size) {
  if (records.empty()) {
    throw Error(ErrorKind::data, "nothing to evaluate: empty record set");
  }
  BatchIterator it(records, model.config, AugmentSpec{}, /*training=*/false,
                   batch_size, /*shuffle=*/false, Rng(0));
  std::vector<PredictionRow> rows;
  rows.reserve(records.size());
  Rng unused(0);
  while (auto batch = it.next()) {
    auto [logits, cache] =
        model_forward(model, batch->clips, Mode::eval, unused);
    Tensor probs = softmax_rows(logits);
    const std::int64_t b = batch->clips.dim(0), k = logits.dim(1);
    for (std::int64_t i = 0; i < b; ++i) {
      PredictionRow row;
      row.label = batch->labels[static_cast<std::size_t>(i)];
      std::int64_t arg = 0;
      for (std::int64_t j = 0; j < k; ++j) {
        row.scores.push_back(probs[i * k + j]);
        if (probs[i * k + j] > probs[i * k + arg]) arg = j;
      }
      row.predicted = arg;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

MetricsReport report_from_predictions(
    const std::vector<PredictionRow>& predictions, std::int64_t num_classes,
    const std::vector<std::string>& glosses) {
  std::vector<std::int64_t> truth, predicted;
  for (const auto& p : predictions) {
    truth.push_back(p.label);
    predicted.push_back(p.predicted);
  }

  MetricsReport report;
  report.matrix = confusion(truth, predicted, num_classes);
  auto per_class = precision_recall_f1(report.matrix);

  std::int64_t correct = 0;
  for (const auto& p : predictions) correct += p.label == p.predicted ? 1 : 0;
  report.accuracy =
      static_cast<double>(correct) / static_cast<double>(predictions.size());

  double f1_sum = 0.0;
  for (std::int64_t k = 0; k < num_classes; ++k) {
    ReportClassRow row;
    row.class_id = k;
    row.gloss = k < static_cast<std::int64_t>(glosses.size())
                    ? glosses[static_cast<std::size_t>(k)]
                    : "class_" + std::to_string(k);
    row.precision = per_class[static_cast<std::size_t>(k)].precision;
    row.recall = per_class[static_cast<std::size_t>(k)].recall;
    row.f1 = per_class[static_cast<std::size_t>(k)].f1;
    row.support = per_class[static_cast<std::size_t>(k)].support;
    row.zero_division = per_class[static_cast<std::size_t>(k)].zero_division;
    f1_sum += row.f1;

    std::vector<double> col;
    std::vector<bool> positive;
    for (const auto& p : predictions) {
      col.push_back(p.scores[static_cast<std::size_t>(k)]);
      positive.push_back(p.label == k);
    }
    try {
      row.auc = auc_from_scores(col, positive);
    } catch (const Error&) {
      row.auc = std::nullopt;  // no positives or no negatives for class k
    }
    report.classes.push_back(std::move(row));
  }
  report.macro_f1 = f1_sum / static_cast<double>(num_classes);
  return report;
}

MetricsReport evaluate(const SignNet& model,
                       const std::vector<ClipRecord>& records,
                       std::int64_t batch_size) {
  for (const auto& rec : records) {
    if (rec.label >= model.config.num_classes) {
      throw Error(ErrorKind::data,
                  "record " + rec.path + " has label " +
                      std::to_string(rec.label) + " but the model has " +
                      std::to_string(model.config.num_classes) + " classes");
    }
  }
  std::vector<std::string> glosses(
      static_cast<std::size_t>(model.config.num_classes));
  for (std::size_t k = 0; k < glosses.size(); ++k) {
    glosses[k] = "class_" + std::to_string(k);
  }
  for (const auto& rec : records) {
    if (!rec.gloss.empty()) {
      auto& slot = glosses[static_cast<std::size_t>(rec.label)];
      if (slot.rfind("class_", 0) == 0) slot = rec.gloss;
    }
  }
  return report_from_predictions(predict_all(model, records, batch_size),
                                 model.config.num_classes, glosses);
}

std::string metrics_report_to_json(const MetricsReport& report) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& row : report.classes) {
    nlohmann::json obj{{"class", row.class_id},   {"gloss", row.gloss},
                       {"precision", row.precision}, {"recall", row.recall},
                       {"f1", row.f1},             {"support", row.support}};
    if (row.auc.has_value()) {
      obj["auc"] = *row.auc;
    } else {
      obj["auc"] = nullptr;
    }
    classes.push_back(std::move(obj));
  }
  nlohmann::json cm = nlohmann::json::array();
  for (std::int64_t t = 0; t < report.matrix.num_classes; ++t) {
    nlohmann::json cm_row = nlohmann::json::array();
    for (std::int64_t p = 0; p < report.matrix.num_classes; ++p) {
      cm_row.push_back(report.matrix.at(t, p));
    }
    cm.push_back(std::move(cm_row));
  }
  nlohmann::json obj{{"accuracy", report.accuracy},
                     {"macro_f1", report.macro_f1},
                     {"classes", std::move(classes)},
                     {"confusion", std::move(cm)}};
  return obj.dump(2);
}

void print_metrics_report(const MetricsReport& report, std::ostream& out) {
  out << std::fixed << std::setprecision(4);
  out << "accuracy " << report.accuracy << "  macro_f1 " << report.macro_f1
      << "\n";
  out << "class  gloss            precision  recall    f1       support  auc\n";
  for (const auto& row : report.classes) {
    out << std::left << std::setw(7) << row.class_id << std::setw(17)
        << row.gloss << std::setw(11) << row.precision << std::setw(10)
        << row.recall << std::setw(9) << row.f1 << std::setw(9) << row.support;
    if (row.auc.has_value()) {
      out << *row.auc;
    } else {
      out << "undefined";
    }
    if (row.zero_division) {
      out << "  *";  // a 0/0 ratio was defined as 0 for this row
    }
    out << "\n";
  }
}

}  // namespace signet
