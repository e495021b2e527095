#include "pointview/zeroshot.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "pointview/error.hpp"

namespace pointview {

std::vector<double> view_weight_preset(DatasetPreset preset) {
  switch (preset) {
    case DatasetPreset::modelnet10: return {2, 5, 7, 10, 5, 6};
    case DatasetPreset::modelnet40: return {3, 9, 5, 4, 5, 4};
    case DatasetPreset::scanobjectnn: return {3, 10, 7, 4, 1, 0};
  }
  return {};
}

void validate_view_weights(std::span<const double> alpha, std::size_t views) {
  if (alpha.size() != views) {
    throw DomainError("expected " + std::to_string(views) + " view weights, got " +
                      std::to_string(alpha.size()));
  }
  bool any_positive = false;
  for (double a : alpha) {
    if (!std::isfinite(a) || a < 0.0) throw DomainError("view weights must be >= 0");
    any_positive = any_positive || a > 0.0;
  }
  if (!any_positive) throw DomainError("at least one view weight must be positive");
}

ClassifierHead::ClassifierHead(const Eigen::MatrixXd& weights, const LogitOptions& options)
    : weights_(weights), options_(options) {
  if (!options_.normalize) return;
  for (Eigen::Index k = 0; k < weights_.rows(); ++k) {
    const double n = weights_.row(k).norm();
    if (n > 0.0) weights_.row(k) /= n;
  }
}

Eigen::VectorXd ClassifierHead::logits(const Eigen::Ref<const Eigen::VectorXd>& feature) const {
  if (feature.size() != weights_.cols()) {
    throw DomainError("feature has " + std::to_string(feature.size()) +
                      " entries, classifier expects " + std::to_string(weights_.cols()));
  }
  if (!options_.normalize) return options_.scale * (weights_ * feature);
  const double n = feature.norm();
  if (n == 0.0) return Eigen::VectorXd::Zero(weights_.rows());
  return options_.scale * (weights_ * (feature / n));
}

Eigen::VectorXd view_logits(const Eigen::Ref<const Eigen::VectorXd>& feature,
                            const Eigen::MatrixXd& classifier, const LogitOptions& options) {
  return ClassifierHead(classifier, options).logits(feature);
}

Eigen::VectorXd aggregate(const Eigen::MatrixXd& per_view, std::span<const double> alpha) {
  if (per_view.rows() == 0) throw DomainError("aggregate needs at least one view");
  if (static_cast<std::size_t>(per_view.rows()) != alpha.size()) {
    throw DomainError("aggregate: " + std::to_string(per_view.rows()) + " views but " +
                      std::to_string(alpha.size()) + " weights");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(per_view.cols());
  for (Eigen::Index i = 0; i < per_view.rows(); ++i) {
    out += alpha[static_cast<std::size_t>(i)] * per_view.row(i).transpose();
  }
  return out;
}

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  if (logits.size() == 0) return {};
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

std::size_t argmax(const Eigen::Ref<const Eigen::VectorXd>& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
  }
  return best;
}

// ---------------------------------------------------------------------------

void LogitsTable::validate() const {
  if (labels.size() != ids.size()) throw DomainError("logits table: ids/labels mismatch");
  if (static_cast<std::size_t>(logits.rows()) != ids.size() ||
      (static_cast<std::size_t>(logits.cols()) != class_names.size() && !ids.empty())) {
    throw DomainError("logits table: matrix shape does not match ids/classes");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= class_names.size()) {
      throw DomainError("logits table: label out of range for " + ids[i]);
    }
  }
}

std::string format_logits_csv(const LogitsTable& table) {
  table.validate();
  auto check_field = [](const std::string& s, const char* what) {
    if (s.find_first_of(",\n\r") != std::string::npos) {
      throw DomainError(std::string(what) + " contains a CSV separator: " + s);
    }
  };
  std::string out = "id,label";
  for (const auto& name : table.class_names) {
    check_field(name, "class name");
    out += ',';
    out += name;
  }
  out += '\n';
  char buf[32];
  for (std::size_t i = 0; i < table.size(); ++i) {
    check_field(table.ids[i], "sample id");
    out += table.ids[i];
    out += ',';
    out += std::to_string(table.labels[i]);
    for (Eigen::Index k = 0; k < table.logits.cols(); ++k) {
      std::snprintf(buf, sizeof buf, "%.9g", table.logits(static_cast<Eigen::Index>(i), k));
      out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

}  // namespace

LogitsTable parse_logits_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw ParseError("logits CSV: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "label") {
    throw ParseError("logits CSV: header must start with id,label and name a class");
  }
  LogitsTable table;
  table.class_names.assign(header.begin() + 2, header.end());
  const std::size_t k = table.class_names.size();
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != k + 2) {
      throw ParseError("logits CSV line " + std::to_string(line_no) + ": expected " +
                       std::to_string(k + 2) + " fields");
    }
    try {
      std::size_t used = 0;
      const long long label = std::stoll(fields[1], &used);
      if (used != fields[1].size() || label < 0) throw std::invalid_argument("label");
      std::vector<double> row(k);
      for (std::size_t j = 0; j < k; ++j) {
        row[j] = std::stod(fields[j + 2], &used);
        if (used != fields[j + 2].size()) throw std::invalid_argument("logit");
      }
      table.ids.push_back(fields[0]);
      table.labels.push_back(static_cast<std::size_t>(label));
      rows.push_back(std::move(row));
    } catch (const std::logic_error&) {
      throw ParseError("logits CSV line " + std::to_string(line_no) + ": bad number");
    }
  }
  table.logits.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      table.logits(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  try {
    table.validate();
  } catch (const DomainError& e) {
    throw ParseError(std::string("logits CSV: ") + e.what());
  }
  return table;
}

void write_logits_csv(const std::filesystem::path& path, const LogitsTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << format_logits_csv(table);
  if (!out) throw Error("write failed: " + path.string());
}

LogitsTable read_logits_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_logits_csv(buffer.view());
}

EvalResult summarize(LogitsTable table) {
  table.validate();
  EvalResult result;
  const std::size_t k = table.num_classes();
  std::vector<std::size_t> correct(k, 0);
  result.per_class_count.assign(k, 0);
  std::size_t total_correct = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const std::size_t label = table.labels[i];
    const bool hit = argmax(table.logits.row(static_cast<Eigen::Index>(i)).transpose()) == label;
    ++result.per_class_count[label];
    correct[label] += hit ? 1 : 0;
    total_correct += hit ? 1 : 0;
  }
  result.accuracy = table.size() == 0 ? 0.0
                                      : static_cast<double>(total_correct) /
                                            static_cast<double>(table.size());
  result.per_class_accuracy.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    result.per_class_accuracy[c] =
        result.per_class_count[c] == 0
            ? std::numeric_limits<double>::quiet_NaN()
            : static_cast<double>(correct[c]) / static_cast<double>(result.per_class_count[c]);
  }
  result.table = std::move(table);
  return result;
}

}  // namespace pointview
