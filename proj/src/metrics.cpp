#include "bandfuse/metrics.hpp"

#include <json.hpp>

#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace bandfuse {

ConfusionMatrix::ConfusionMatrix(int classes)
    : classes_(classes), counts_(static_cast<std::size_t>(classes * classes), 0) {
  if (classes < 1) throw std::invalid_argument("ConfusionMatrix: need at least one class");
}

std::uint64_t ConfusionMatrix::count(int truth, int predicted) const {
  return counts_[static_cast<std::size_t>(truth * classes_ + predicted)];
}

std::uint64_t ConfusionMatrix::counted() const {
  std::uint64_t n = 0;
  for (auto c : counts_) n += c;
  return n;
}

void ConfusionMatrix::add(int truth, int predicted, std::uint64_t n) {
  if (truth < 0 || truth >= classes_ || predicted < 0 || predicted >= classes_) {
    throw std::invalid_argument("ConfusionMatrix: label out of range (truth " + std::to_string(truth) +
                                ", predicted " + std::to_string(predicted) + ")");
  }
  counts_[static_cast<std::size_t>(truth * classes_ + predicted)] += n;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw std::invalid_argument("ConfusionMatrix: class count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  ignored_ += other.ignored_;
  return *this;
}

void update_confusion(ConfusionMatrix& cm, std::span<const Label> predicted, std::span<const Label> truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("update_confusion: size mismatch");
  ConfusionMatrix delta(cm.classes());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == kIgnoreLabel) {
      delta.add_ignored(1);
      continue;
    }
    delta.add(truth[i], predicted[i]);
  }
  cm += delta;
}

MetricsReport class_metrics(const ConfusionMatrix& cm) {
  MetricsReport report;
  const int k = cm.classes();
  auto ratio = [](double num, double den) { return den > 0 ? num / den : 0.0; };
  for (int c = 0; c < k; ++c) {
    double tp = static_cast<double>(cm.count(c, c)), fp = 0, fn = 0;
    for (int o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += static_cast<double>(cm.count(o, c));
      fn += static_cast<double>(cm.count(c, o));
    }
    ClassMetrics m;
    if (tp + fp + fn == 0) {
      m = ClassMetrics{1.0, 1.0, 1.0, true};
    } else {
      m.precision = ratio(tp, tp + fp);
      m.recall = ratio(tp, tp + fn);
      m.iou = tp / (tp + fp + fn);
    }
    report.per_class.push_back(m);
    report.miou += m.iou;
  }
  report.miou /= k;
  return report;
}

ConfusionMatrix collapse_binary(const ConfusionMatrix& cm) {
  if (cm.classes() != 3) throw std::invalid_argument("collapse_binary: expects a 3-class matrix");
  ConfusionMatrix out(2);
  auto fold = [](int c) { return c == 0 ? 0 : 1; };
  for (int t = 0; t < 3; ++t) {
    for (int p = 0; p < 3; ++p) out.add(fold(t), fold(p), cm.count(t, p));
  }
  out.add_ignored(cm.ignored());
  return out;
}

const std::vector<std::string>& cloud_class_names() {
  static const std::vector<std::string> names{"Clear", "Thick cloud", "Thin cloud"};
  return names;
}

const std::vector<std::string>& binary_class_names() {
  static const std::vector<std::string> names{"Clear", "Cloud"};
  return names;
}

std::string format_metrics_table(const MetricsReport& report, const std::vector<std::string>& class_names) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    os << std::left << std::setw(14) << class_names.at(c) << std::right;
    const auto& m = report.per_class[c];
    os << " Prec " << std::setw(6) << 100 * m.precision << "  Rec " << std::setw(6) << 100 * m.recall << "  IoU "
       << std::setw(6) << 100 * m.iou << (m.absent ? "  (absent)" : "") << '\n';
  }
  os << std::left << std::setw(14) << "All classes" << " mIoU " << std::right << std::setw(6) << 100 * report.miou
     << '\n';
  return os.str();
}

std::string format_metrics_json(const MetricsReport& report, const std::vector<std::string>& class_names) {
  nlohmann::json j;
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const auto& m = report.per_class[c];
    j["classes"].push_back({{"name", class_names.at(c)},
                            {"precision", m.precision},
                            {"recall", m.recall},
                            {"iou", m.iou},
                            {"absent", m.absent}});
  }
  j["miou"] = report.miou;
  return j.dump();
}

}  // namespace bandfuse
