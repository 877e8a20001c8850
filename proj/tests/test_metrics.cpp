#include "bandfuse/metrics.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace bandfuse;

namespace {

ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows) {
  ConfusionMatrix cm(static_cast<int>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t p = 0; p < rows[t].size(); ++p) cm.add(static_cast<int>(t), static_cast<int>(p), rows[t][p]);
  return cm;
}

}  // namespace

TEST(Metrics, PerfectDiagonal) {
  const auto r = class_metrics(from_rows({{10, 0, 0}, {0, 10, 0}, {0, 0, 10}}));
  for (const auto& c : r.per_class) {
    EXPECT_EQ(c.precision, 1.0);
    EXPECT_EQ(c.recall, 1.0);
    EXPECT_EQ(c.iou, 1.0);
    EXPECT_FALSE(c.absent);
  }
  EXPECT_EQ(r.miou, 1.0);
}

TEST(Metrics, WorkedExample) {
  const auto r = class_metrics(from_rows({{5, 5, 0}, {0, 10, 0}, {0, 0, 10}}));
  EXPECT_DOUBLE_EQ(r.per_class[0].recall, 0.5);
  EXPECT_DOUBLE_EQ(r.per_class[0].precision, 1.0);
  EXPECT_DOUBLE_EQ(r.per_class[0].iou, 0.5);
  EXPECT_DOUBLE_EQ(r.per_class[1].precision, 10.0 / 15.0);
  EXPECT_DOUBLE_EQ(r.per_class[1].iou, 10.0 / 15.0);
  EXPECT_DOUBLE_EQ(r.miou, (0.5 + 10.0 / 15.0 + 1.0) / 3.0);
}

TEST(Metrics, AbsentAndMissedClasses) {
  const auto r = class_metrics(from_rows({{4, 1, 0}, {2, 3, 0}, {0, 0, 0}}));
  EXPECT_TRUE(r.per_class[2].absent);
  EXPECT_EQ(r.per_class[2].iou, 1.0);
  // A class predicted but never true scores zero recall-free IoU.
  const auto s = class_metrics(from_rows({{4, 0, 1}, {0, 5, 0}, {0, 0, 0}}));
  EXPECT_FALSE(s.per_class[2].absent);
  EXPECT_EQ(s.per_class[2].precision, 0.0);
  EXPECT_EQ(s.per_class[2].recall, 0.0);
  EXPECT_EQ(s.per_class[2].iou, 0.0);
}

TEST(Metrics, UpdateMatchesPixelLoop) {
  std::mt19937_64 rng(1);
  std::vector<Label> pred(64), truth(64);
  for (int i = 0; i < 64; ++i) {
    pred[i] = static_cast<Label>(rng() % 3);
    truth[i] = rng() % 7 == 0 ? kIgnoreLabel : static_cast<Label>(rng() % 3);
  }
  ConfusionMatrix cm;
  update_confusion(cm, std::span<const Label>(pred), std::span<const Label>(truth));
  std::uint64_t oracle[3][3] = {};
  std::uint64_t ignored = 0;
  for (int i = 0; i < 64; ++i) {
    if (truth[i] == kIgnoreLabel) {
      ++ignored;
      continue;
    }
    ++oracle[truth[i]][pred[i]];
  }
  for (int t = 0; t < 3; ++t)
    for (int p = 0; p < 3; ++p) EXPECT_EQ(cm.count(t, p), oracle[t][p]);
  EXPECT_EQ(cm.ignored(), ignored);
  EXPECT_EQ(cm.evaluated(), 64u);
}

TEST(Metrics, AllIgnoredAndErrors) {
  ConfusionMatrix cm;
  const std::vector<Label> pred(16, 1), ignore(16, kIgnoreLabel);
  update_confusion(cm, std::span<const Label>(pred), std::span<const Label>(ignore));
  EXPECT_EQ(cm.counted(), 0u);
  EXPECT_EQ(cm.ignored(), 16u);
  const std::vector<Label> short_truth(15, 0), bad(16, 3);
  EXPECT_THROW(update_confusion(cm, std::span<const Label>(pred), std::span<const Label>(short_truth)),
               std::invalid_argument);
  EXPECT_THROW(update_confusion(cm, std::span<const Label>(bad), std::span<const Label>(pred)), std::invalid_argument);
  EXPECT_THROW(update_confusion(cm, std::span<const Label>(pred), std::span<const Label>(bad)), std::invalid_argument);
}

TEST(Metrics, AccumulationOrderDoesNotMatter) {
  std::mt19937_64 rng(2);
  std::vector<std::vector<Label>> preds(4, std::vector<Label>(25)), truths(4, std::vector<Label>(25));
  for (int t = 0; t < 4; ++t)
    for (int i = 0; i < 25; ++i) {
      preds[t][i] = static_cast<Label>(rng() % 3);
      truths[t][i] = static_cast<Label>(rng() % 3);
    }
  ConfusionMatrix forward, backward, merged;
  for (int t = 0; t < 4; ++t) update_confusion(forward, std::span<const Label>(preds[t]), std::span<const Label>(truths[t]));
  for (int t = 3; t >= 0; --t)
    update_confusion(backward, std::span<const Label>(preds[t]), std::span<const Label>(truths[t]));
  for (int t = 0; t < 4; ++t) {
    ConfusionMatrix part;
    update_confusion(part, std::span<const Label>(preds[t]), std::span<const Label>(truths[t]));
    merged += part;
  }
  EXPECT_EQ(forward, backward);
  EXPECT_EQ(forward, merged);
}

TEST(Metrics, BinaryCollapse) {
  const auto cm = from_rows({{50, 3, 2}, {4, 20, 6}, {5, 7, 30}});
  const auto b = collapse_binary(cm);
  ASSERT_EQ(b.classes(), 2);
  EXPECT_EQ(b.count(0, 0), 50u);
  EXPECT_EQ(b.count(0, 1), 5u);
  EXPECT_EQ(b.count(1, 0), 9u);
  EXPECT_EQ(b.count(1, 1), 63u);
  const auto r = class_metrics(b);
  EXPECT_DOUBLE_EQ(r.per_class[1].iou, 63.0 / (63 + 5 + 9));
  EXPECT_DOUBLE_EQ(r.per_class[0].iou, 50.0 / (50 + 5 + 9));
}

TEST(Metrics, Formatting) {
  const auto r = class_metrics(from_rows({{5, 5, 0}, {0, 10, 0}, {0, 0, 10}}));
  const auto table = format_metrics_table(r, cloud_class_names());
  EXPECT_NE(table.find("mIoU"), std::string::npos);
  EXPECT_NE(table.find("50.0"), std::string::npos);
  const auto json = format_metrics_json(r, cloud_class_names());
  EXPECT_EQ(json.find('\n'), std::string::npos);
  EXPECT_NE(json.find("\"miou\""), std::string::npos);
  EXPECT_EQ(binary_class_names().size(), 2u);
}
