#include <gtest/gtest.h>

#include <random>
#include <sstream>
#include <vector>

#include "hpcad/synth.hpp"
#include "hpcad/transform.hpp"

namespace {

using namespace hpcad;

TEST(FitMinmax, ObservedRange) {
  const std::vector<double> values{2.0, 5.0, 9.0};
  const auto [lo, hi] = fit_minmax(values, "Store");
  EXPECT_DOUBLE_EQ(lo, 2.0);
  EXPECT_DOUBLE_EQ(hi, 9.0);
}

TEST(FitMinmax, ConstantColumnNamesEvent) {
  const std::vector<double> values{4.0, 4.0, 4.0};
  try {
    fit_minmax(values, "Llc");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("Llc"), std::string::npos);
  }
  EXPECT_THROW(fit_minmax(std::vector<double>{1.0}, "Llc"), Error);
}

TEST(FitLambda, MedianAlreadyCenteredGivesOne) {
  const std::vector<double> values{0.0, 0.5, 1.0};
  EXPECT_DOUBLE_EQ(fit_lambda(values, 0.0, 1.0), 1.0);
}

TEST(FitLambda, QuarterMedianGivesHalf) {
  const std::vector<double> values{0.0, 0.25, 1.0};
  EXPECT_DOUBLE_EQ(fit_lambda(values, 0.0, 1.0), 0.5);
}

TEST(FitLambda, DegenerateMedianRejected) {
  const std::vector<double> at_min{0.0, 0.0, 1.0};
  EXPECT_THROW(fit_lambda(at_min, 0.0, 1.0), Error);
  const std::vector<double> at_max{0.0, 1.0, 1.0};
  EXPECT_THROW(fit_lambda(at_max, 0.0, 1.0), Error);
}

TEST(FitLambda, SkewedSampleMedianLandsOnTarget) {
  std::mt19937_64 rng(5);
  std::gamma_distribution<double> gamma(0.7, 1500.0);
  std::vector<double> values(10001);
  for (double& v : values) v = gamma(rng);
  const auto [lo, hi] = fit_minmax(values, "x");
  const double lambda = fit_lambda(values, lo, hi);
  EventTransform t{lo, hi, lambda};
  std::vector<double> transformed(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    transformed[i] = transform_value(values[i], t);
  }
  EXPECT_NEAR(median(transformed), 0.5, 0.02);
}

TEST(TransformValue, BoundaryClamps) {
  const EventTransform t{10.0, 20.0, 0.7};
  EXPECT_DOUBLE_EQ(transform_value(10.0, t), 0.0);
  EXPECT_DOUBLE_EQ(transform_value(5.0, t), 0.0);    // below training range
  EXPECT_DOUBLE_EQ(transform_value(20.0, t), 1.0);
  EXPECT_DOUBLE_EQ(transform_value(300.0, t), 1.0);  // above training range
}

TEST(TransformValue, MonotoneWithinRange) {
  const EventTransform t{0.0, 100.0, 2.3};
  EXPECT_LT(transform_value(30.0, t), transform_value(31.0, t));
}

TEST(TransformValue, RankPreservationProperty) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> lambda_dist(0.05, 8.0);
  std::uniform_real_distribution<double> raw(0.0, 1000.0);
  for (int trial = 0; trial < 100000; ++trial) {
    const EventTransform t{0.0, 1000.0, lambda_dist(rng)};
    const double a = raw(rng);
    const double b = raw(rng);
    const double ta = transform_value(a, t);
    const double tb = transform_value(b, t);
    ASSERT_TRUE(ta >= 0.0 && ta <= 1.0);
    if (a < b) {
      ASSERT_LE(ta, tb);
    } else if (a > b) {
      ASSERT_GE(ta, tb);
    }
  }
}

TEST(FitTransform, TrainingValuesMapInsideUnitInterval) {
  const Trace trace = gen_benign(default_benign_profile(), 500, 512000, 23);
  const TransformParams params = fit_transform(trace);
  EXPECT_EQ(params.events.size(), trace.event_columns.size());
  for (const Sample& s : trace.samples) {
    for (const auto& [kind, count] : s.counts) {
      const double v = transform_value(static_cast<double>(count),
                                       params.events.at(kind));
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(FitTransform, MedianOfTrainingColumnsNearTarget) {
  const Trace trace = gen_benign(default_benign_profile(), 5001, 512000, 29);
  const TransformParams params = fit_transform(trace);
  for (EventKind kind : trace.event_columns) {
    std::vector<double> transformed;
    transformed.reserve(trace.samples.size());
    for (const Sample& s : trace.samples) {
      transformed.push_back(transform_value(
          static_cast<double>(s.counts.at(kind)), params.events.at(kind)));
    }
    EXPECT_NEAR(median(transformed), 0.5, 0.02) << event_name(kind);
  }
}

TEST(Transform, VectorOrderedByEventSet) {
  Trace trace;
  trace.event_columns = {EventKind::Store, EventKind::Load, EventKind::Ret,
                         EventKind::Call_ID};
  for (std::uint64_t e = 0; e < 5; ++e) {
    Sample s;
    s.epoch_index = e;
    s.counts[EventKind::Store] = 10 * (e + 1);
    s.counts[EventKind::Load] = 20 * (e + 1);
    s.counts[EventKind::Ret] = 30 * (e + 1);
    s.counts[EventKind::Call_ID] = 40 * (e + 1);
    trace.samples.push_back(s);
  }
  const TransformParams params = fit_transform(trace);
  const EventSet set{"custom", {EventKind::Ret, EventKind::Store, EventKind::Load,
                                EventKind::Call_ID}};
  const auto v = transform(trace.samples[2], params, set);
  ASSERT_EQ(v.size(), 4u);
  EXPECT_DOUBLE_EQ(v[0], transform_value(90.0, params.events.at(EventKind::Ret)));
  EXPECT_DOUBLE_EQ(v[1], transform_value(30.0, params.events.at(EventKind::Store)));
}

TEST(Transform, UnfittedEventRejected) {
  Trace trace;
  trace.event_columns = {EventKind::Store};
  for (std::uint64_t e = 0; e < 4; ++e) {
    Sample s;
    s.epoch_index = e;
    s.counts[EventKind::Store] = e * 7 + 1;
    trace.samples.push_back(s);
  }
  const TransformParams params = fit_transform(trace);
  const EventSet set{"custom", {EventKind::Load}};
  EXPECT_THROW(transform(trace.samples[0], params, set), Error);
}

TEST(TransformParams, JsonRoundTrip) {
  const Trace trace = gen_benign(default_benign_profile(), 200, 512000, 31);
  const TransformParams params = fit_transform(trace);
  const TransformParams loaded =
      transform_params_from_json(transform_params_to_json(params));
  EXPECT_DOUBLE_EQ(loaded.target_median, params.target_median);
  ASSERT_EQ(loaded.events.size(), params.events.size());
  for (const auto& [kind, t] : params.events) {
    EXPECT_DOUBLE_EQ(loaded.events.at(kind).min, t.min);
    EXPECT_DOUBLE_EQ(loaded.events.at(kind).max, t.max);
    EXPECT_DOUBLE_EQ(loaded.events.at(kind).lambda, t.lambda);
  }
}

}  // namespace
