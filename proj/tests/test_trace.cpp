#include <gtest/gtest.h>

#include <random>

#include "hpcad/synth.hpp"
#include "hpcad/trace.hpp"

namespace {

using namespace hpcad;

Sample make_sample(std::uint64_t epoch, std::int64_t pid, StageLabel stage,
                   std::initializer_list<std::pair<EventKind, std::uint64_t>> counts) {
  Sample s;
  s.epoch_index = epoch;
  s.pid = pid;
  s.stage = stage;
  for (const auto& [kind, count] : counts) s.counts[kind] = count;
  return s;
}

TEST(Events, CategoryCounts) {
  std::size_t architectural = 0, microarchitectural = 0, derived = 0;
  for (EventKind kind : all_event_kinds()) {
    switch (event_category(kind)) {
      case EventCategory::Architectural: ++architectural; break;
      case EventCategory::Microarchitectural: ++microarchitectural; break;
      case EventCategory::Derived: ++derived; break;
    }
  }
  EXPECT_EQ(architectural, 8u);
  EXPECT_EQ(microarchitectural, 11u);
  EXPECT_EQ(derived, 3u);
}

TEST(Events, NamesRoundTrip) {
  for (EventKind kind : all_event_kinds()) {
    const auto parsed = parse_event(event_name(kind));
    ASSERT_TRUE(parsed.has_value());
    EXPECT_EQ(*parsed, kind);
  }
  EXPECT_FALSE(parse_event("NotAnEvent").has_value());
}

TEST(Events, DerivedPartsReferenceTwoBaseKinds) {
  for (EventKind kind : all_event_kinds()) {
    const auto parts = derived_parts(kind);
    if (is_derived(kind)) {
      ASSERT_TRUE(parts.has_value());
      EXPECT_FALSE(is_derived(parts->numerator));
      EXPECT_FALSE(is_derived(parts->denominator));
    } else {
      EXPECT_FALSE(parts.has_value());
    }
  }
}

TEST(StageLabels, SeverityOrder) {
  EXPECT_LT(StageLabel::Clean, StageLabel::Rop);
  EXPECT_LT(StageLabel::Rop, StageLabel::Stage1);
  EXPECT_LT(StageLabel::Stage1, StageLabel::Stage2);
}

TEST(DerivedValue, DirectRatio) {
  const Sample s = make_sample(0, 1, StageLabel::Clean,
                               {{EventKind::Misp_Br, 5}, {EventKind::Br, 100}});
  EXPECT_DOUBLE_EQ(derived_value(s, EventKind::PctMisp_Br), 0.05);
}

TEST(DerivedValue, ZeroDenominatorMapsToZero) {
  const Sample s = make_sample(0, 1, StageLabel::Clean,
                               {{EventKind::Misp_Ret, 7}, {EventKind::Ret, 0}});
  EXPECT_DOUBLE_EQ(derived_value(s, EventKind::PctMisp_Ret), 0.0);
}

TEST(DerivedValue, CacheMissRatio) {
  const Sample s = make_sample(0, 1, StageLabel::Clean,
                               {{EventKind::Mis_Llc, 3}, {EventKind::Llc, 12}});
  EXPECT_DOUBLE_EQ(derived_value(s, EventKind::PctMis_Llc), 0.25);
}

TEST(DerivedValue, MissingConstituentNamesTheEvent) {
  const Sample s = make_sample(0, 1, StageLabel::Clean, {{EventKind::Misp_Br, 5}});
  try {
    derived_value(s, EventKind::PctMisp_Br);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("Br"), std::string::npos);
  }
}

TEST(DerivedValue, NonDerivedKindRejected) {
  const Sample s = make_sample(0, 1, StageLabel::Clean, {{EventKind::Br, 5}});
  EXPECT_THROW(derived_value(s, EventKind::Br), Error);
}

TEST(DerivedValue, ScaleCovariant) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::uint64_t> count(1, 100000);
  std::uniform_int_distribution<std::uint64_t> factor(2, 50);
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint64_t num = count(rng);
    const std::uint64_t den = count(rng);
    const std::uint64_t c = factor(rng);
    const Sample a = make_sample(0, 1, StageLabel::Clean,
                                 {{EventKind::Misp_Br, num}, {EventKind::Br, den}});
    const Sample b = make_sample(0, 1, StageLabel::Clean,
                                 {{EventKind::Misp_Br, num * c}, {EventKind::Br, den * c}});
    EXPECT_NEAR(derived_value(a, EventKind::PctMisp_Br),
                derived_value(b, EventKind::PctMisp_Br), 1e-12);
  }
}

Trace small_trace() {
  Trace trace;
  trace.event_columns = {EventKind::Store, EventKind::Load};
  for (std::uint64_t e = 0; e < 10; ++e) {
    trace.samples.push_back(make_sample(
        e, 4, StageLabel::Clean, {{EventKind::Store, 10 + e}, {EventKind::Load, 20}}));
  }
  return trace;
}

TEST(ValidateTrace, WellFormedTraceHasEmptyReport) {
  EXPECT_TRUE(validate_trace(small_trace()).empty());
}

TEST(ValidateTrace, MonotonicityViolationNamesIndex) {
  Trace trace = small_trace();
  trace.samples.resize(3);
  trace.samples[0].epoch_index = 0;
  trace.samples[1].epoch_index = 2;
  trace.samples[2].epoch_index = 1;
  const auto report = validate_trace(trace);
  ASSERT_EQ(report.size(), 1u);
  EXPECT_NE(report[0].find("sample 2"), std::string::npos);
}

TEST(ValidateTrace, MissingColumnReported) {
  Trace trace = small_trace();
  trace.samples[3].counts.erase(EventKind::Store);
  const auto report = validate_trace(trace);
  ASSERT_EQ(report.size(), 1u);
  EXPECT_NE(report[0].find("missing event column Store"), std::string::npos);
}

TEST(ValidateTrace, UnexpectedColumnReported) {
  Trace trace = small_trace();
  trace.samples[2].counts[EventKind::Ret] = 1;
  const auto report = validate_trace(trace);
  ASSERT_EQ(report.size(), 1u);
  EXPECT_NE(report[0].find("unexpected event column Ret"), std::string::npos);
}

TEST(ValidateTrace, AcceptsGeneratorOutput) {
  const BenignProfile profile = default_benign_profile();
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Trace trace = gen_benign(profile, 20, 512000, seed);
    EXPECT_TRUE(validate_trace(trace).empty()) << "seed " << seed;
  }
}

TEST(FilterByPid, KeepsOnlyMatches) {
  Trace trace = small_trace();
  for (std::size_t i = 0; i < trace.samples.size(); ++i) {
    trace.samples[i].pid = i % 2 == 0 ? 4 : 7;
  }
  const Trace filtered = filter_by_pid(trace, 4);
  EXPECT_EQ(filtered.samples.size(), 5u);
  for (const Sample& s : filtered.samples) EXPECT_EQ(s.pid, 4);
}

TEST(FilterByPid, AbsentPidGivesEmptyTrace) {
  const Trace filtered = filter_by_pid(small_trace(), 99);
  EXPECT_TRUE(filtered.samples.empty());
  EXPECT_EQ(filtered.event_columns, small_trace().event_columns);
}

TEST(FilterByPid, PreservesRelativeOrder) {
  // 20 samples, 12 of them under pid 4, interleaved with pid 9
  Trace trace;
  trace.event_columns = {EventKind::Store};
  const std::int64_t pids[20] = {4, 9, 4, 4, 9, 4, 9, 4, 4, 9,
                                 4, 9, 4, 4, 9, 4, 9, 4, 4, 9};
  for (std::uint64_t e = 0; e < 20; ++e) {
    trace.samples.push_back(
        make_sample(e, pids[e], StageLabel::Clean, {{EventKind::Store, e}}));
  }
  const Trace filtered = filter_by_pid(trace, 4);
  EXPECT_EQ(filtered.samples.size(), 12u);
  for (std::size_t i = 1; i < filtered.samples.size(); ++i) {
    EXPECT_LT(filtered.samples[i - 1].epoch_index, filtered.samples[i].epoch_index);
  }
}

TEST(FilterByPid, Idempotent) {
  Trace trace = small_trace();
  trace.samples[1].pid = 9;
  const Trace once = filter_by_pid(trace, 4);
  const Trace twice = filter_by_pid(once, 4);
  EXPECT_EQ(once, twice);
}

TEST(EventSets, ValidationRules) {
  EventSet ok{"AM-1", {EventKind::Store, EventKind::Load, EventKind::Misp_Ret,
                       EventKind::Call_ID}};
  EXPECT_NO_THROW(validate_event_set(ok));

  EventSet small{"X", {EventKind::Store}};
  EXPECT_THROW(validate_event_set(small), Error);

  EventSet derived{"X", {EventKind::Store, EventKind::Load, EventKind::Ret,
                         EventKind::PctMisp_Br}};
  EXPECT_THROW(validate_event_set(derived), Error);

  EventSet repeated{"X", {EventKind::Store, EventKind::Store, EventKind::Ret,
                          EventKind::Load}};
  EXPECT_THROW(validate_event_set(repeated), Error);
}

}  // namespace
