#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "hpcad/synth.hpp"
#include "hpcad/trace_io.hpp"

namespace {

using namespace hpcad;

TEST(WriteTrace, EmptyTraceIsHeaderOnly) {
  Trace trace;
  trace.event_columns = {EventKind::Store, EventKind::Load};
  std::ostringstream out;
  const std::size_t bytes = write_trace(trace, out);
  EXPECT_EQ(out.str(),
            "#version=1\n"
            "#epoch_instructions=512000\n"
            "epoch,pid,stage,Store,Load\n");
  EXPECT_EQ(bytes, out.str().size());
}

TEST(WriteTrace, SingleSampleRow) {
  Trace trace;
  trace.event_columns = {EventKind::Store, EventKind::Load};
  Sample s;
  s.epoch_index = 0;
  s.pid = 4;
  s.stage = StageLabel::Clean;
  s.counts[EventKind::Store] = 10;
  s.counts[EventKind::Load] = 20;
  trace.samples.push_back(s);
  std::ostringstream out;
  write_trace(trace, out);
  EXPECT_EQ(out.str(),
            "#version=1\n"
            "#epoch_instructions=512000\n"
            "epoch,pid,stage,Store,Load\n"
            "0,4,clean,10,20\n");
}

TEST(ReadTrace, RoundTripEqualsOriginal) {
  const BenignProfile profile = default_benign_profile();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Trace trace = gen_benign(profile, 12, 512000, seed);
    // exercise non-clean labels and pid variety too
    trace.samples[3].stage = StageLabel::Rop;
    trace.samples[4].stage = StageLabel::Stage1;
    trace.samples[5].stage = StageLabel::Stage2;
    trace.samples[6].pid = -17;
    EXPECT_EQ(trace_from_string(trace_to_string(trace)), trace) << "seed " << seed;
  }
}

TEST(ReadTrace, WriteReadWriteIsByteIdentical) {
  const Trace trace = gen_benign(default_benign_profile(), 50, 512000, 99);
  const std::string first = trace_to_string(trace);
  const std::string second = trace_to_string(trace_from_string(first));
  EXPECT_EQ(first, second);
}

TEST(ReadTrace, NegativeCountNamesLine) {
  const std::string text =
      "#version=1\n"
      "#epoch_instructions=512000\n"
      "epoch,pid,stage,Store\n"
      "0,4,clean,7\n"
      "1,4,clean,-3\n";
  try {
    trace_from_string(text);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 5"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("-3"), std::string::npos);
  }
}

TEST(ReadTrace, UnsupportedVersionRejected) {
  const std::string text =
      "#version=2\n"
      "#epoch_instructions=512000\n"
      "epoch,pid,stage,Store\n";
  try {
    trace_from_string(text);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("unsupported"), std::string::npos);
  }
}

TEST(ReadTrace, UnknownEventColumnRejected) {
  const std::string text =
      "#version=1\n"
      "#epoch_instructions=512000\n"
      "epoch,pid,stage,Bogus\n";
  EXPECT_THROW(trace_from_string(text), Error);
}

TEST(ReadTrace, DerivedColumnRejected) {
  const std::string text =
      "#version=1\n"
      "#epoch_instructions=512000\n"
      "epoch,pid,stage,PctMisp_Br\n";
  EXPECT_THROW(trace_from_string(text), Error);
}

TEST(ReadTrace, BadStageTokenNamesLine) {
  const std::string text =
      "#version=1\n"
      "#epoch_instructions=512000\n"
      "epoch,pid,stage,Store\n"
      "0,4,Clean,7\n";
  try {
    trace_from_string(text);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("stage"), std::string::npos);
  }
}

TEST(ReadTrace, WrongFieldCountNamesLine) {
  const std::string text =
      "#version=1\n"
      "#epoch_instructions=512000\n"
      "epoch,pid,stage,Store,Load\n"
      "0,4,clean,7\n";
  try {
    trace_from_string(text);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos);
  }
}

TEST(ReadTrace, FileRoundTripWithPathContext) {
  const Trace trace = gen_benign(default_benign_profile(), 8, 256000, 3);
  const auto path = std::filesystem::temp_directory_path() / "hpcad_io_test.csv";
  write_trace(trace, path);
  EXPECT_EQ(read_trace(path), trace);
  std::filesystem::remove(path);

  try {
    read_trace(std::filesystem::path("/nonexistent/dir/trace.csv"));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/trace.csv"),
              std::string::npos);
  }
}

}  // namespace
