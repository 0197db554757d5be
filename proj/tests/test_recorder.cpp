#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "hpcad/recorder.hpp"
#include "hpcad/trace_io.hpp"

namespace {

using namespace hpcad;

// Minimal blocking line client for loopback tests.
class TestClient {
 public:
  explicit TestClient(std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw std::runtime_error("client socket failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      ::close(fd_);
      fd_ = -1;
      throw std::runtime_error("client connect failed");
    }
  }

  ~TestClient() { close(); }

  void close() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  void send_line(const std::string& line) {
    const std::string framed = line + "\n";
    ASSERT_TRUE(detail::send_all(fd_, framed));
  }

  // may return empty on EOF
  std::string read_line() {
    while (true) {
      const std::size_t pos = buffer_.find('\n');
      if (pos != std::string::npos) {
        std::string line = buffer_.substr(0, pos);
        buffer_.erase(0, pos + 1);
        return line;
      }
      char chunk[4096];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n <= 0) return {};
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  std::string request(const std::string& line) {
    send_line(line);
    return read_line();
  }

  bool connected_eof() {
    char chunk[1];
    return ::recv(fd_, chunk, 1, 0) == 0;
  }

 private:
  int fd_ = -1;
  std::string buffer_;
};

std::filesystem::path temp_capture(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

TEST(Recorder, HandshakeProtocol) {
  const auto out = temp_capture("hpcad_rec_handshake.csv");
  Recorder recorder({"127.0.0.1:0", out.string(), 2, 512000});
  recorder.start();
  {
    TestClient client(recorder.port());
    EXPECT_EQ(client.request("HELLO v1"), "OK v1");
  }
  {
    TestClient client(recorder.port());
    client.send_line("HELLO v2");
    // bad handshake: server closes without a reply
    EXPECT_EQ(client.read_line(), "");
  }
  recorder.stop();
  std::filesystem::remove(out);
}

TEST(Recorder, MalformedLineKeepsSessionOpen) {
  const auto out = temp_capture("hpcad_rec_malformed.csv");
  Recorder recorder({"127.0.0.1:0", out.string(), 2, 512000});
  recorder.start();
  {
    TestClient client(recorder.port());
    ASSERT_EQ(client.request("HELLO v1"), "OK v1");
    EXPECT_EQ(client.request("RECORD x"), "ERR malformed");
    EXPECT_EQ(client.request("RECORD 0 4 clean Store=10,Load=20"), "OK");
    EXPECT_EQ(client.request("RECORD 1 4 clean Store=beef,Load=20"),
              "ERR invalid count 'beef'");
    EXPECT_EQ(client.request("RECORD 1 4 clean Store=11,Load=21"), "OK");
    EXPECT_EQ(client.request("RECORD 1 4 clean Store=12,Load=22"),
              "ERR out-of-order epoch");
    EXPECT_EQ(client.request("RECORD 2 4 clean Store=9,Llc=1,Load=2"),
              "ERR column mismatch");
    EXPECT_EQ(client.request("RECORD 2 4 clean Store=9,Store=2"),
              "ERR duplicate event 'Store'");
  }
  recorder.stop();
  EXPECT_EQ(recorder.records_received(), 2u);

  const Trace trace = read_trace(out);
  ASSERT_EQ(trace.samples.size(), 2u);
  EXPECT_EQ(trace.samples[0].counts.at(EventKind::Store), 10u);
  EXPECT_EQ(trace.samples[1].counts.at(EventKind::Load), 21u);
  std::filesystem::remove(out);
}

TEST(Recorder, LoopbackStreamPersistsBitExact) {
  const auto out = temp_capture("hpcad_rec_stream.csv");
  Recorder recorder({"127.0.0.1:0", out.string(), 2, 512000});
  recorder.start();

  constexpr std::size_t kRecords = 10000;
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<std::uint64_t> count(0, 1000000);
  std::vector<Sample> sent;
  sent.reserve(kRecords);
  {
    TestClient client(recorder.port());
    ASSERT_EQ(client.request("HELLO v1"), "OK v1");
    constexpr std::size_t kBatch = 100;  // pipeline acks in batches
    for (std::size_t base = 0; base < kRecords; base += kBatch) {
      for (std::size_t i = base; i < base + kBatch; ++i) {
        Sample s;
        s.epoch_index = i;
        s.pid = 4;
        s.stage = i % 97 == 0 ? StageLabel::Stage1 : StageLabel::Clean;
        s.counts[EventKind::Store] = count(rng);
        s.counts[EventKind::Load] = count(rng);
        s.counts[EventKind::Ret] = count(rng);
        client.send_line("RECORD " + std::to_string(s.epoch_index) + " 4 " +
                         std::string(stage_name(s.stage)) +
                         " Store=" + std::to_string(s.counts[EventKind::Store]) +
                         ",Load=" + std::to_string(s.counts[EventKind::Load]) +
                         ",Ret=" + std::to_string(s.counts[EventKind::Ret]));
        sent.push_back(std::move(s));
      }
      for (std::size_t i = 0; i < kBatch; ++i) ASSERT_EQ(client.read_line(), "OK");
    }
  }
  recorder.stop();
  EXPECT_EQ(recorder.records_received(), kRecords);

  const Trace trace = read_trace(out);
  ASSERT_EQ(trace.samples.size(), kRecords);
  for (std::size_t i = 0; i < kRecords; ++i) {
    EXPECT_EQ(trace.samples[i], sent[i]) << "record " << i;
  }
  std::filesystem::remove(out);
}

TEST(Recorder, TwoClientsOrderedByConnection) {
  const auto out = temp_capture("hpcad_rec_two.csv");
  Recorder recorder({"127.0.0.1:0", out.string(), 4, 512000});
  recorder.start();
  {
    TestClient first(recorder.port());
    ASSERT_EQ(first.request("HELLO v1"), "OK v1");
    TestClient second(recorder.port());
    ASSERT_EQ(second.request("HELLO v1"), "OK v1");
    ASSERT_EQ(first.request("RECORD 0 4 clean Store=1"), "OK");
    ASSERT_EQ(second.request("RECORD 0 9 clean Store=100"), "OK");
    ASSERT_EQ(first.request("RECORD 1 4 clean Store=2"), "OK");
    ASSERT_EQ(second.request("RECORD 5 9 clean Store=101"), "OK");
  }
  recorder.stop();
  EXPECT_EQ(recorder.records_received(), 4u);

  const Trace trace = read_trace(out);
  ASSERT_EQ(trace.samples.size(), 4u);
  // connection 1's records first, then connection 2's, each in arrival order
  EXPECT_EQ(trace.samples[0].counts.at(EventKind::Store), 1u);
  EXPECT_EQ(trace.samples[1].counts.at(EventKind::Store), 2u);
  EXPECT_EQ(trace.samples[2].counts.at(EventKind::Store), 100u);
  EXPECT_EQ(trace.samples[3].counts.at(EventKind::Store), 101u);
  std::filesystem::remove(out);
}

TEST(Recorder, ConnectionLimitRefusesExtraClients) {
  const auto out = temp_capture("hpcad_rec_limit.csv");
  Recorder recorder({"127.0.0.1:0", out.string(), 1, 512000});
  recorder.start();
  {
    TestClient first(recorder.port());
    ASSERT_EQ(first.request("HELLO v1"), "OK v1");
    TestClient second(recorder.port());
    second.send_line("HELLO v1");
    EXPECT_EQ(second.read_line(), "");  // refused: closed without a reply
    ASSERT_EQ(first.request("RECORD 0 4 clean Store=1"), "OK");
  }
  recorder.stop();
  EXPECT_EQ(recorder.records_received(), 1u);
  std::filesystem::remove(out);
}

TEST(Recorder, StartStopLifecycle) {
  const auto out = temp_capture("hpcad_rec_lifecycle.csv");
  Recorder recorder({"127.0.0.1:0", out.string(), 2, 512000});
  EXPECT_FALSE(recorder.running());
  recorder.start();
  EXPECT_TRUE(recorder.running());
  EXPECT_THROW(recorder.start(), Error);
  recorder.stop();
  EXPECT_FALSE(recorder.running());
  recorder.stop();  // second stop is a no-op
  // empty capture still parses
  const Trace trace = read_trace(out);
  EXPECT_TRUE(trace.samples.empty());
  std::filesystem::remove(out);
}

TEST(RecorderConfig, Validation) {
  EXPECT_THROW(Recorder({"127.0.0.1:0", "", 2, 512000}), Error);
  EXPECT_THROW(Recorder({"127.0.0.1:0", "/tmp/x.csv", 0, 512000}), Error);
  EXPECT_THROW(
      [] {
        Recorder r({"not-an-address", "/tmp/x.csv", 1, 512000});
        r.start();
      }(),
      Error);
}

}  // namespace
