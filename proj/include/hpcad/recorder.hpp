#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "hpcad/error.hpp"
#include "hpcad/trace.hpp"
#include "hpcad/trace_io.hpp"

namespace hpcad {

struct RecorderConfig {
  std::string listen_address = "127.0.0.1:0";  // host:port, port 0 = ephemeral
  std::string output_path;
  int max_connections = 4;
  std::uint64_t epoch_instructions = 512000;
};

namespace detail {

inline bool send_all(int fd, std::string_view data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

// Pulls newline-terminated lines off a socket, tolerating a trailing \r.
class SocketLineReader {
 public:
  explicit SocketLineReader(int fd) : fd_(fd) {}

  std::optional<std::string> next_line() {
    while (true) {
      const std::size_t pos = buffer_.find('\n');
      if (pos != std::string::npos) {
        std::string line = buffer_.substr(0, pos);
        buffer_.erase(0, pos + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      if (buffer_.size() > kMaxLine) return std::nullopt;  // runaway line
      char chunk[4096];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n <= 0) return std::nullopt;
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  static constexpr std::size_t kMaxLine = 1 << 20;
  int fd_;
  std::string buffer_;
};

// RECORD <epoch> <pid> <stage> <Event>=<count>(,<Event>=<count>)*
inline std::optional<Sample> parse_record_line(std::string_view line,
                                               std::string& reason) {
  std::vector<std::string_view> tokens;
  std::size_t start = 0;
  while (start <= line.size()) {
    const std::size_t pos = line.find(' ', start);
    if (pos == std::string_view::npos) {
      tokens.push_back(line.substr(start));
      break;
    }
    tokens.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  if (tokens.size() != 5 || tokens[0] != "RECORD") {
    reason = "malformed";
    return std::nullopt;
  }
  const auto epoch = parse_u64(tokens[1]);
  const auto pid = parse_i64(tokens[2]);
  const auto stage = parse_stage(tokens[3]);
  if (!epoch || !pid || !stage) {
    reason = "malformed";
    return std::nullopt;
  }
  Sample sample;
  sample.epoch_index = *epoch;
  sample.pid = *pid;
  sample.stage = *stage;
  for (std::string_view pair : split(tokens[4], ',')) {
    const std::size_t eq = pair.find('=');
    if (eq == std::string_view::npos) {
      reason = "malformed";
      return std::nullopt;
    }
    const auto kind = parse_event(pair.substr(0, eq));
    if (!kind || is_derived(*kind)) {
      reason = "unknown event '" + std::string(pair.substr(0, eq)) + "'";
      return std::nullopt;
    }
    const auto count = parse_u64(pair.substr(eq + 1));
    if (!count) {
      reason = "invalid count '" + std::string(pair.substr(eq + 1)) + "'";
      return std::nullopt;
    }
    if (!sample.counts.emplace(*kind, *count).second) {
      reason = "duplicate event '" + std::string(pair.substr(0, eq)) + "'";
      return std::nullopt;
    }
  }
  if (sample.counts.empty()) {
    reason = "malformed";
    return std::nullopt;
  }
  return sample;
}

}  // namespace detail

/// Measurement collection endpoint. Clients connect over TCP, handshake with
/// "HELLO v1" (answered "OK v1"), then stream one record per line:
///
///   RECORD <epoch> <pid> <stage> <Event>=<count>(,<Event>=<count>)*
///
/// Every line is answered with "OK" or "ERR <reason>"; a rejected line is
/// dropped and the session continues. Epochs must strictly increase per
/// connection, and the first acknowledged record fixes the event columns of
/// the capture. On stop() the recorder persists exactly the acknowledged
/// records, ordered by (connection, arrival), as a trace CSV parsable by
/// read_trace.
class Recorder {
 public:
  explicit Recorder(RecorderConfig config) : config_(std::move(config)) {
    if (config_.max_connections < 1) {
      throw Error("recorder: max_connections must be >= 1");
    }
    if (config_.output_path.empty()) throw Error("recorder: output_path not set");
  }

  ~Recorder() {
    try {
      stop();
    } catch (...) {
      // stop() already closed what it could; a destructor must not throw
    }
  }

  Recorder(const Recorder&) = delete;
  Recorder& operator=(const Recorder&) = delete;

  void start() {
    if (running_.exchange(true)) throw Error("recorder: already running");
    try {
      const auto [host, port] = parse_address(config_.listen_address);
      listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
      if (listen_fd_ < 0) throw Error("recorder: socket() failed");
      const int one = 1;
      ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);

      sockaddr_in addr{};
      addr.sin_family = AF_INET;
      addr.sin_port = htons(port);
      if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        throw Error("recorder: cannot parse listen host '" + host + "'");
      }
      if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        throw Error("recorder: cannot bind " + config_.listen_address + ": " +
                    std::strerror(errno));
      }
      if (::listen(listen_fd_, 16) != 0) throw Error("recorder: listen() failed");
      sockaddr_in bound{};
      socklen_t len = sizeof bound;
      ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
      port_ = ntohs(bound.sin_port);
    } catch (...) {
      close_listener();
      running_.store(false);
      throw;
    }
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  /// Stops accepting, drains live connections, and persists the capture.
  void stop() {
    if (!running_.exchange(false)) return;
    close_listener();
    {
      std::lock_guard lock(mutex_);
      for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    for (std::thread& t : connection_threads_) {
      if (t.joinable()) t.join();
    }
    connection_threads_.clear();
    persist();
  }

  std::uint16_t port() const { return port_; }
  bool running() const { return running_.load(); }
  std::uint64_t records_received() const { return records_received_.load(); }

 private:
  static std::pair<std::string, std::uint16_t> parse_address(const std::string& text) {
    const std::size_t colon = text.rfind(':');
    if (colon == std::string::npos) {
      throw Error("recorder: listen address must be host:port, got '" + text + "'");
    }
    std::string host = text.substr(0, colon);
    if (host == "localhost" || host.empty()) host = "127.0.0.1";
    const auto port = detail::parse_u64(std::string_view(text).substr(colon + 1));
    if (!port || *port > 65535) {
      throw Error("recorder: bad port in listen address '" + text + "'");
    }
    return {host, static_cast<std::uint16_t>(*port)};
  }

  void close_listener() {
    if (listen_fd_ >= 0) {
      ::shutdown(listen_fd_, SHUT_RDWR);
      ::close(listen_fd_);
      listen_fd_ = -1;
    }
  }

  void accept_loop() {
    while (running_.load()) {
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) {
        if (!running_.load()) break;
        continue;
      }
      std::lock_guard lock(mutex_);
      if (!running_.load() ||
          active_connections_ >= static_cast<std::size_t>(config_.max_connections)) {
        ::close(fd);  // at capacity: refuse before the handshake
        continue;
      }
      ++active_connections_;
      open_fds_.push_back(fd);
      const std::size_t conn_seq = buffers_.size();
      buffers_.emplace_back();
      connection_threads_.emplace_back([this, fd, conn_seq] { serve(fd, conn_seq); });
    }
  }

  void serve(int fd, std::size_t conn_seq) {
    detail::SocketLineReader reader(fd);

    const auto hello = reader.next_line();
    if (!hello || *hello != "HELLO v1" || !detail::send_all(fd, "OK v1\n")) {
      finish_connection(fd);
      return;
    }

    std::optional<std::uint64_t> last_epoch;
    while (true) {
      const auto line = reader.next_line();
      if (!line) break;
      std::string reason;
      auto sample = detail::parse_record_line(*line, reason);
      if (!sample) {
        if (!detail::send_all(fd, "ERR " + reason + "\n")) break;
        continue;
      }
      if (last_epoch && sample->epoch_index <= *last_epoch) {
        if (!detail::send_all(fd, "ERR out-of-order epoch\n")) break;
        continue;
      }
      const std::uint64_t epoch = sample->epoch_index;
      bool accepted = false;
      {
        std::lock_guard lock(mutex_);
        if (columns_.empty()) {
          for (const auto& [kind, count] : sample->counts) {
            (void)count;
            columns_.push_back(kind);
          }
          accepted = true;
        } else {
          accepted = same_column_set(sample->counts);
        }
        if (accepted) buffers_[conn_seq].push_back(std::move(*sample));
      }
      if (!accepted) {
        if (!detail::send_all(fd, "ERR column mismatch\n")) break;
        continue;
      }
      last_epoch = epoch;
      records_received_.fetch_add(1);
      // the reply is the acknowledgment: a record is buffered before OK and
      // never buffered when any ERR was sent
      if (!detail::send_all(fd, "OK\n")) break;
    }
    finish_connection(fd);
  }

  bool same_column_set(const std::map<EventKind, std::uint64_t>& counts) const {
    if (counts.size() != columns_.size()) return false;
    for (EventKind kind : columns_) {
      if (!counts.contains(kind)) return false;
    }
    return true;
  }

  void finish_connection(int fd) {
    ::close(fd);
    std::lock_guard lock(mutex_);
    std::erase(open_fds_, fd);
    --active_connections_;
  }

  // Single writer: buffered records flushed once, at shutdown, so rows never
  // interleave within a record.
  void persist() {
    std::ofstream out(config_.output_path, std::ios::binary);
    if (!out) {
      throw Error("recorder: cannot open output '" + config_.output_path + "'");
    }
    std::lock_guard lock(mutex_);
    out << detail::format_trace_header(config_.epoch_instructions, columns_);
    for (const auto& buffer : buffers_) {
      for (const Sample& sample : buffer) {
        out << detail::format_sample_row(sample, columns_);
      }
    }
    out.flush();
    if (!out) throw Error("recorder: write to '" + config_.output_path + "' failed");
  }

  RecorderConfig config_;
  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> records_received_{0};
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::thread accept_thread_;
  std::vector<std::thread> connection_threads_;

  std::mutex mutex_;
  std::vector<int> open_fds_;
  std::size_t active_connections_ = 0;
  std::vector<std::vector<Sample>> buffers_;  // per connection, arrival order
  std::vector<EventKind> columns_;            // fixed by the first record
};

}  // namespace hpcad
