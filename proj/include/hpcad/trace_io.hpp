#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hpcad/error.hpp"
#include "hpcad/trace.hpp"

namespace hpcad {

inline constexpr int kTraceFormatVersion = 1;

namespace detail {

inline std::optional<std::uint64_t> parse_u64(std::string_view text) {
  std::uint64_t value = 0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || text.empty()) return std::nullopt;
  return value;
}

inline std::optional<std::int64_t> parse_i64(std::string_view text) {
  std::int64_t value = 0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || text.empty()) return std::nullopt;
  return value;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string format_trace_header(std::uint64_t epoch_instructions,
                                       const std::vector<EventKind>& columns) {
  std::string out = "#version=" + std::to_string(kTraceFormatVersion) + "\n";
  out += "#epoch_instructions=" + std::to_string(epoch_instructions) + "\n";
  out += "epoch,pid,stage";
  for (EventKind kind : columns) {
    out += ',';
    out += event_name(kind);
  }
  out += '\n';
  return out;
}

inline std::string format_sample_row(const Sample& sample,
                                     const std::vector<EventKind>& columns) {
  std::string out = std::to_string(sample.epoch_index);
  out += ',';
  out += std::to_string(sample.pid);
  out += ',';
  out += stage_name(sample.stage);
  for (EventKind kind : columns) {
    const auto it = sample.counts.find(kind);
    if (it == sample.counts.end()) {
      throw Error("trace row: sample misses event column " +
                  std::string(event_name(kind)));
    }
    out += ',';
    out += std::to_string(it->second);
  }
  out += '\n';
  return out;
}

}  // namespace detail

/// Serializes a trace in the canonical CSV form. Returns the byte count
/// written. Identical traces produce identical bytes.
inline std::size_t write_trace(const Trace& trace, std::ostream& out) {
  std::size_t bytes = 0;
  const std::string header =
      detail::format_trace_header(trace.epoch_instructions, trace.event_columns);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  bytes += header.size();
  for (const Sample& sample : trace.samples) {
    const std::string row = detail::format_sample_row(sample, trace.event_columns);
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
    bytes += row.size();
  }
  if (!out) throw Error("write_trace: stream write failed");
  return bytes;
}

inline std::size_t write_trace(const Trace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("write_trace: cannot open '" + path.string() + "'");
  const std::size_t bytes = write_trace(trace, out);
  out.flush();
  if (!out) throw Error("write_trace: write to '" + path.string() + "' failed");
  return bytes;
}

/// Parses the canonical CSV form. Malformed input is rejected with the
/// 1-based line number.
inline Trace read_trace(std::istream& in) {
  Trace trace;
  std::string line;
  std::size_t line_no = 0;

  auto next_line = [&](bool required) -> bool {
    if (!std::getline(in, line)) {
      if (required) {
        throw Error("read_trace: unexpected end of input at line " +
                    std::to_string(line_no + 1));
      }
      return false;
    }
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  next_line(true);
  constexpr std::string_view version_prefix = "#version=";
  if (!line.starts_with(version_prefix)) {
    throw Error("read_trace: line 1: expected '#version=<n>'");
  }
  const auto version = detail::parse_u64(line.substr(version_prefix.size()));
  if (!version) throw Error("read_trace: line 1: malformed version");
  if (*version != kTraceFormatVersion) {
    throw Error("read_trace: line 1: unsupported trace file version " +
                std::to_string(*version));
  }

  next_line(true);
  constexpr std::string_view epoch_prefix = "#epoch_instructions=";
  if (!line.starts_with(epoch_prefix)) {
    throw Error("read_trace: line 2: expected '#epoch_instructions=<n>'");
  }
  const auto epoch_instructions = detail::parse_u64(line.substr(epoch_prefix.size()));
  if (!epoch_instructions || *epoch_instructions == 0) {
    throw Error("read_trace: line 2: malformed epoch_instructions");
  }
  trace.epoch_instructions = *epoch_instructions;

  next_line(true);
  const auto header = detail::split(line, ',');
  if (header.size() < 3 || header[0] != "epoch" || header[1] != "pid" ||
      header[2] != "stage") {
    throw Error("read_trace: line 3: expected header 'epoch,pid,stage,...'");
  }
  for (std::size_t i = 3; i < header.size(); ++i) {
    const auto kind = parse_event(header[i]);
    if (!kind) {
      throw Error("read_trace: line 3: unknown event column '" +
                  std::string(header[i]) + "'");
    }
    if (is_derived(*kind)) {
      throw Error("read_trace: line 3: derived kind " + std::string(header[i]) +
                  " cannot be a trace column");
    }
    trace.event_columns.push_back(*kind);
  }

  while (next_line(false)) {
    if (line.empty()) continue;
    const auto fields = detail::split(line, ',');
    const std::string where = "read_trace: line " + std::to_string(line_no) + ": ";
    if (fields.size() != 3 + trace.event_columns.size()) {
      throw Error(where + "expected " +
                  std::to_string(3 + trace.event_columns.size()) + " fields, got " +
                  std::to_string(fields.size()));
    }
    Sample sample;
    const auto epoch = detail::parse_u64(fields[0]);
    if (!epoch) throw Error(where + "malformed epoch '" + std::string(fields[0]) + "'");
    sample.epoch_index = *epoch;
    const auto pid = detail::parse_i64(fields[1]);
    if (!pid) throw Error(where + "malformed pid '" + std::string(fields[1]) + "'");
    sample.pid = *pid;
    const auto stage = parse_stage(fields[2]);
    if (!stage) throw Error(where + "unknown stage token '" + std::string(fields[2]) + "'");
    sample.stage = *stage;
    for (std::size_t i = 0; i < trace.event_columns.size(); ++i) {
      const auto count = detail::parse_u64(fields[3 + i]);
      if (!count) {
        throw Error(where + "invalid count '" + std::string(fields[3 + i]) +
                    "' for event " +
                    std::string(event_name(trace.event_columns[i])));
      }
      sample.counts[trace.event_columns[i]] = *count;
    }
    trace.samples.push_back(std::move(sample));
  }
  return trace;
}

inline Trace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("read_trace: cannot open '" + path.string() + "'");
  return read_trace(in);
}

inline std::string trace_to_string(const Trace& trace) {
  std::ostringstream out;
  write_trace(trace, out);
  return out.str();
}

inline Trace trace_from_string(const std::string& text) {
  std::istringstream in(text);
  return read_trace(in);
}

}  // namespace hpcad
