#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace hpcad {

/// Monitorable hardware events. The first 19 are counted directly by the
/// sampling driver; the Pct* kinds are ratios computed from two base kinds
/// and are never stored in a trace.
enum class EventKind : std::uint8_t {
  // architectural
  Load,
  Store,
  Arith,
  Br,
  Call,
  Call_D,
  Call_ID,
  Ret,
  // microarchitectural
  Llc,
  Mis_Llc,
  Misp_Br,
  Misp_Ret,
  Misp_Call,
  Misp_Br_C,
  Mis_Icache,
  Mis_Itlb,
  Mis_Dtlbl,
  Mis_Dtlbs,
  Stlb_Hit,
  // derived ratios
  PctMis_Llc,
  PctMisp_Br,
  PctMisp_Ret,
};

enum class EventCategory : std::uint8_t {
  Architectural,
  Microarchitectural,
  Derived,
};

inline constexpr std::size_t kEventCount = 22;
inline constexpr std::size_t kBaseEventCount = 19;

constexpr std::array<EventKind, kEventCount> all_event_kinds() {
  return {
      EventKind::Load,       EventKind::Store,      EventKind::Arith,
      EventKind::Br,         EventKind::Call,       EventKind::Call_D,
      EventKind::Call_ID,    EventKind::Ret,        EventKind::Llc,
      EventKind::Mis_Llc,    EventKind::Misp_Br,    EventKind::Misp_Ret,
      EventKind::Misp_Call,  EventKind::Misp_Br_C,  EventKind::Mis_Icache,
      EventKind::Mis_Itlb,   EventKind::Mis_Dtlbl,  EventKind::Mis_Dtlbs,
      EventKind::Stlb_Hit,   EventKind::PctMis_Llc, EventKind::PctMisp_Br,
      EventKind::PctMisp_Ret,
  };
}

constexpr std::array<EventKind, kBaseEventCount> base_event_kinds() {
  return {
      EventKind::Load,      EventKind::Store,     EventKind::Arith,
      EventKind::Br,        EventKind::Call,      EventKind::Call_D,
      EventKind::Call_ID,   EventKind::Ret,       EventKind::Llc,
      EventKind::Mis_Llc,   EventKind::Misp_Br,   EventKind::Misp_Ret,
      EventKind::Misp_Call, EventKind::Misp_Br_C, EventKind::Mis_Icache,
      EventKind::Mis_Itlb,  EventKind::Mis_Dtlbl, EventKind::Mis_Dtlbs,
      EventKind::Stlb_Hit,
  };
}

constexpr std::string_view event_name(EventKind kind) {
  switch (kind) {
    case EventKind::Load: return "Load";
    case EventKind::Store: return "Store";
    case EventKind::Arith: return "Arith";
    case EventKind::Br: return "Br";
    case EventKind::Call: return "Call";
    case EventKind::Call_D: return "Call_D";
    case EventKind::Call_ID: return "Call_ID";
    case EventKind::Ret: return "Ret";
    case EventKind::Llc: return "Llc";
    case EventKind::Mis_Llc: return "Mis_Llc";
    case EventKind::Misp_Br: return "Misp_Br";
    case EventKind::Misp_Ret: return "Misp_Ret";
    case EventKind::Misp_Call: return "Misp_Call";
    case EventKind::Misp_Br_C: return "Misp_Br_C";
    case EventKind::Mis_Icache: return "Mis_Icache";
    case EventKind::Mis_Itlb: return "Mis_Itlb";
    case EventKind::Mis_Dtlbl: return "Mis_Dtlbl";
    case EventKind::Mis_Dtlbs: return "Mis_Dtlbs";
    case EventKind::Stlb_Hit: return "Stlb_Hit";
    case EventKind::PctMis_Llc: return "PctMis_Llc";
    case EventKind::PctMisp_Br: return "PctMisp_Br";
    case EventKind::PctMisp_Ret: return "PctMisp_Ret";
  }
  return "?";
}

constexpr EventCategory event_category(EventKind kind) {
  switch (kind) {
    case EventKind::Load:
    case EventKind::Store:
    case EventKind::Arith:
    case EventKind::Br:
    case EventKind::Call:
    case EventKind::Call_D:
    case EventKind::Call_ID:
    case EventKind::Ret:
      return EventCategory::Architectural;
    case EventKind::PctMis_Llc:
    case EventKind::PctMisp_Br:
    case EventKind::PctMisp_Ret:
      return EventCategory::Derived;
    default:
      return EventCategory::Microarchitectural;
  }
}

constexpr bool is_derived(EventKind kind) {
  return event_category(kind) == EventCategory::Derived;
}

struct DerivedParts {
  EventKind numerator;
  EventKind denominator;
};

/// Constituents of a derived ratio kind. Only valid for derived kinds.
constexpr std::optional<DerivedParts> derived_parts(EventKind kind) {
  switch (kind) {
    case EventKind::PctMis_Llc:
      return DerivedParts{EventKind::Mis_Llc, EventKind::Llc};
    case EventKind::PctMisp_Br:
      return DerivedParts{EventKind::Misp_Br, EventKind::Br};
    case EventKind::PctMisp_Ret:
      return DerivedParts{EventKind::Misp_Ret, EventKind::Ret};
    default:
      return std::nullopt;
  }
}

inline std::optional<EventKind> parse_event(std::string_view name) {
  for (EventKind kind : all_event_kinds()) {
    if (event_name(kind) == name) return kind;
  }
  return std::nullopt;
}

}  // namespace hpcad
