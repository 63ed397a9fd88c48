#pragma once

#include "convec/pipeline.hpp"

namespace convec {

struct TuneOptions {
  ScheduleSpace space;
  int jobs = 1;
  int top = 8;              // best entries kept verbatim in the report
  bool verify_best = true;  // simulate the winner against the reference
};

struct TuneEntry {
  Schedule sched;
  bool accepted = false;
  RejectReason reason = RejectReason::ShapeMismatch;
  std::string detail;
  Throughput thr;
  i64 instrs = 0;
};

struct TuneReport {
  ConvSpec spec;
  i64 candidates = 0;
  i64 accepted = 0;
  std::map<std::string, i64> rejected_by_reason;
  std::vector<TuneEntry> entries;  // enumeration order
  int best = -1;                   // index into entries, -1 if nothing compiled
  std::uint64_t best_checksum = 0;
  double peak_macs = 0.0;          // machine roofline for this precision
};

// True when a's result should be preferred over b's.  Rate first, then fewer
// instructions, then lexicographically smaller encoding so the winner never
// depends on enumeration partitioning.
bool better_entry(const TuneEntry& a, const TuneEntry& b);

// Exhaustive deterministic search: compiles every enumerated schedule (in
// parallel when jobs > 1 -- results are keyed by candidate index, so the
// report is identical for any job count), picks the best by `better_entry`,
// and optionally verifies it on the simulator against the scalar reference.
TuneReport tune(const ConvSpec& spec, const MachineConfig& mc, const TuneOptions& opt = {});

// One CSV row per candidate in enumeration order: schedule-id (the candidate
// index), arithmetic intensity (MACs per byte of vector-memory traffic),
// MACs/cycle, and status ("accepted" or the rejection reason).
std::string roofline_csv(const TuneReport& report);

}  // namespace convec
