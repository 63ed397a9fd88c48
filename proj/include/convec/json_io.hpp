#pragma once

#include <string>

#include "convec/autotune.hpp"

namespace convec {

// JSON forms of the user-facing objects.  All *_from_json functions throw
// SpecError with a readable message on malformed input.

ConvSpec spec_from_json(const std::string& text);
std::string spec_to_json(const ConvSpec& spec);

Schedule schedule_from_json(const std::string& text);
std::string schedule_to_json(const Schedule& sched);

ScheduleSpace space_from_json(const std::string& text, const ConvSpec& spec,
                              const MachineConfig& mc);

MachineConfig machine_from_json(const std::string& text);  // overrides onto defaults

// Canonical tuning report: stable key order, no timing or host information,
// so re-runs (any job count) produce byte-identical bytes.
std::string report_to_json(const TuneReport& report);

// Static per-candidate summary used by `compile --stats`.
std::string compile_stats_json(const CompileResult& cr, const RunResult* run);

}  // namespace convec
