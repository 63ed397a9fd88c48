#pragma once

#include "convec/codegen.hpp"
#include "convec/lowering.hpp"
#include "convec/machine.hpp"
#include "convec/oracle.hpp"

namespace convec {

struct CompileOptions {
  bool enforce = true;        // false: collect violations, emit best-effort anyway
  i64 max_program_ops = 2048; // program-memory budget, static instructions
};

// Everything the pipeline derives for one (spec, schedule) candidate; kept
// around for dumps, reports and the simulator.
struct CompileResult {
  ConvSpec spec;  // original extents
  PaddedSpec padded;
  Schedule sched;
  ResolvedLayout lay_o, lay_w, lay_i;
  TripletBody triplets;
  GroupedBody grouped;
  RegisterPlan plan;
  std::vector<FusedGroup> fused;
  VProgram program;
  Throughput thr;
  std::vector<Rejection> diagnostics;  // only populated when !enforce
};

// spec+schedule -> program.  Structural impossibilities come back as
// rejections; malformed inputs (bad layouts, impossible specs) throw
// SpecError.  With enforce off, every stage records its complaint in
// `diagnostics` and continues so the broken candidate can be inspected.
Fallible<CompileResult> compile_schedule(const ConvSpec& spec, const Schedule& sched,
                                         const MachineConfig& mc, const CompileOptions& opt = {});

struct RunResult {
  SimStats stats;
  TensorData output;
  std::uint64_t checksum = 0;
  i64 oracle_macs = 0;
};

// Validates, materializes, runs and cross-checks a compiled candidate
// against the scalar reference.  Any divergence (or a validator violation in
// enforce mode) throws InternalMiscompile: a compiled candidate must be
// correct, full stop.
RunResult run_compiled(const CompileResult& cr, const Workload& w, const MachineConfig& mc,
                       bool check_oracle = true);

}  // namespace convec
