#pragma once

#include <map>
#include <string>
#include <vector>

#include "convec/layout.hpp"
#include "convec/machine_config.hpp"

namespace convec {

enum class PadFilter { None, PadToEvenColumns };

// A fully-specified mapping decision for one convolution:
//  - vector_loop: the output loop whose iterations become SIMD lanes
//  - uj: unroll-and-jam factor per output loop (replicates the body)
//  - loop_order: the residual (non-unrolled) output loops, innermost first;
//    loops left out must have a single residual iteration
//  - layouts: data layout per tensor
//  - pad_filter: whether the filter may gain zero columns so fusion runs
//    divide the machine's column count
// Reduction loops (r,s,t,c) are always fully unrolled: every output element
// is produced by exactly one straight-line block, so stores are final.
struct Schedule {
  std::vector<Dim> loop_order;  // innermost first
  Dim vector_loop = Dim::X;
  int lanes = 16;               // must match the machine shape for the precision
  std::map<Dim, int> uj;        // absent dims default to 1
  DataLayout layout_output;
  DataLayout layout_weights;
  DataLayout layout_input;
  PadFilter pad_filter = PadFilter::PadToEvenColumns;

  int uj_of(Dim d) const {
    auto it = uj.find(d);
    return it == uj.end() ? 1 : it->second;
  }
  const DataLayout& layout(TensorId t) const {
    switch (t) {
      case TensorId::Output: return layout_output;
      case TensorId::Weights: return layout_weights;
      default: return layout_input;
    }
  }
  DataLayout& layout(TensorId t) {
    switch (t) {
      case TensorId::Output: return layout_output;
      case TensorId::Weights: return layout_weights;
      default: return layout_input;
    }
  }

  // Stable, human-readable encoding used for deterministic tie-breaks and in
  // reports, e.g. "vec=x order=xy uj[x]=1 uj[y]=2 lay[O]=n k y x ...".
  std::string encode() const;

  // Structural checks against a spec + machine (divisibility, lane count,
  // layout well-formedness).  Returns a rejection instead of throwing so the
  // tuner can record hand-written but unusable schedules.
  std::optional<Rejection> check(const ConvSpec& spec, const MachineConfig& mc) const;
};

// Filter padding: when fusion will run along the filter width, grow flt_w to
// a multiple of the column count; the extra weight columns are zero.
struct PaddedSpec {
  ConvSpec spec;       // flt_w possibly grown
  int orig_flt_w = 0;  // weights with r >= orig_flt_w are zero filler
  bool is_pad_col(i64 r) const { return r >= orig_flt_w; }
};

// Decides along which reduction dim fusion will run: the reduction dim with
// the smallest stride in the input layout (ties broken r,s,t,c), skipping
// extent-1 dims.  This mirrors how lowering orders the unrolled body.
Dim fusion_axis(const ConvSpec& spec, const ResolvedLayout& input_layout);

PaddedSpec apply_padding(const ConvSpec& spec, const Schedule& sched, const MachineConfig& mc);

// ---------------------------------------------------------------------------
// Tuning space.

struct ScheduleSpace {
  std::map<Dim, std::vector<int>> uj_candidates;     // default {1,2,4,8} on x,y,k
  std::vector<std::vector<Dim>> loop_orders;         // default: perms of active loops
  std::vector<Dim> vector_loops;                     // default: active output loops
  std::map<TensorId, std::vector<DataLayout>> layout_candidates;  // default: generated
  int max_program_ops = 2048;                        // program-memory proxy
};

// Deterministic exhaustive enumeration of the pruned space:
//   (a) reduction loops are always fully unrolled,
//   (b) uj factors divide their loop extents,
//   (c) the vector extent is >= lanes and divisible by lanes*uj,
//   (d) the unrolled body size estimate fits max_program_ops.
// Layout candidates are completed with the storage padding required to keep
// every residual-loop address step on the 128-bit grid (see README).
std::vector<Schedule> enumerate_space(const ConvSpec& spec, const ScheduleSpace& space,
                                      const MachineConfig& mc);

// Default layout candidates for a tensor: canonical order plus, for multi
// column shapes, variants that tile `c` by the column count and keep filter
// rows in separate aligned slots.  Used when a space file omits layouts.
std::vector<DataLayout> default_layout_candidates(const ConvSpec& spec, TensorId t,
                                                  const MachineConfig& mc);

// Output loops with extent > 1 (candidates for ordering/vectorizing).
std::vector<Dim> active_output_dims(const ConvSpec& spec);

// Adds the minimal pad_multiple to layout terms so that every address
// gradient a residual loop induces stays a multiple of the 128-bit grid.
// `step_of` lists, per output loop, the coordinate step of one residual
// iteration (0 when the loop is absent/fully unrolled).
DataLayout pad_layout_for_alignment(const DataLayout& layout, const ConvSpec& spec, TensorId t,
                                    const Schedule& sched, const MachineConfig& mc);

}  // namespace convec
