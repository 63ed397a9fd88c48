#pragma once

#include <map>
#include <string>
#include <vector>

#include "convec/lowering.hpp"
#include "convec/machine_config.hpp"

namespace convec {

// An access evaluated against its tensor's resolved layout.
//  - lane_offsets: exact element offsets at all-ivs-zero, one per lane
//  - iv_grad: element delta per *iteration* of each residual loop (constant
//    by the affine checks, otherwise the candidate is rejected)
struct LocatedAccess {
  VectorAccess access;
  std::vector<i64> lane_offsets;
  std::array<i64, 4> iv_grad{};  // indexed by Dim X,Y,K,N
  i64 lo = 0, hi = 0;            // footprint [lo, hi) in elements at ivs=0

  std::string key() const;  // structural identity of `access`
};

Fallible<LocatedAccess> locate_access(const VectorAccess& a, const ResolvedLayout& layout,
                                      const std::vector<ResidualLoop>& loops);

// Reuse graph over the distinct loaded accesses of one tensor.  Nodes connect
// when they move together (identical gradients) and their footprints overlap
// or touch; each connected component becomes one or more register windows.
struct ReuseGraph {
  TensorId tensor = TensorId::Input;
  std::vector<LocatedAccess> nodes;  // first-appearance order
  std::vector<std::pair<int, int>> edges;
  std::vector<int> component;        // node -> component id
  int n_components = 0;
};

Fallible<ReuseGraph> build_reuse_graph(TensorId tensor, const std::vector<VectorAccess>& accesses,
                                       const ResolvedLayout& layout,
                                       const std::vector<ResidualLoop>& loops);

// A register-group window: an aligned element span loaded as one unit.
struct Window {
  TensorId tensor = TensorId::Input;
  i64 start = 0;                 // element offset at ivs=0, on the 128-bit grid
  int width_bits = 128;
  std::array<i64, 4> iv_grad{};  // movement shared with its accesses
  // Placement level: 0 = reloaded in the innermost body each iteration,
  // 1..n = loaded once per iteration of that residual loop (counted from the
  // innermost), n_loops+... = program preamble.  Set by the pressure planner.
  int place = 0;
  int first_use = 0;  // row position of first consumer (emission order)
  int last_use = 0;
};

struct Binding {
  int window = -1;
  std::vector<i64> offsets;  // per-lane element offsets inside the window
};

// Where one store group writes: start element + movement, lanes contiguous.
struct StoreTarget {
  i64 start = 0;
  std::array<i64, 4> iv_grad{};
};

struct RegisterPlan {
  std::vector<Window> windows;
  std::map<std::string, Binding> bindings;  // access key -> binding
  std::vector<StoreTarget> stores;          // parallel to GroupedBody::groups
  i64 peak_live_bytes = 0;                  // including hoisted windows
  int preamble_place = 0;                   // == n_loops + 1 sentinel... see place
  // Set when cross-group reuse alone overflows the register file: each store
  // group then reloads every body window it consumes, trading extra loads for
  // live ranges that end at the group boundary.
  bool reload_per_group = false;

  const Binding& binding_of(const VectorAccess& a) const;
};

struct PlanInputs {
  const GroupedBody& body;
  const ResolvedLayout& lay_o;
  const ResolvedLayout& lay_w;
  const ResolvedLayout& lay_i;
  const MachineConfig& mc;
  Precision prec;
};

// Builds reuse graphs for both loaded tensors, coalesces components into
// aligned windows (splitting greedily when a component exceeds the widest
// register), binds every operand, checks store contiguity/alignment, and
// chooses hoist placements under the register-file byte budget.
// When `diagnostics` is non-null, violations are recorded there and planning
// continues best-effort instead of rejecting (used by --force inspection).
Fallible<RegisterPlan> plan_loads(const PlanInputs& in, std::vector<Rejection>* diagnostics = nullptr);

}  // namespace convec
