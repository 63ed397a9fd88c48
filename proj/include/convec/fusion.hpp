#pragma once

#include <vector>

#include "convec/reuse.hpp"

namespace convec {

// An affine operand selector: column j of lane i reads register-group
// element  base + i*lane_stride + j*col_stride.
struct SelectPattern {
  i64 base = 0;
  i64 lane_stride = 0;
  i64 col_stride = 0;

  bool operator==(const SelectPattern&) const = default;
  i64 at(int lane, int col) const { return base + lane * lane_stride + col * col_stride; }
};

// One 2D vector instruction: every lane sums `cols` products into its
// accumulator element.  `first` clears the accumulator (multiply), later ops
// accumulate (multiply-add).  real_cols excludes zero filler filter columns.
struct FusedOp {
  int w_window = -1;
  int i_window = -1;
  SelectPattern w_sel, i_sel;
  bool first = false;
  int cols = 0;
  int real_cols = 0;
};

struct FusedGroup {
  int store = -1;  // index into RegisterPlan::stores / GroupedBody::groups
  std::vector<FusedOp> ops;
};

// Solves base/lane_stride/col_stride from exact per-column, per-lane element
// offsets (offs[col][lane]); rejects offsets that are not affine, that leave
// [0, window_elems), or that violate the selection-granularity constraint
// (narrow elements share a selection slot with their neighbour, so each lane
// pair may draw from at most `cols` distinct slots).
Fallible<SelectPattern> solve_select(const std::vector<std::vector<i64>>& offs, i64 window_elems,
                                     Precision prec, int select_granularity_bits);

// Packs each store group's rows into 2D ops: maximal runs of rows whose
// operands read the same (weights window, input window) pair are cut into
// column-count chunks.  Runs that do not divide evenly are rejected
// (FusionArity) unless diagnostics are collected, in which case a short
// trailing op is emitted best-effort.
Fallible<std::vector<FusedGroup>> fuse_rows(const GroupedBody& body, const RegisterPlan& plan,
                                            const MachineShape& shape, Precision prec,
                                            int select_granularity_bits,
                                            std::vector<Rejection>* diagnostics = nullptr);

}  // namespace convec
