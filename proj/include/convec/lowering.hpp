#pragma once

#include <array>
#include <string>
#include <vector>

#include "convec/schedule.hpp"
#include "convec/tensor.hpp"

namespace convec {

// Affine index expression over the residual output-loop ivs plus the lane id:
//   value = c0 + sum_l iv_coeff[l] * iv_l + lane_coeff * lane
// ivs advance in coordinate units (a residual loop's iv enumerates
// 0, step, 2*step, ...), so coefficients stay per-unit.
struct AffineExpr {
  i64 c0 = 0;
  std::array<i64, 4> iv{};  // indexed by Dim X,Y,K,N
  i64 lane = 0;

  bool operator==(const AffineExpr&) const = default;
  i64 eval(const std::array<i64, 4>& ivs, i64 lane_id) const {
    i64 v = c0 + lane * lane_id;
    for (int i = 0; i < 4; ++i) v += iv[i] * ivs[i];
    return v;
  }
  bool varies() const {
    for (i64 c : iv)
      if (c) return true;
    return false;
  }
};

// A (possibly 1-lane) strided slice of one tensor: an index expression per
// tensor dim, in ConvSpec::tensor_dims order.
struct VectorAccess {
  TensorId tensor = TensorId::Output;
  std::vector<AffineExpr> idx;
  int lane_count = 1;

  bool operator==(const VectorAccess&) const = default;
  bool is_vector() const { return lane_count > 1; }
  const AffineExpr& expr(Dim d) const;
  std::string to_string() const;  // e.g. "I(x+1:x+16, y)"
};

// One logical 1D vector multiply: update += op1 * op2 elementwise per lane.
// op1 reads the weights, op2 the input; exactly one of them carries lanes
// unless the schedule vectorizes a loop both tensors share.
struct TripletRow {
  VectorAccess update, op1, op2;
  bool pad = false;  // multiplies a zero-filled filter column
};

struct ResidualLoop {
  Dim dim;
  i64 trips = 1;
  i64 step = 1;  // coordinate units per iteration
};

struct TripletBody {
  std::vector<ResidualLoop> loops;  // innermost first
  std::vector<TripletRow> rows;
  int lanes = 1;
};

// Unrolls all reduction loops and unroll-jam replicas into straight-line
// rows.  Reduction dims iterate fastest-first by their stride in the input
// layout (a blocked channel dim splits into its tile and tile-count parts),
// which keeps rows that share input windows adjacent.  Replica combos are
// outermost, so each store group's rows stay contiguous.
TripletBody lower(const PaddedSpec& padded, const Schedule& sched,
                  const ResolvedLayout& input_layout);

// Rows sharing a destination slice, in first-appearance order.  All rows of
// a group accumulate into one register before a single final store.
struct StoreGroup {
  VectorAccess update;
  std::vector<TripletRow> rows;
};

struct GroupedBody {
  std::vector<ResidualLoop> loops;
  std::vector<StoreGroup> groups;
  int lanes = 1;
};

GroupedBody group_lazy_stores(const TripletBody& body);

// Direct interpretation of the triplet semantics against canonical tensors;
// used by tests to show lowering preserves the convolution.
TensorData interpret_triplets(const TripletBody& body, const PaddedSpec& padded,
                              const Workload& w);

}  // namespace convec
