#pragma once

#include <string>
#include <vector>

#include "convec/conv_spec.hpp"

namespace convec {

// One term of a data layout.  block == 0 means "the full remaining extent of
// this dim"; block > 0 lays out a tile of that many consecutive coordinates.
// pad_multiple rounds the term's *storage* extent up, leaving unreadable
// holes; padding buys address alignment at the cost of footprint.
struct LayoutTerm {
  Dim dim;
  i64 block = 0;
  i64 pad_multiple = 1;
};

// An ordered list of terms, outermost first.  Example (input tensor):
//   {(c, block C/2 side), (y), (x), (c, block 2)}   ~   "(C/2) Y' X' (2)"
// lays pairs of channels innermost.  Every dim of the tensor must appear in
// at most one full and at most one block term, the full term outermost.
struct DataLayout {
  std::vector<LayoutTerm> terms;

  static DataLayout canonical(TensorId t);  // tensor_dims order, no blocking
  std::string to_string() const;
};

// A layout bound to concrete extents.  Address mapping:
//   addr(coords) = sum_d (c_d % b_d) * block_stride_d + (c_d / b_d) * full_stride_d
// which is injective over the logical extents and lands inside
// [0, volume) with holes exactly where storage padding was requested.
struct ResolvedLayout {
  struct DimInfo {
    i64 extent = 1;        // logical extent
    i64 block = 1;         // 1 when the dim has no block term
    i64 block_stride = 0;  // 0 when absent
    i64 full_stride = 0;   // 0 when absent
  };
  struct TermInfo {  // outermost-first, mirrors the DataLayout
    Dim dim;
    bool is_block = false;
    i64 index_extent = 1;    // range of this term's index
    i64 storage_extent = 1;  // after pad_multiple
    i64 stride = 1;
  };

  TensorId tensor = TensorId::Output;
  std::vector<TermInfo> terms;
  std::array<DimInfo, 8> dims{};  // indexed by Dim
  i64 volume = 0;                 // padded element count

  i64 address(const std::array<i64, 8>& coords) const {
    i64 a = 0;
    for (int d = 0; d < 8; ++d) {
      const DimInfo& di = dims[d];
      if (di.block_stride == 0 && di.full_stride == 0) continue;
      a += (coords[d] % di.block) * di.block_stride + (coords[d] / di.block) * di.full_stride;
    }
    return a;
  }

  const DimInfo& dim(Dim d) const { return dims[static_cast<int>(d)]; }
};

// Binds a layout to the extents of `tensor` under `spec`.  Throws SpecError
// if the layout does not cover the tensor dims or blocks are malformed.
ResolvedLayout resolve_layout(const DataLayout& layout, const ConvSpec& spec, TensorId tensor);

}  // namespace convec
