#include "convec/layout.hpp"

#include <sstream>

namespace convec {

DataLayout DataLayout::canonical(TensorId t) {
  DataLayout l;
  for (Dim d : ConvSpec::tensor_dims(t)) l.terms.push_back({d, 0, 1});
  return l;
}

std::string DataLayout::to_string() const {
  std::ostringstream os;
  bool first = true;
  for (const auto& t : terms) {
    if (!first) os << ' ';
    first = false;
    if (t.block > 0)
      os << '(' << dim_char(t.dim) << ':' << t.block << ')';
    else
      os << dim_char(t.dim);
    if (t.pad_multiple > 1) os << '~' << t.pad_multiple;
  }
  return os.str();
}

ResolvedLayout resolve_layout(const DataLayout& layout, const ConvSpec& spec, TensorId tensor) {
  const auto& tdims = ConvSpec::tensor_dims(tensor);
  auto has_dim = [&](Dim d) {
    for (Dim td : tdims)
      if (td == d) return true;
    return false;
  };
  auto fail = [&](const std::string& m) {
    throw SpecError("layout '" + layout.to_string() + "' for " + tensor_name(tensor) + ": " + m);
  };

  // Pass 1: find each dim's block size and check term multiplicity.
  std::array<i64, 8> block{};
  std::array<int, 8> n_full{}, n_block{};
  for (const auto& t : layout.terms) {
    if (!has_dim(t.dim)) fail(std::string("tensor has no dim ") + dim_char(t.dim));
    if (t.block < 0 || t.pad_multiple < 1) fail("negative block or pad");
    if (t.block > 0) {
      if (++n_block[static_cast<int>(t.dim)] > 1) fail("dim blocked twice");
      block[static_cast<int>(t.dim)] = t.block;
    } else if (++n_full[static_cast<int>(t.dim)] > 1) {
      fail("dim listed twice");
    }
  }
  for (Dim d : tdims)
    if (n_full[static_cast<int>(d)] + n_block[static_cast<int>(d)] == 0)
      fail(std::string("dim ") + dim_char(d) + " missing");

  ResolvedLayout r;
  r.tensor = tensor;
  r.terms.resize(layout.terms.size());

  // Pass 2: walk innermost -> outermost accumulating strides.
  i64 stride = 1;
  std::array<bool, 8> seen_block{};
  for (int i = static_cast<int>(layout.terms.size()) - 1; i >= 0; --i) {
    const LayoutTerm& t = layout.terms[i];
    const int d = static_cast<int>(t.dim);
    const i64 extent = spec.extent(tensor, t.dim);
    auto& dst = r.terms[i];
    dst.dim = t.dim;
    dst.is_block = t.block > 0;
    dst.stride = stride;
    if (t.block > 0) {
      seen_block[d] = true;
      dst.index_extent = t.block;
      r.dims[d].block = t.block;
      r.dims[d].block_stride = stride;
      if (n_full[d] == 0 && t.block < extent) fail("lone block term smaller than the dim extent");
    } else {
      // The full term must sit outside its own block term.
      if (block[d] > 0 && !seen_block[d]) fail("full term inside its block term");
      dst.index_extent = block[d] > 0 ? ceil_div(extent, block[d]) : extent;
      r.dims[d].full_stride = stride;
    }
    dst.storage_extent = round_up(dst.index_extent, t.pad_multiple);
    stride *= dst.storage_extent;
  }
  r.volume = stride;
  for (Dim d : tdims) {
    auto& di = r.dims[static_cast<int>(d)];
    di.extent = spec.extent(tensor, d);
    if (di.block == 0) di.block = 1;
    if (di.block_stride == 0 && di.full_stride == 0) di.block = 1;  // unreachable; keep sane
  }
  return r;
}

}  // namespace convec
