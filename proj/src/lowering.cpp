#include "convec/lowering.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

namespace convec {

const AffineExpr& VectorAccess::expr(Dim d) const {
  const auto& dims = ConvSpec::tensor_dims(tensor);
  for (std::size_t i = 0; i < dims.size(); ++i)
    if (dims[i] == d) return idx[i];
  throw SpecError(std::string("access has no dim ") + dim_char(d));
}

namespace {

std::string scalar_str(const AffineExpr& e, i64 extra) {
  std::ostringstream os;
  bool any = false;
  for (int i = 0; i < 4; ++i)
    if (e.iv[i]) {
      if (any) os << '+';
      if (e.iv[i] != 1) os << e.iv[i] << '*';
      os << dim_char(static_cast<Dim>(i));
      any = true;
    }
  const i64 c = e.c0 + extra;
  if (c > 0)
    os << (any ? "+" : "") << c;
  else if (c < 0)
    os << c;
  else if (!any)
    os << 0;
  return os.str();
}

std::string expr_str(const AffineExpr& e, int lane_count) {
  if (e.lane && lane_count > 1)
    return scalar_str(e, 0) + ":" + scalar_str(e, e.lane * (lane_count - 1));
  return scalar_str(e, 0);
}

}  // namespace

std::string VectorAccess::to_string() const {
  std::ostringstream os;
  os << tensor_letter(tensor) << '(';
  const auto& dims = ConvSpec::tensor_dims(tensor);
  // Print innermost-canonical (x/r first) for readability; width and height
  // always show, other dims only when they carry anything.
  bool first = true;
  for (int i = static_cast<int>(dims.size()) - 1; i >= 0; --i) {
    const AffineExpr& e = idx[i];
    const bool core = dims[i] == Dim::X || dims[i] == Dim::Y || dims[i] == Dim::R || dims[i] == Dim::S;
    if (!core && !e.varies() && !e.lane && e.c0 == 0) continue;
    if (!first) os << ", ";
    first = false;
    os << expr_str(e, e.lane ? lane_count : 1);
  }
  os << ')';
  return os.str();
}

namespace {

// One mixed-radix axis of the reduction iteration.
struct RedAxis {
  Dim dim;       // R,S,T,C
  i64 divisor;   // contribution = value * divisor
  i64 extent;
  i64 stride;    // input-layout stride, for ordering
  int rank;
};

std::vector<RedAxis> reduction_axes(const ConvSpec& spec, const ResolvedLayout& in) {
  std::vector<RedAxis> axes;
  const Dim red[4] = {Dim::R, Dim::S, Dim::T, Dim::C};
  const Dim in_dim[4] = {Dim::X, Dim::Y, Dim::T, Dim::C};
  const i64 extents[4] = {spec.flt_w, spec.flt_h, spec.flt_d, spec.in_ch};
  for (int i = 0; i < 4; ++i) {
    if (extents[i] <= 1) continue;
    const auto& di = in.dim(in_dim[i]);
    if (red[i] == Dim::C && di.block > 1 && extents[i] % di.block == 0 && di.full_stride > 0) {
      axes.push_back({Dim::C, 1, di.block, di.block_stride, i});
      axes.push_back({Dim::C, di.block, extents[i] / di.block, di.full_stride, i});
    } else {
      const i64 stride = di.block > 1 ? di.block_stride : di.full_stride;
      axes.push_back({red[i], 1, extents[i], stride, i});
    }
  }
  std::stable_sort(axes.begin(), axes.end(), [](const RedAxis& a, const RedAxis& b) {
    if (a.stride != b.stride) return a.stride < b.stride;
    if (a.rank != b.rank) return a.rank < b.rank;
    return a.divisor < b.divisor;
  });
  return axes;
}

int dim_pos(TensorId t, Dim d) {
  const auto& dims = ConvSpec::tensor_dims(t);
  for (std::size_t i = 0; i < dims.size(); ++i)
    if (dims[i] == d) return static_cast<int>(i);
  return -1;
}

}  // namespace

TripletBody lower(const PaddedSpec& padded, const Schedule& sched,
                  const ResolvedLayout& input_layout) {
  const ConvSpec& sp = padded.spec;
  TripletBody body;
  body.lanes = sched.lanes;

  for (Dim d : sched.loop_order) {
    const i64 step = i64(sched.uj_of(d)) * (d == sched.vector_loop ? sched.lanes : 1);
    const i64 trips = sp.extent(TensorId::Output, d) / step;
    if (trips > 1) body.loops.push_back({d, trips, step});
  }

  // Replica dims: reversed loop order first (outermost), then any unrolled
  // dims whose loop vanished entirely.
  std::vector<Dim> replica_dims;
  for (auto it = sched.loop_order.rbegin(); it != sched.loop_order.rend(); ++it)
    replica_dims.push_back(*it);
  for (Dim d : {Dim::X, Dim::Y, Dim::K, Dim::N})
    if (std::find(replica_dims.begin(), replica_dims.end(), d) == replica_dims.end())
      replica_dims.push_back(d);

  const auto axes = reduction_axes(sp, input_layout);

  // Per-output-dim expressions shared by all rows of a replica.  The iv term
  // only appears when the dim actually has residual iterations.
  std::array<bool, 4> has_iv{};
  for (const ResidualLoop& L : body.loops) has_iv[static_cast<int>(L.dim)] = true;
  auto out_expr = [&](Dim d, const std::array<i64, 4>& reps) {
    AffineExpr e;
    const int di = static_cast<int>(d);
    e.c0 = reps[di] * (d == sched.vector_loop ? sched.lanes : 1);
    if (has_iv[di]) e.iv[di] = 1;
    if (d == sched.vector_loop) e.lane = 1;
    return e;
  };

  std::array<i64, 4> reps{};  // replica index per output dim
  auto emit_rows = [&]() {
    const AffineExpr ox = out_expr(Dim::X, reps), oy = out_expr(Dim::Y, reps),
                     ok = out_expr(Dim::K, reps), on = out_expr(Dim::N, reps);
    VectorAccess upd;
    upd.tensor = TensorId::Output;
    upd.lane_count = sched.lanes;
    upd.idx.resize(4);
    upd.idx[dim_pos(TensorId::Output, Dim::N)] = on;
    upd.idx[dim_pos(TensorId::Output, Dim::K)] = ok;
    upd.idx[dim_pos(TensorId::Output, Dim::Y)] = oy;
    upd.idx[dim_pos(TensorId::Output, Dim::X)] = ox;

    // Mixed-radix sweep of the reduction axes, fastest axis first.
    std::vector<i64> val(axes.size(), 0);
    while (true) {
      std::array<i64, 4> red{};  // r,s,t,c
      for (std::size_t i = 0; i < axes.size(); ++i) {
        const int slot = axes[i].dim == Dim::R   ? 0
                         : axes[i].dim == Dim::S ? 1
                         : axes[i].dim == Dim::T ? 2
                                                 : 3;
        red[slot] += val[i] * axes[i].divisor;
      }
      const i64 r = red[0], s = red[1], t = red[2], c = red[3];

      TripletRow row;
      row.pad = padded.is_pad_col(r);
      row.update = upd;

      VectorAccess& w = row.op1;
      w.tensor = TensorId::Weights;
      w.idx.resize(5);
      w.idx[dim_pos(TensorId::Weights, Dim::K)] = ok;
      w.idx[dim_pos(TensorId::Weights, Dim::C)].c0 = c;
      w.idx[dim_pos(TensorId::Weights, Dim::T)].c0 = t;
      w.idx[dim_pos(TensorId::Weights, Dim::S)].c0 = s;
      w.idx[dim_pos(TensorId::Weights, Dim::R)].c0 = r;
      w.lane_count = ok.lane ? sched.lanes : 1;

      VectorAccess& in = row.op2;
      in.tensor = TensorId::Input;
      in.idx.resize(5);
      const i64 f = sp.stride;
      AffineExpr ix = ox, iy = oy;
      ix.c0 = ix.c0 * f + r;
      ix.iv[static_cast<int>(Dim::X)] *= f;
      ix.lane *= f;
      iy.c0 = iy.c0 * f + s;
      iy.iv[static_cast<int>(Dim::Y)] *= f;
      iy.lane *= f;
      in.idx[dim_pos(TensorId::Input, Dim::N)] = on;
      in.idx[dim_pos(TensorId::Input, Dim::T)].c0 = t;
      in.idx[dim_pos(TensorId::Input, Dim::Y)] = iy;
      in.idx[dim_pos(TensorId::Input, Dim::X)] = ix;
      if (sp.variant == Variant::DS)
        in.idx[dim_pos(TensorId::Input, Dim::C)] = ok;
      else
        in.idx[dim_pos(TensorId::Input, Dim::C)].c0 = c;
      bool lanes_in = false;
      for (const auto& e : in.idx) lanes_in |= e.lane != 0;
      in.lane_count = lanes_in ? sched.lanes : 1;

      body.rows.push_back(std::move(row));

      std::size_t p = 0;
      for (; p < val.size(); ++p) {
        if (++val[p] < axes[p].extent) break;
        val[p] = 0;
      }
      if (p == val.size()) break;
    }
  };

  // Replica combos, outermost dim slowest.
  std::function<void(std::size_t)> walk = [&](std::size_t i) {
    if (i == replica_dims.size()) {
      emit_rows();
      return;
    }
    const Dim d = replica_dims[i];
    for (int j = 0; j < sched.uj_of(d); ++j) {
      reps[static_cast<int>(d)] = j;
      walk(i + 1);
    }
  };
  walk(0);
  return body;
}

GroupedBody group_lazy_stores(const TripletBody& body) {
  GroupedBody g;
  g.loops = body.loops;
  g.lanes = body.lanes;
  for (const TripletRow& row : body.rows) {
    StoreGroup* grp = nullptr;
    for (auto& existing : g.groups)
      if (existing.update == row.update) {
        grp = &existing;
        break;
      }
    if (!grp) {
      g.groups.push_back({row.update, {}});
      grp = &g.groups.back();
    }
    grp->rows.push_back(row);
  }
  return g;
}

TensorData interpret_triplets(const TripletBody& body, const PaddedSpec& padded,
                              const Workload& w) {
  const ConvSpec& sp = padded.spec;
  TensorData out;
  out.precision = sp.precision;
  for (Dim d : ConvSpec::tensor_dims(TensorId::Output))
    out.dims.push_back(sp.extent(TensorId::Output, d));
  std::vector<i64> acc(out.volume(), 0);

  auto coords_of = [&](const VectorAccess& a, const std::array<i64, 4>& ivs, i64 lane) {
    std::vector<i64> c(a.idx.size());
    for (std::size_t i = 0; i < a.idx.size(); ++i) c[i] = a.idx[i].eval(ivs, lane);
    return c;
  };
  auto weight_at = [&](const std::vector<i64>& c) -> i64 {
    // Canonical dims: k,c,t,s,r.  Padded filter columns read as zero.
    if (c[4] >= padded.orig_flt_w) return 0;
    return w.weights.at(c);
  };

  // Walk the residual loops (innermost first in the list).
  std::function<void(int, std::array<i64, 4>&)> run = [&](int level, std::array<i64, 4>& ivs) {
    if (level < 0) {
      for (const TripletRow& row : body.rows) {
        // Pad rows multiply a zero weight column; skipping them also keeps
        // the x index inside the unpadded input tensor.
        if (row.pad) continue;
        for (i64 lane = 0; lane < (row.update.is_vector() ? body.lanes : 1); ++lane) {
          const auto uc = coords_of(row.update, ivs, lane);
          const auto wc = coords_of(row.op1, ivs, row.op1.is_vector() ? lane : 0);
          const auto ic = coords_of(row.op2, ivs, row.op2.is_vector() ? lane : 0);
          acc[out.flat(uc)] += weight_at(wc) * i64(w.input.at(ic));
        }
      }
      return;
    }
    const ResidualLoop& L = body.loops[level];
    for (i64 i = 0; i < L.trips; ++i) {
      ivs[static_cast<int>(L.dim)] = i * L.step;
      run(level - 1, ivs);
    }
    ivs[static_cast<int>(L.dim)] = 0;
  };
  std::array<i64, 4> ivs{};
  run(static_cast<int>(body.loops.size()) - 1, ivs);

  out.values.resize(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out.values[i] = truncate_to(sp.precision, acc[i]);
  return out;
}

}  // namespace convec
