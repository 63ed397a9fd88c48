#include "convec/schedule.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

namespace convec {

std::string Schedule::encode() const {
  std::ostringstream os;
  os << "vec=" << dim_char(vector_loop) << " lanes=" << lanes << " order=";
  for (Dim d : loop_order) os << dim_char(d);
  os << " uj=";
  for (Dim d : {Dim::X, Dim::Y, Dim::K, Dim::N})
    if (uj_of(d) != 1) os << dim_char(d) << uj_of(d);
  os << " pad=" << (pad_filter == PadFilter::PadToEvenColumns ? "cols" : "none");
  os << " O=[" << layout_output.to_string() << "] W=[" << layout_weights.to_string()
     << "] I=[" << layout_input.to_string() << ']';
  return os.str();
}

namespace {

// Residual-loop step in coordinate units: the vector loop advances by a full
// lane block per iteration, everything else by its unroll factor.
i64 loop_step(const Schedule& s, Dim d) {
  return i64(s.uj_of(d)) * (d == s.vector_loop ? s.lanes : 1);
}

i64 residual_trips(const ConvSpec& spec, const Schedule& s, Dim d) {
  return spec.extent(TensorId::Output, d) / loop_step(s, d);
}

}  // namespace

std::optional<Rejection> Schedule::check(const ConvSpec& spec, const MachineConfig& mc) const {
  const MachineShape& sh = mc.shape(spec.precision);
  if (lanes != sh.lanes)
    return Rejection{RejectReason::ShapeMismatch,
                     "schedule lanes " + std::to_string(lanes) + " != machine lanes " +
                         std::to_string(sh.lanes)};
  if (!is_output_dim(vector_loop))
    return Rejection{RejectReason::ShapeMismatch, "vector loop must be an output loop"};

  std::set<Dim> seen;
  for (Dim d : loop_order) {
    if (!is_output_dim(d))
      return Rejection{RejectReason::ShapeMismatch, "loop order may contain output loops only"};
    if (!seen.insert(d).second)
      return Rejection{RejectReason::ShapeMismatch, "loop order repeats a dim"};
  }
  for (auto [d, f] : uj) {
    if (!is_output_dim(d) || f < 1)
      return Rejection{RejectReason::ShapeMismatch, "bad unroll-and-jam factor"};
  }

  if (spec.extent(TensorId::Output, vector_loop) < lanes)
    return Rejection{RejectReason::ShapeMismatch, "vector loop shorter than the lane count"};
  for (Dim d : {Dim::X, Dim::Y, Dim::K, Dim::N}) {
    const i64 extent = spec.extent(TensorId::Output, d);
    const i64 step = loop_step(*this, d);
    if (extent % step != 0)
      return Rejection{RejectReason::ShapeMismatch,
                       std::string("extent of ") + dim_char(d) + " not divisible by its step"};
    if (extent / step > 1 && !seen.count(d))
      return Rejection{RejectReason::ShapeMismatch,
                       std::string("loop ") + dim_char(d) + " has residual iterations but is not ordered"};
  }
  return std::nullopt;
}

Dim fusion_axis(const ConvSpec& spec, const ResolvedLayout& input_layout) {
  struct Cand {
    i64 stride;
    int rank;
    Dim dim;
  };
  std::vector<Cand> cands;
  const Dim red[4] = {Dim::R, Dim::S, Dim::T, Dim::C};
  const Dim in_dim[4] = {Dim::X, Dim::Y, Dim::T, Dim::C};
  const i64 extents[4] = {spec.flt_w, spec.flt_h, spec.flt_d, spec.in_ch};
  for (int i = 0; i < 4; ++i) {
    if (extents[i] <= 1) continue;
    const auto& di = input_layout.dim(in_dim[i]);
    // A unit coordinate step moves through the block term when one exists.
    const i64 stride = di.block > 1 ? di.block_stride : di.full_stride;
    cands.push_back({stride, i, red[i]});
  }
  if (cands.empty()) return Dim::R;
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    return a.stride != b.stride ? a.stride < b.stride : a.rank < b.rank;
  });
  return cands.front().dim;
}

PaddedSpec apply_padding(const ConvSpec& spec, const Schedule& sched, const MachineConfig& mc) {
  PaddedSpec p{spec, spec.flt_w};
  const int cols = mc.shape(spec.precision).columns;
  if (cols <= 1 || sched.pad_filter == PadFilter::None) return p;
  const ResolvedLayout in = resolve_layout(sched.layout_input, spec, TensorId::Input);
  if (fusion_axis(spec, in) != Dim::R) return p;  // fusion runs along channels etc.
  p.spec.flt_w = static_cast<int>(round_up(spec.flt_w, cols));
  return p;
}

std::vector<Dim> active_output_dims(const ConvSpec& spec) {
  std::vector<Dim> v;
  for (Dim d : {Dim::X, Dim::Y, Dim::K, Dim::N})
    if (spec.extent(TensorId::Output, d) > 1) v.push_back(d);
  return v;
}

// ---------------------------------------------------------------------------
// Alignment padding.

namespace {

// Coordinate movements of tensor dims induced by the schedule.  For loads the
// constraint is the per-residual-iteration step (window starts then stay on
// the alignment grid); the output tensor is stored at exact addresses, so
// every unit movement (including unroll-jam replicas) must stay aligned.
struct Movement {
  Dim dim;       // tensor dim being moved
  i64 step;      // coordinate delta that must map to an aligned address delta
};

std::vector<Movement> movements_for(const ConvSpec& spec, const Schedule& s, TensorId t) {
  std::vector<Movement> mv;
  auto trips = [&](Dim d) { return residual_trips(spec, s, d); };
  auto replicas = [&](Dim d) { return s.uj_of(d); };
  switch (t) {
    case TensorId::Output:
      for (Dim d : {Dim::Y, Dim::K, Dim::N, Dim::X}) {
        if (d == s.vector_loop) continue;  // lane dim handled by the store-contiguity rule
        if (trips(d) > 1 || replicas(d) > 1) mv.push_back({d, 1});
      }
      break;
    case TensorId::Weights:
      if (trips(Dim::K) > 1) mv.push_back({Dim::K, loop_step(s, Dim::K)});
      break;
    case TensorId::Input: {
      const i64 f = spec.stride;
      if (trips(Dim::X) > 1) mv.push_back({Dim::X, f * loop_step(s, Dim::X)});
      if (trips(Dim::Y) > 1) mv.push_back({Dim::Y, f * loop_step(s, Dim::Y)});
      if (trips(Dim::N) > 1) mv.push_back({Dim::N, loop_step(s, Dim::N)});
      if (spec.variant == Variant::DS && trips(Dim::K) > 1)
        mv.push_back({Dim::C, loop_step(s, Dim::K)});
      break;
    }
  }
  return mv;
}

}  // namespace

DataLayout pad_layout_for_alignment(const DataLayout& layout, const ConvSpec& spec, TensorId t,
                                    const Schedule& sched, const MachineConfig& mc) {
  DataLayout out = layout;
  const i64 eb = elem_bytes(spec.precision);
  const i64 grid = mc.alignment_bytes();
  const i64 mod = grid / std::gcd(grid, eb);  // element-count modulus for alignment
  if (mod == 1) return out;
  const auto moves = movements_for(spec, sched, t);

  // Iterate: each fix pads the term directly inside the violated full term,
  // which changes outer strides, so re-resolve until stable.
  for (int pass = 0; pass < 16; ++pass) {
    ResolvedLayout r = resolve_layout(out, spec, t);
    bool changed = false;
    for (const Movement& m : moves) {
      const auto& di = r.dim(m.dim);
      if (di.full_stride == 0) continue;          // lone block term: constant-bounded, no wrap
      if (m.step % di.block != 0) continue;       // non-affine; left for compile-time rejection
      const i64 grad = (m.step / di.block) * di.full_stride;
      if (grad % mod == 0) continue;
      // Locate this dim's full term and its inner neighbour.
      int term_idx = -1;
      for (std::size_t i = 0; i < r.terms.size(); ++i)
        if (r.terms[i].dim == m.dim && !r.terms[i].is_block) term_idx = static_cast<int>(i);
      if (term_idx < 0 || term_idx + 1 >= static_cast<int>(r.terms.size())) continue;  // innermost: unfixable
      const auto& inner = r.terms[term_idx + 1];
      // full_stride = inner.storage_extent * inner.stride; choose the smallest
      // storage multiple that makes the whole gradient land on the grid.
      const i64 coeff = (m.step / di.block) % mod;
      const i64 q = inner.stride % mod;
      const i64 needed = mod / std::gcd(mod, (coeff * q) % mod == 0 ? mod : (coeff * q) % mod);
      if (needed <= 1) continue;
      auto& pad = out.terms[term_idx + 1].pad_multiple;
      const i64 lcm = std::lcm(pad, needed);
      if (lcm != pad) {
        pad = lcm;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layout candidates and space enumeration.

std::vector<DataLayout> default_layout_candidates(const ConvSpec& spec, TensorId t,
                                                  const MachineConfig& mc) {
  const MachineShape& sh = mc.shape(spec.precision);
  const i64 mod = mc.alignment_bytes() / std::gcd<i64>(mc.alignment_bytes(), elem_bytes(spec.precision));
  std::vector<DataLayout> v;
  const DataLayout canon = DataLayout::canonical(t);
  v.push_back(canon);

  auto with_block = [&](Dim d, i64 b) {
    DataLayout l = canon;
    l.terms.push_back({d, b, 1});
    return l;
  };

  switch (t) {
    case TensorId::Output:
      if (spec.out_ch > 1) {
        // k innermost: contiguous lanes when vectorizing over channels.
        DataLayout l;
        l.terms = {{Dim::N, 0, 1}, {Dim::Y, 0, 1}, {Dim::X, 0, 1}, {Dim::K, 0, 1}};
        v.push_back(l);
      }
      break;
    case TensorId::Weights: {
      // Filter rows in separate aligned slots: breaks reuse chains between
      // rows so the planner builds small windows (lower register pressure).
      DataLayout padded = canon;
      padded.terms.back().pad_multiple = mod;
      if (mod > 1 && spec.flt_w % mod != 0) v.push_back(padded);
      if (sh.columns > 1 && spec.in_ch % sh.columns == 0 && spec.in_ch > 1)
        v.push_back(with_block(Dim::C, sh.columns));
      if (spec.out_ch % sh.lanes == 0 && spec.out_ch > 1) v.push_back(with_block(Dim::K, sh.lanes));
      break;
    }
    case TensorId::Input: {
      if (sh.columns > 1 && spec.in_channels() % sh.columns == 0 && spec.in_channels() > 1)
        v.push_back(with_block(Dim::C, sh.columns));
      // Wider channel tiles make broadcast operands adjacent for vector-k
      // schedules (one small window per filter tap).
      const i64 wide = 2 * mod;
      if (spec.in_channels() % wide == 0 && wide > sh.columns)
        v.push_back(with_block(Dim::C, wide));
      break;
    }
  }
  return v;
}

std::vector<Schedule> enumerate_space(const ConvSpec& spec, const ScheduleSpace& space,
                                      const MachineConfig& mc) {
  spec.validate();
  const MachineShape& sh = mc.shape(spec.precision);
  const std::vector<Dim> active = active_output_dims(spec);

  // Fill in defaults.
  std::vector<Dim> vec_loops = space.vector_loops;
  if (vec_loops.empty()) vec_loops = active;
  std::vector<std::vector<Dim>> orders = space.loop_orders;
  if (orders.empty()) {
    std::vector<Dim> perm = active;
    std::sort(perm.begin(), perm.end());
    do {
      orders.push_back(perm);
    } while (std::next_permutation(perm.begin(), perm.end()));
    if (orders.empty()) orders.push_back({});
  }
  auto uj_cands = [&](Dim d) -> std::vector<int> {
    auto it = space.uj_candidates.find(d);
    if (it != space.uj_candidates.end()) return it->second;
    if (d == Dim::N) return {1};
    return {1, 2, 4, 8};
  };
  auto layout_cands = [&](TensorId t) -> std::vector<DataLayout> {
    auto it = space.layout_candidates.find(t);
    if (it != space.layout_candidates.end() && !it->second.empty()) return it->second;
    return default_layout_candidates(spec, t, mc);
  };
  const auto lay_o = layout_cands(TensorId::Output);
  const auto lay_w = layout_cands(TensorId::Weights);
  const auto lay_i = layout_cands(TensorId::Input);

  std::vector<Schedule> result;
  std::set<std::string> seen;

  for (Dim vec : vec_loops) {
    const i64 vec_extent = spec.extent(TensorId::Output, vec);
    if (vec_extent < sh.lanes) continue;
    // Unroll-jam combos over active dims, lexicographic in X,Y,K,N order.
    std::vector<Dim> uj_dims = active;
    std::vector<std::size_t> idx(uj_dims.size(), 0);
    std::vector<std::vector<int>> cands;
    for (Dim d : uj_dims) cands.push_back(uj_cands(d));
    bool more = true;
    while (more) {
      Schedule base;
      base.vector_loop = vec;
      base.lanes = sh.lanes;
      bool feasible = true;
      i64 replicas = 1;
      for (std::size_t i = 0; i < uj_dims.size(); ++i) {
        const int f = cands[i][idx[i]];
        if (f > 1) base.uj[uj_dims[i]] = f;
        const i64 extent = spec.extent(TensorId::Output, uj_dims[i]);
        const i64 step = i64(f) * (uj_dims[i] == vec ? sh.lanes : 1);
        if (extent % step != 0) feasible = false;
        replicas *= f;
      }
      if (feasible) {
        for (const auto& li : lay_i) {
          // Body-size prune: rows after prospective filter padding.
          i64 flt_w = spec.flt_w;
          if (sh.columns > 1) {
            ResolvedLayout rin = resolve_layout(li, spec, TensorId::Input);
            if (fusion_axis(spec, rin) == Dim::R) flt_w = round_up(flt_w, sh.columns);
          }
          const i64 rows = flt_w * spec.flt_h * spec.flt_d * spec.in_ch * replicas;
          const i64 est_ops = rows + ceil_div(rows, sh.columns) + 8;
          if (est_ops > space.max_program_ops) continue;
          for (const auto& lo : lay_o)
            for (const auto& lw : lay_w)
              for (const auto& order : orders) {
                Schedule s = base;
                s.pad_filter = sh.columns > 1 ? PadFilter::PadToEvenColumns : PadFilter::None;
                // Keep only loops with residual iterations, preserving order.
                for (Dim d : order)
                  if (residual_trips(spec, s, d) > 1) s.loop_order.push_back(d);
                bool covered = true;
                for (Dim d : active)
                  if (residual_trips(spec, s, d) > 1 &&
                      std::find(s.loop_order.begin(), s.loop_order.end(), d) == s.loop_order.end())
                    covered = false;
                if (!covered) continue;
                s.layout_output = pad_layout_for_alignment(lo, spec, TensorId::Output, s, mc);
                s.layout_weights = pad_layout_for_alignment(lw, spec, TensorId::Weights, s, mc);
                s.layout_input = pad_layout_for_alignment(li, spec, TensorId::Input, s, mc);
                if (s.check(spec, mc)) continue;
                if (seen.insert(s.encode()).second) result.push_back(std::move(s));
              }
        }
      }
      // Advance the mixed-radix unroll counter.
      more = false;
      for (std::size_t p = 0; p < idx.size(); ++p) {
        if (++idx[p] < cands[p].size()) {
          more = true;
          break;
        }
        idx[p] = 0;
      }
    }
  }
  return result;
}

}  // namespace convec
