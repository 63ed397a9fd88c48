#include "convec/reuse.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace convec {

namespace {

std::array<i64, 4> loop_steps(const std::vector<ResidualLoop>& loops) {
  std::array<i64, 4> st{};
  for (const ResidualLoop& l : loops) st[static_cast<int>(l.dim)] = l.step;
  return st;
}

std::array<i64, 8> coords_at(const VectorAccess& a, const std::array<i64, 4>& ivs, i64 lane) {
  const auto& dims = ConvSpec::tensor_dims(a.tensor);
  std::array<i64, 8> c{};
  for (size_t i = 0; i < dims.size(); ++i) c[static_cast<int>(dims[i])] = a.idx[i].eval(ivs, lane);
  return c;
}

void fill_lane_offsets(LocatedAccess& la, const ResolvedLayout& layout) {
  la.lane_offsets.clear();
  la.lo = std::numeric_limits<i64>::max();
  la.hi = std::numeric_limits<i64>::min();
  for (int lane = 0; lane < la.access.lane_count; ++lane) {
    i64 off = layout.address(coords_at(la.access, {}, lane));
    la.lane_offsets.push_back(off);
    la.lo = std::min(la.lo, off);
    la.hi = std::max(la.hi, off + 1);
  }
}

// Numeric fallback for non-affine addresses: sample the delta of the first
// iteration of each loop so best-effort planning can continue.
void probe_gradients(LocatedAccess& la, const ResolvedLayout& layout,
                     const std::vector<ResidualLoop>& loops) {
  i64 base = layout.address(coords_at(la.access, {}, 0));
  for (const ResidualLoop& l : loops) {
    std::array<i64, 4> ivs{};
    ivs[static_cast<int>(l.dim)] = l.step;
    la.iv_grad[static_cast<int>(l.dim)] = layout.address(coords_at(la.access, ivs, 0)) - base;
  }
}

}  // namespace

std::string LocatedAccess::key() const {
  std::ostringstream os;
  os << tensor_letter(access.tensor) << '/' << access.lane_count;
  for (const AffineExpr& e : access.idx) {
    os << '/' << e.c0 << ':' << e.lane;
    for (i64 c : e.iv) os << ',' << c;
  }
  return os.str();
}

Fallible<LocatedAccess> locate_access(const VectorAccess& a, const ResolvedLayout& layout,
                                      const std::vector<ResidualLoop>& loops) {
  LocatedAccess la;
  la.access = a;
  std::array<i64, 4> steps = loop_steps(loops);

  const auto& dims = ConvSpec::tensor_dims(a.tensor);
  for (size_t i = 0; i < dims.size(); ++i) {
    const AffineExpr& e = a.idx[i];
    const ResolvedLayout::DimInfo& di = layout.dim(dims[i]);
    for (int l = 0; l < 4; ++l) {
      if (e.iv[l] == 0) continue;
      i64 delta = e.iv[l] * steps[l];  // coordinate delta per iteration
      if (di.full_stride == 0 && di.block_stride == 0) continue;  // extent-1 dim
      if (di.full_stride == 0) {
        // Lone block term covering the whole extent: plain stride.
        la.iv_grad[l] += delta * di.block_stride;
      } else if (di.block == 1) {
        la.iv_grad[l] += delta * di.full_stride;
      } else if (delta % di.block == 0) {
        // Stepping whole tiles keeps the intra-tile index fixed.
        la.iv_grad[l] += (delta / di.block) * di.full_stride;
      } else {
        std::ostringstream os;
        os << a.to_string() << ": step " << delta << " over dim " << dim_char(dims[i])
           << " crosses tile boundaries of size " << di.block;
        return Rejection{RejectReason::AddressNotAffine, os.str()};
      }
    }
  }
  fill_lane_offsets(la, layout);
  return la;
}

Fallible<ReuseGraph> build_reuse_graph(TensorId tensor, const std::vector<VectorAccess>& accesses,
                                       const ResolvedLayout& layout,
                                       const std::vector<ResidualLoop>& loops) {
  ReuseGraph g;
  g.tensor = tensor;
  std::map<std::string, int> seen;
  for (const VectorAccess& a : accesses) {
    Fallible<LocatedAccess> la = locate_access(a, layout, loops);
    if (!la.ok()) return la.rejection();
    if (seen.emplace(la.value().key(), int(g.nodes.size())).second)
      g.nodes.push_back(std::move(la.value()));
  }
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    for (size_t j = i + 1; j < g.nodes.size(); ++j) {
      const LocatedAccess& a = g.nodes[i];
      const LocatedAccess& b = g.nodes[j];
      if (a.iv_grad != b.iv_grad) continue;  // must move together to share a window
      bool overlap = a.lo < b.hi && b.lo < a.hi;
      bool touch = a.hi == b.lo || b.hi == a.lo;
      if (overlap || touch) g.edges.emplace_back(int(i), int(j));
    }
  }
  // Connected components, numbered by their first node.
  g.component.assign(g.nodes.size(), -1);
  std::vector<std::vector<int>> adj(g.nodes.size());
  for (auto [u, v] : g.edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    if (g.component[i] >= 0) continue;
    int id = g.n_components++;
    std::vector<int> stack{int(i)};
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      if (g.component[u] >= 0) continue;
      g.component[u] = id;
      for (int v : adj[u]) stack.push_back(v);
    }
  }
  return g;
}

const Binding& RegisterPlan::binding_of(const VectorAccess& a) const {
  LocatedAccess la;
  la.access = a;
  auto it = bindings.find(la.key());
  if (it == bindings.end()) throw InternalMiscompile("operand access has no register binding");
  return it->second;
}

namespace {

int rounded_width_bits(i64 elems, int elem_bits, const MachineConfig& mc) {
  i64 bits = elems * elem_bits;
  for (int w : mc.register_widths)
    if (bits <= w) return w;
  int w = mc.max_register_bits();
  while (w < bits) w *= 2;  // over-wide: only reachable in --force inspection
  return w;
}

// Row spans during which each window must sit in a register: one [first,last]
// run per window normally, one run per consuming store group when the plan
// reloads at group boundaries.
using LiveSpans = std::vector<std::vector<std::pair<int, int>>>;

LiveSpans live_spans(const RegisterPlan& plan, const GroupedBody& body, bool per_group) {
  LiveSpans spans(plan.windows.size());
  int row = 0;
  for (const StoreGroup& grp : body.groups) {
    const int group_first = row;
    for (const TripletRow& r : grp.rows) {
      for (const VectorAccess* op : {&r.op1, &r.op2}) {
        auto& sp = spans[plan.binding_of(*op).window];
        if (sp.empty() || (per_group && sp.back().first < group_first))
          sp.emplace_back(row, row);
        else
          sp.back().second = row;
      }
      ++row;
    }
  }
  return spans;
}

i64 peak_live_bytes(const std::vector<Window>& windows, const LiveSpans& spans, int n_rows) {
  i64 always = 0;
  for (const Window& w : windows)
    if (w.place > 0) always += w.width_bits / 8;
  std::vector<i64> delta(size_t(n_rows) + 1, 0);
  for (size_t i = 0; i < windows.size(); ++i) {
    if (windows[i].place > 0) continue;
    for (auto [a, b] : spans[i]) {
      delta[a] += windows[i].width_bits / 8;
      delta[size_t(b) + 1] -= windows[i].width_bits / 8;
    }
  }
  i64 peak = always, run = always;
  for (int p = 0; p < n_rows; ++p) {
    run += delta[p];
    peak = std::max(peak, run);
  }
  return peak;
}

}  // namespace

Fallible<RegisterPlan> plan_loads(const PlanInputs& in, std::vector<Rejection>* diagnostics) {
  RegisterPlan plan;
  const int eb = elem_bytes(in.prec);
  const int ebits = elem_bits(in.prec);
  const i64 align_elems = in.mc.alignment_bytes() / eb;
  const i64 max_elems = in.mc.max_register_bits() / ebits;
  const auto& loops = in.body.loops;
  const int n_loops = int(loops.size());

  std::optional<Rejection> deferred;
  auto flag = [&](RejectReason r, const std::string& detail) -> bool {
    Rejection rej{r, detail};
    if (diagnostics) {
      diagnostics->push_back(rej);
      return true;  // keep going best-effort
    }
    if (!deferred) deferred = rej;
    return false;
  };

  // --- store side: every group writes a contiguous, aligned lane span ---
  for (const StoreGroup& grp : in.body.groups) {
    Fallible<LocatedAccess> res = locate_access(grp.update, in.lay_o, loops);
    LocatedAccess la;
    if (!res.ok()) {
      if (!flag(res.rejection().reason, res.rejection().detail)) return *deferred;
      la.access = grp.update;
      probe_gradients(la, in.lay_o, loops);
      fill_lane_offsets(la, in.lay_o);
    } else {
      la = res.value();
    }
    for (int lane = 1; lane < int(la.lane_offsets.size()); ++lane) {
      if (la.lane_offsets[lane] != la.lane_offsets[0] + lane) {
        if (!flag(RejectReason::StoreLayout,
                  grp.update.to_string() + ": store lanes are not adjacent in the output layout"))
          return *deferred;
        break;
      }
    }
    if (la.lane_offsets[0] % align_elems != 0) {
      if (!flag(RejectReason::Alignment,
                grp.update.to_string() + ": store base misses the 16-byte grid"))
        return *deferred;
    }
    for (int l = 0; l < 4; ++l) {
      if (la.iv_grad[l] * eb % in.mc.alignment_bytes() != 0) {
        if (!flag(RejectReason::Alignment, grp.update.to_string() + ": store step over " +
                                               std::string(1, "xykn"[l]) +
                                               " leaves the 16-byte grid"))
          return *deferred;
      }
    }
    StoreTarget st;
    st.start = la.lane_offsets[0];
    st.iv_grad = la.iv_grad;
    plan.stores.push_back(st);
  }

  // --- load side: reuse graphs per tensor, components -> windows ---
  std::vector<VectorAccess> w_accs, i_accs;
  for (const StoreGroup& grp : in.body.groups) {
    for (const TripletRow& row : grp.rows) {
      w_accs.push_back(row.op1);
      i_accs.push_back(row.op2);
    }
  }

  auto build = [&](TensorId t, const std::vector<VectorAccess>& accs,
                   const ResolvedLayout& lay) -> std::optional<ReuseGraph> {
    Fallible<ReuseGraph> g = build_reuse_graph(t, accs, lay, loops);
    if (g.ok()) return std::move(g.value());
    if (!flag(g.rejection().reason, g.rejection().detail)) return std::nullopt;
    // Probe every distinct access numerically and rebuild the graph.
    ReuseGraph pg;
    pg.tensor = t;
    std::map<std::string, int> seen;
    for (const VectorAccess& a : accs) {
      LocatedAccess la;
      la.access = a;
      if (seen.count(la.key())) continue;
      seen.emplace(la.key(), int(pg.nodes.size()));
      probe_gradients(la, lay, loops);
      fill_lane_offsets(la, lay);
      pg.nodes.push_back(std::move(la));
    }
    pg.component.resize(pg.nodes.size());
    for (size_t i = 0; i < pg.nodes.size(); ++i) pg.component[i] = int(i);
    pg.n_components = int(pg.nodes.size());
    return pg;
  };

  std::optional<ReuseGraph> wg = build(TensorId::Weights, w_accs, in.lay_w);
  if (!wg) return *deferred;
  std::optional<ReuseGraph> ig = build(TensorId::Input, i_accs, in.lay_i);
  if (!ig) return *deferred;

  auto make_windows = [&](const ReuseGraph& g) -> bool {
    for (int comp = 0; comp < g.n_components; ++comp) {
      std::vector<int> members;
      for (size_t i = 0; i < g.nodes.size(); ++i)
        if (g.component[i] == comp) members.push_back(int(i));
      std::stable_sort(members.begin(), members.end(),
                       [&](int a, int b) { return g.nodes[a].lo < g.nodes[b].lo; });

      for (int l = 0; l < 4; ++l) {
        if (g.nodes[members[0]].iv_grad[l] * eb % in.mc.alignment_bytes() != 0) {
          if (!flag(RejectReason::Alignment,
                    g.nodes[members[0]].access.to_string() + ": window step over " +
                        std::string(1, "xykn"[l]) + " leaves the 16-byte grid"))
            return false;
        }
      }

      i64 cur_start = -1, cur_hi = 0;
      std::vector<std::pair<int, int>> bound;  // (node, window index within plan)
      auto close = [&]() {
        if (cur_start < 0) return;
        Window w;
        w.tensor = g.tensor;
        w.start = cur_start;
        w.width_bits = rounded_width_bits(cur_hi - cur_start, ebits, in.mc);
        w.iv_grad = g.nodes[members[0]].iv_grad;
        plan.windows.push_back(w);
      };
      for (int m : members) {
        const LocatedAccess& la = g.nodes[m];
        i64 s = round_down(la.lo, align_elems);
        if (la.hi - s > max_elems) {
          std::ostringstream os;
          os << la.access.to_string() << ": spans " << (la.hi - s) * ebits
             << " bits, wider than the widest register group";
          if (!flag(RejectReason::OversizedAccess, os.str())) return false;
        }
        if (cur_start >= 0 && la.hi - cur_start <= max_elems) {
          cur_hi = std::max(cur_hi, la.hi);
        } else {
          close();
          cur_start = s;
          cur_hi = la.hi;
        }
        bound.emplace_back(m, int(plan.windows.size()));  // window not closed yet
      }
      close();
      for (auto [m, wi] : bound) {
        Binding b;
        b.window = wi;
        for (i64 off : g.nodes[m].lane_offsets) b.offsets.push_back(off - plan.windows[wi].start);
        plan.bindings.emplace(g.nodes[m].key(), std::move(b));
      }
    }
    return true;
  };

  if (!make_windows(*wg)) return *deferred;
  if (!make_windows(*ig)) return *deferred;

  // --- liveness & hoisting under the register-file budget ---
  int n_rows = 0;
  for (Window& w : plan.windows) {
    w.first_use = std::numeric_limits<int>::max();
    w.last_use = -1;
  }
  for (const StoreGroup& grp : in.body.groups) {
    for (const TripletRow& row : grp.rows) {
      for (const VectorAccess* op : {&row.op1, &row.op2}) {
        Window& w = plan.windows[plan.binding_of(*op).window];
        w.first_use = std::min(w.first_use, n_rows);
        w.last_use = std::max(w.last_use, n_rows);
      }
      ++n_rows;
    }
  }

  auto allowed_place = [&](const Window& w) {
    int p = n_loops;  // invariant: hoist to the preamble
    for (int l = 0; l < n_loops; ++l)
      if (w.iv_grad[static_cast<int>(loops[l].dim)] != 0) p = std::min(p, l);
    return p;
  };
  for (Window& w : plan.windows) w.place = allowed_place(w);

  plan.preamble_place = n_loops;
  i64 budget = in.mc.register_file_bytes;
  auto relieve = [&]() {
    const LiveSpans spans = live_spans(plan, in.body, plan.reload_per_group);
    plan.peak_live_bytes = peak_live_bytes(plan.windows, spans, n_rows);
    while (plan.peak_live_bytes > budget) {
      // Sink the bulkiest hoisted window back into the body and retry.
      int pick = -1;
      for (int i = 0; i < int(plan.windows.size()); ++i) {
        const Window& w = plan.windows[i];
        if (w.place <= 0) continue;
        if (pick < 0 || w.width_bits > plan.windows[pick].width_bits ||
            (w.width_bits == plan.windows[pick].width_bits &&
             w.first_use > plan.windows[pick].first_use))
          pick = i;
      }
      if (pick < 0) break;
      plan.windows[pick].place = 0;
      plan.peak_live_bytes = peak_live_bytes(plan.windows, spans, n_rows);
    }
  };
  relieve();
  if (plan.peak_live_bytes > budget && in.body.groups.size() > 1) {
    // Windows shared across store groups hold their registers from the first
    // group to the last and can outgrow the file on their own.  Fall back to
    // reloading inside every consuming group: live ranges shrink to one group,
    // at the price of repeating loads the groups used to share.
    plan.reload_per_group = true;
    for (Window& w : plan.windows) w.place = allowed_place(w);
    relieve();
  }
  if (plan.peak_live_bytes > budget) {
    std::ostringstream os;
    os << "needs " << plan.peak_live_bytes << " live register bytes, file holds " << budget;
    if (!flag(RejectReason::RegisterPressure, os.str())) return *deferred;
  }

  return plan;
}

}  // namespace convec
