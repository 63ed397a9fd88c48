#include "convec/fusion.hpp"

#include <set>
#include <sstream>

namespace convec {

Fallible<SelectPattern> solve_select(const std::vector<std::vector<i64>>& offs, i64 window_elems,
                                     Precision prec, int select_granularity_bits) {
  const int cols = int(offs.size());
  const int lanes = int(offs[0].size());
  SelectPattern p;
  p.base = offs[0][0];
  p.lane_stride = lanes > 1 ? offs[0][1] - offs[0][0] : 0;
  p.col_stride = cols > 1 ? offs[1][0] - offs[0][0] : 0;
  for (int j = 0; j < cols; ++j) {
    for (int i = 0; i < lanes; ++i) {
      i64 want = offs[j][i];
      if (p.at(i, j) != want) {
        std::ostringstream os;
        os << "operand offsets are not affine in lane/column (lane " << i << ", col " << j
           << ": have " << want << ", pattern gives " << p.at(i, j) << ")";
        return Rejection{RejectReason::SelectInfeasible, os.str()};
      }
      if (want < 0 || want >= window_elems) {
        std::ostringstream os;
        os << "select index " << want << " outside its register group of " << window_elems
           << " elements";
        return Rejection{RejectReason::SelectInfeasible, os.str()};
      }
    }
  }
  // Selection works on 32-bit slots: with 16-bit elements each slot feeds an
  // adjacent lane pair, which therefore may touch at most `cols` slots total.
  const int eps = select_granularity_bits / elem_bits(prec);
  if (eps > 1) {
    for (int i0 = 0; i0 + 1 < lanes || i0 == 0; i0 += eps) {
      std::set<i64> slots;
      for (int di = 0; di < eps && i0 + di < lanes; ++di)
        for (int j = 0; j < cols; ++j) slots.insert(p.at(i0 + di, j) / eps);
      if (int(slots.size()) > cols) {
        std::ostringstream os;
        os << "lane pair " << i0 / eps << " needs " << slots.size() << " selection slots, only "
           << cols << " available (base " << p.base << " lane step " << p.lane_stride
           << " col step " << p.col_stride << ")";
        return Rejection{RejectReason::SelectInfeasible, os.str()};
      }
      if (lanes == 1) break;
    }
  }
  return p;
}

Fallible<std::vector<FusedGroup>> fuse_rows(const GroupedBody& body, const RegisterPlan& plan,
                                            const MachineShape& shape, Precision prec,
                                            int select_granularity_bits,
                                            std::vector<Rejection>* diagnostics) {
  std::vector<FusedGroup> out;
  std::optional<Rejection> deferred;
  auto flag = [&](const Rejection& r) -> bool {
    if (diagnostics) {
      diagnostics->push_back(r);
      return true;
    }
    if (!deferred) deferred = r;
    return false;
  };

  for (size_t gi = 0; gi < body.groups.size(); ++gi) {
    const StoreGroup& grp = body.groups[gi];
    FusedGroup fg;
    fg.store = int(gi);

    // Maximal runs of rows reading the same (weights, input) window pair.
    size_t at = 0;
    while (at < grp.rows.size()) {
      int ww = plan.binding_of(grp.rows[at].op1).window;
      int iw = plan.binding_of(grp.rows[at].op2).window;
      size_t end = at + 1;
      while (end < grp.rows.size() && plan.binding_of(grp.rows[end].op1).window == ww &&
             plan.binding_of(grp.rows[end].op2).window == iw)
        ++end;
      size_t run = end - at;
      if (run % shape.columns != 0) {
        std::ostringstream os;
        os << "run of " << run << " multiplies into " << grp.update.to_string()
           << " does not fill " << shape.columns << " columns";
        if (!flag({RejectReason::FusionArity, os.str()})) return *deferred;
      }

      for (size_t chunk = at; chunk < end; chunk += shape.columns) {
        int cols = int(std::min<size_t>(shape.columns, end - chunk));
        FusedOp op;
        op.w_window = ww;
        op.i_window = iw;
        op.cols = cols;
        op.first = fg.ops.empty();
        for (int j = 0; j < cols; ++j)
          if (!grp.rows[chunk + j].pad) ++op.real_cols;

        auto operand_offsets = [&](bool weights) {
          std::vector<std::vector<i64>> offs(cols);
          for (int j = 0; j < cols; ++j) {
            const VectorAccess& a = weights ? grp.rows[chunk + j].op1 : grp.rows[chunk + j].op2;
            const Binding& b = plan.binding_of(a);
            offs[j].resize(shape.lanes);
            for (int i = 0; i < shape.lanes; ++i)
              offs[j][i] = b.offsets[a.lane_count > 1 ? i : 0];  // scalars broadcast
          }
          return offs;
        };
        auto elems_of = [&](int w) {
          return i64(plan.windows[w].width_bits) / elem_bits(prec);
        };
        Fallible<SelectPattern> ws =
            solve_select(operand_offsets(true), elems_of(ww), prec, select_granularity_bits);
        if (!ws.ok()) {
          if (!flag(ws.rejection())) return *deferred;
          ws = SelectPattern{};  // placeholder so inspection can continue
        }
        Fallible<SelectPattern> is =
            solve_select(operand_offsets(false), elems_of(iw), prec, select_granularity_bits);
        if (!is.ok()) {
          if (!flag(is.rejection())) return *deferred;
          is = SelectPattern{};
        }
        op.w_sel = ws.value();
        op.i_sel = is.value();
        fg.ops.push_back(op);
      }
      at = end;
    }
    out.push_back(std::move(fg));
  }
  return out;
}

}  // namespace convec
