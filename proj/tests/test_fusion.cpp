#include <doctest.h>

#include "convec/fusion.hpp"
#include "convec/lowering.hpp"
#include "convec/schedule.hpp"

using namespace convec;

namespace {

ConvSpec desk_spec() {
  ConvSpec sp;
  sp.out_w = 16;
  sp.out_h = 4;
  sp.flt_w = 4;
  sp.flt_h = 3;
  sp.precision = Precision::I16;
  sp.seed = 7;
  return sp;
}

Schedule desk_schedule() {
  Schedule s;
  s.vector_loop = Dim::X;
  s.lanes = 16;
  s.loop_order = {Dim::Y};
  s.layout_output = DataLayout::canonical(TensorId::Output);
  s.layout_weights = DataLayout::canonical(TensorId::Weights);
  s.layout_input.terms = {{Dim::N}, {Dim::C}, {Dim::T}, {Dim::Y}, {Dim::X, 0, 8}};
  s.pad_filter = PadFilter::None;
  return s;
}

struct Fused {
  GroupedBody body;
  RegisterPlan plan;
  Fallible<std::vector<FusedGroup>> groups;
};

Fused fuse(const PaddedSpec& padded, const Schedule& s,
           std::vector<Rejection>* diagnostics = nullptr) {
  const MachineConfig mc;
  const ConvSpec& sp = padded.spec;
  ResolvedLayout lay_o = resolve_layout(s.layout_output, sp, TensorId::Output);
  ResolvedLayout lay_w = resolve_layout(s.layout_weights, sp, TensorId::Weights);
  ResolvedLayout lay_i = resolve_layout(s.layout_input, sp, TensorId::Input);
  GroupedBody body = group_lazy_stores(lower(padded, s, lay_i));
  Fallible<RegisterPlan> plan = plan_loads({body, lay_o, lay_w, lay_i, mc, sp.precision});
  REQUIRE(plan.ok());
  Fallible<std::vector<FusedGroup>> groups =
      fuse_rows(body, plan.value(), mc.shape(sp.precision), sp.precision,
                mc.select_granularity_bits, diagnostics);
  return {std::move(body), std::move(plan.value()), std::move(groups)};
}

i64 fused_mac_count(const GroupedBody& body, const std::vector<FusedGroup>& groups, int lanes) {
  i64 per_body = 0;
  for (const FusedGroup& g : groups)
    for (const FusedOp& op : g.ops) per_body += i64(op.real_cols) * lanes;
  i64 trips = 1;
  for (const ResidualLoop& l : body.loops) trips *= l.trips;
  return per_body * trips;
}

}  // namespace

TEST_CASE("the desk example fuses twelve taps into six two-column ops") {
  const ConvSpec sp = desk_spec();
  Fused f = fuse(PaddedSpec{sp, sp.flt_w}, desk_schedule());
  REQUIRE(f.groups.ok());
  const std::vector<FusedGroup>& gs = f.groups.value();

  REQUIRE(gs.size() == 1);
  CHECK(gs[0].store == 0);
  REQUIRE(gs[0].ops.size() == 6);
  for (size_t i = 0; i < gs[0].ops.size(); ++i) {
    const FusedOp& op = gs[0].ops[i];
    CHECK(op.cols == 2);
    CHECK(op.real_cols == 2);
    CHECK(op.first == (i == 0));
    CHECK(op.w_window == 0);
    CHECK(op.i_window == 1 + int(i) / 2);  // two ops consume each input row
  }

  // Adjacent filter taps: weights step one element per column and broadcast
  // across lanes; the input slides one element per lane and per column.
  CHECK(gs[0].ops[0].w_sel == SelectPattern{0, 0, 1});
  CHECK(gs[0].ops[0].i_sel == SelectPattern{0, 1, 1});
  CHECK(gs[0].ops[1].w_sel == SelectPattern{2, 0, 1});
  CHECK(gs[0].ops[1].i_sel == SelectPattern{2, 1, 1});

  CHECK(fused_mac_count(f.body, gs, 16) == sp.total_macs());
}

TEST_CASE("zero filler columns keep the multiply count honest") {
  ConvSpec sp = desk_spec();
  sp.flt_w = 3;
  Schedule s = desk_schedule();
  s.pad_filter = PadFilter::PadToEvenColumns;
  const PaddedSpec padded = apply_padding(sp, s, MachineConfig{});
  REQUIRE(padded.spec.flt_w == 4);

  Fused f = fuse(padded, s);
  REQUIRE(f.groups.ok());
  const std::vector<FusedGroup>& gs = f.groups.value();
  REQUIRE(gs.size() == 1);
  REQUIRE(gs[0].ops.size() == 6);
  // Each filter row ends with one zero column: its op counts a single real one.
  for (size_t i = 0; i < gs[0].ops.size(); ++i) {
    CHECK(gs[0].ops[i].cols == 2);
    CHECK(gs[0].ops[i].real_cols == (i % 2 == 0 ? 2 : 1));
  }
  CHECK(fused_mac_count(f.body, gs, 16) == sp.total_macs());
}

TEST_CASE("select patterns solve from exact operand offsets") {
  SUBCASE("affine offsets") {
    Fallible<SelectPattern> p =
        solve_select({{0, 1, 2, 3}, {1, 2, 3, 4}}, 16, Precision::I16, 32);
    REQUIRE(p.ok());
    CHECK(p.value() == SelectPattern{0, 1, 1});
  }

  SUBCASE("non-affine offsets") {
    Fallible<SelectPattern> p = solve_select({{0, 1}, {2, 4}}, 16, Precision::I16, 32);
    REQUIRE(!p.ok());
    CHECK(p.rejection().reason == RejectReason::SelectInfeasible);
    CHECK(p.rejection().detail.find("not affine") != std::string::npos);
  }

  SUBCASE("offset outside the register group") {
    Fallible<SelectPattern> p = solve_select({{7}}, 4, Precision::I16, 32);
    REQUIRE(!p.ok());
    CHECK(p.rejection().reason == RejectReason::SelectInfeasible);
    CHECK(p.rejection().detail.find("outside its register group") != std::string::npos);
  }

  SUBCASE("16-bit lane pairs share selection slots") {
    // Lanes 0 and 1 would need slots 0 and 2 but a 1-column op offers one.
    Fallible<SelectPattern> p = solve_select({{0, 5}}, 16, Precision::I16, 32);
    REQUIRE(!p.ok());
    CHECK(p.rejection().reason == RejectReason::SelectInfeasible);
    CHECK(p.rejection().detail.find("selection slots") != std::string::npos);
  }

  SUBCASE("32-bit elements select independently") {
    Fallible<SelectPattern> p = solve_select({{0, 5}}, 16, Precision::I32, 32);
    REQUIRE(p.ok());
    CHECK(p.value() == SelectPattern{0, 5, 0});
  }
}

TEST_CASE("a run that does not fill the columns is rejected") {
  ConvSpec sp = desk_spec();
  sp.out_h = 1;
  sp.flt_w = 3;
  sp.flt_h = 1;
  Schedule s = desk_schedule();
  s.loop_order = {};

  SUBCASE("strict fusion rejects") {
    Fused f = fuse(PaddedSpec{sp, sp.flt_w}, s);
    REQUIRE(!f.groups.ok());
    CHECK(f.groups.rejection().reason == RejectReason::FusionArity);
    CHECK(f.groups.rejection().detail.find("does not fill 2 columns") != std::string::npos);
  }

  SUBCASE("diagnostic fusion emits a short trailing op") {
    std::vector<Rejection> diags;
    Fused f = fuse(PaddedSpec{sp, sp.flt_w}, s, &diags);
    REQUIRE(f.groups.ok());
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].reason == RejectReason::FusionArity);
    REQUIRE(f.groups.value()[0].ops.size() == 2);
    CHECK(f.groups.value()[0].ops[0].cols == 2);
    CHECK(f.groups.value()[0].ops[1].cols == 1);
  }
}

TEST_CASE("a conv stride of three defeats 16-bit operand selection") {
  ConvSpec sp = desk_spec();
  sp.out_h = 1;
  sp.flt_w = 2;
  sp.flt_h = 1;
  sp.stride = 3;
  Schedule s = desk_schedule();
  s.loop_order = {};

  Fused f = fuse(PaddedSpec{sp, sp.flt_w}, s);
  REQUIRE(!f.groups.ok());
  CHECK(f.groups.rejection().reason == RejectReason::SelectInfeasible);
  CHECK(f.groups.rejection().detail.find("selection slots") != std::string::npos);
}
