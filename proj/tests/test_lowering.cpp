#include <doctest.h>

#include "convec/lowering.hpp"
#include "convec/oracle.hpp"
#include "convec/schedule.hpp"
#include "convec/tensor.hpp"

using namespace convec;

namespace {

ConvSpec desk_spec() {
  ConvSpec sp;
  sp.kind = ConvKind::Conv2D;
  sp.variant = Variant::REG;
  sp.out_w = 16;
  sp.out_h = 4;
  sp.out_ch = 1;
  sp.batch = 1;
  sp.flt_w = 4;
  sp.flt_h = 3;
  sp.in_ch = 1;
  sp.precision = Precision::I16;
  sp.seed = 7;
  return sp;
}

Schedule canonical_schedule(Dim vec, int lanes, std::vector<Dim> order) {
  Schedule s;
  s.vector_loop = vec;
  s.lanes = lanes;
  s.loop_order = std::move(order);
  s.layout_output = DataLayout::canonical(TensorId::Output);
  s.layout_weights = DataLayout::canonical(TensorId::Weights);
  s.layout_input = DataLayout::canonical(TensorId::Input);
  s.pad_filter = PadFilter::None;
  return s;
}

TripletBody lower_with(const ConvSpec& sp, const Schedule& s, const PaddedSpec& padded) {
  const ResolvedLayout in = resolve_layout(s.layout_input, padded.spec, TensorId::Input);
  (void)sp;
  return lower(padded, s, in);
}

PaddedSpec unpadded(const ConvSpec& sp) { return PaddedSpec{sp, sp.flt_w}; }

void check_vs_reference(const ConvSpec& sp, const Schedule& s, const PaddedSpec& padded) {
  const Workload w = make_workload(sp);
  const TripletBody body = lower_with(sp, s, padded);
  const TensorData got = interpret_triplets(body, padded, w);
  const TensorData ref = reference_convolve(w);
  REQUIRE(got.dims == ref.dims);
  CHECK(got.values == ref.values);
}

}  // namespace

TEST_CASE("full reduction unroll emits one multiply row per filter tap") {
  const ConvSpec sp = desk_spec();
  const Schedule s = canonical_schedule(Dim::X, 16, {Dim::Y});
  const TripletBody body = lower_with(sp, s, unpadded(sp));

  CHECK(body.lanes == 16);
  REQUIRE(body.loops.size() == 1);
  CHECK(body.loops[0].dim == Dim::Y);
  CHECK(body.loops[0].trips == 4);
  CHECK(body.loops[0].step == 1);

  // 4x3 filter, single channel: twelve rows, filter column fastest because
  // the input lays x with stride 1.
  REQUIRE(body.rows.size() == 12);
  for (int i = 0; i < 12; ++i) {
    const TripletRow& row = body.rows[i];
    CHECK(!row.pad);

    // Weights are a scalar operand when the vector loop is x.
    CHECK(row.op1.tensor == TensorId::Weights);
    CHECK(row.op1.lane_count == 1);
    CHECK(row.op1.expr(Dim::R).c0 == i % 4);
    CHECK(row.op1.expr(Dim::S).c0 == i / 4);

    // Input slides one element per filter column and one lane per x.
    CHECK(row.op2.tensor == TensorId::Input);
    CHECK(row.op2.lane_count == 16);
    CHECK(row.op2.expr(Dim::X).c0 == i % 4);
    CHECK(row.op2.expr(Dim::X).lane == 1);
    CHECK(row.op2.expr(Dim::Y).c0 == i / 4);
    CHECK(row.op2.expr(Dim::Y).iv[static_cast<int>(Dim::Y)] == 1);

    CHECK(row.update.tensor == TensorId::Output);
    CHECK(row.update.lane_count == 16);
    CHECK(row.update.expr(Dim::X).lane == 1);
    CHECK(row.update.expr(Dim::Y).iv[static_cast<int>(Dim::Y)] == 1);
    CHECK(row.update == body.rows[0].update);
  }
}

TEST_CASE("padded filter columns are marked as zero rows") {
  ConvSpec sp = desk_spec();
  sp.flt_w = 3;
  const Schedule s = [&] {
    Schedule sc = canonical_schedule(Dim::X, 16, {Dim::Y});
    sc.pad_filter = PadFilter::PadToEvenColumns;
    return sc;
  }();
  const MachineConfig mc;
  const PaddedSpec padded = apply_padding(sp, s, mc);
  REQUIRE(padded.spec.flt_w == 4);
  REQUIRE(padded.orig_flt_w == 3);

  const TripletBody body = lower_with(sp, s, padded);
  REQUIRE(body.rows.size() == 12);
  int pads = 0;
  for (const TripletRow& row : body.rows) {
    if (row.pad) {
      ++pads;
      CHECK(row.op1.expr(Dim::R).c0 == 3);
    } else {
      CHECK(row.op1.expr(Dim::R).c0 < 3);
    }
  }
  CHECK(pads == 3);
}

TEST_CASE("lazy store grouping keys on the destination slice") {
  const ConvSpec sp = desk_spec();

  SUBCASE("one replica, one group") {
    const Schedule s = canonical_schedule(Dim::X, 16, {Dim::Y});
    const GroupedBody g = group_lazy_stores(lower_with(sp, s, unpadded(sp)));
    REQUIRE(g.groups.size() == 1);
    CHECK(g.groups[0].rows.size() == 12);
  }

  SUBCASE("unroll-jam along y splits the groups") {
    Schedule s = canonical_schedule(Dim::X, 16, {Dim::Y});
    s.uj[Dim::Y] = 2;
    const GroupedBody g = group_lazy_stores(lower_with(sp, s, unpadded(sp)));
    REQUIRE(g.loops.size() == 1);
    CHECK(g.loops[0].trips == 2);
    CHECK(g.loops[0].step == 2);
    REQUIRE(g.groups.size() == 2);
    CHECK(g.groups[0].rows.size() == 12);
    CHECK(g.groups[1].rows.size() == 12);
    CHECK(g.groups[0].update.expr(Dim::Y).c0 == 0);
    CHECK(g.groups[1].update.expr(Dim::Y).c0 == 1);
  }
}

TEST_CASE("depthwise rows read the input channel through the output-channel index") {
  ConvSpec sp = desk_spec();
  sp.variant = Variant::DS;
  sp.flt_w = 3;
  sp.flt_h = 3;
  sp.out_ch = 8;
  sp.in_ch = 1;
  sp.validate();

  const Schedule s = canonical_schedule(Dim::X, 16, {Dim::Y, Dim::K});
  const TripletBody body = lower_with(sp, s, unpadded(sp));
  REQUIRE(body.rows.size() == 9);
  for (const TripletRow& row : body.rows) {
    CHECK(row.op2.expr(Dim::C) == row.op1.expr(Dim::K));
    CHECK(row.op2.expr(Dim::C).iv[static_cast<int>(Dim::K)] == 1);
  }
}

TEST_CASE("channel-blocked input layouts reorder the reduction sweep") {
  ConvSpec sp = desk_spec();
  sp.flt_w = 3;
  sp.in_ch = 4;
  Schedule s = canonical_schedule(Dim::X, 16, {Dim::Y});
  s.layout_input.terms = {{Dim::N}, {Dim::T}, {Dim::C}, {Dim::Y}, {Dim::X}, {Dim::C, 2}};

  const TripletBody body = lower_with(sp, s, unpadded(sp));
  // Channel pairs are innermost in storage, so the sweep runs the 2-wide
  // channel tile fastest, then x, then the channel tile count, then y.
  REQUIRE(body.rows.size() == 3 * 3 * 4);
  CHECK(body.rows[0].op1.expr(Dim::C).c0 == 0);
  CHECK(body.rows[1].op1.expr(Dim::C).c0 == 1);
  CHECK(body.rows[2].op1.expr(Dim::R).c0 == 1);
  CHECK(body.rows[2].op1.expr(Dim::C).c0 == 0);
}

TEST_CASE("interpreting the unrolled rows reproduces the reference convolution") {
  SUBCASE("desk-scale 4x3") {
    const ConvSpec sp = desk_spec();
    check_vs_reference(sp, canonical_schedule(Dim::X, 16, {Dim::Y}), unpadded(sp));
  }

  SUBCASE("3x3 with a padded filter column") {
    ConvSpec sp = desk_spec();
    sp.flt_w = 3;
    Schedule s = canonical_schedule(Dim::X, 16, {Dim::Y});
    s.pad_filter = PadFilter::PadToEvenColumns;
    check_vs_reference(sp, s, apply_padding(sp, s, MachineConfig{}));
  }

  SUBCASE("unroll-jam replicas on x and y") {
    ConvSpec sp = desk_spec();
    sp.out_w = 32;
    sp.out_h = 8;
    sp.flt_w = 3;
    sp.flt_h = 3;
    sp.in_ch = 2;
    Schedule s = canonical_schedule(Dim::X, 16, {Dim::X, Dim::Y});
    s.uj[Dim::X] = 1;
    s.uj[Dim::Y] = 2;
    check_vs_reference(sp, s, unpadded(sp));
  }

  SUBCASE("vectorized output channels") {
    ConvSpec sp = desk_spec();
    sp.out_w = 8;
    sp.out_h = 4;
    sp.out_ch = 16;
    sp.flt_w = 3;
    sp.flt_h = 3;
    sp.in_ch = 2;
    check_vs_reference(sp, canonical_schedule(Dim::K, 16, {Dim::X, Dim::Y}), unpadded(sp));
  }

  SUBCASE("stride two") {
    ConvSpec sp = desk_spec();
    sp.flt_w = 3;
    sp.flt_h = 3;
    sp.stride = 2;
    check_vs_reference(sp, canonical_schedule(Dim::X, 16, {Dim::Y}), unpadded(sp));
  }

  SUBCASE("depthwise") {
    ConvSpec sp = desk_spec();
    sp.variant = Variant::DS;
    sp.flt_w = 3;
    sp.flt_h = 3;
    sp.out_ch = 16;
    check_vs_reference(sp, canonical_schedule(Dim::X, 16, {Dim::Y, Dim::K}), unpadded(sp));
  }

  SUBCASE("filter depth reduction") {
    ConvSpec sp = desk_spec();
    sp.kind = ConvKind::Conv3D;
    sp.flt_w = 3;
    sp.flt_h = 3;
    sp.flt_d = 2;
    sp.in_ch = 2;
    sp.out_ch = 2;
    sp.validate();
    check_vs_reference(sp, canonical_schedule(Dim::X, 16, {Dim::Y, Dim::K}), unpadded(sp));
  }

  SUBCASE("channel-blocked input layout") {
    ConvSpec sp = desk_spec();
    sp.flt_w = 3;
    sp.in_ch = 4;
    Schedule s = canonical_schedule(Dim::X, 16, {Dim::Y});
    s.layout_input.terms = {{Dim::N}, {Dim::T}, {Dim::C}, {Dim::Y}, {Dim::X}, {Dim::C, 2}};
    check_vs_reference(sp, s, unpadded(sp));
  }

  SUBCASE("fully connected") {
    ConvSpec sp;
    sp.kind = ConvKind::Conv2D;
    sp.variant = Variant::FC;
    sp.out_w = 1;
    sp.out_h = 1;
    sp.out_ch = 8;
    sp.batch = 2;
    sp.flt_w = 4;
    sp.flt_h = 4;
    sp.in_ch = 2;
    sp.precision = Precision::I32;
    sp.seed = 11;
    sp.validate();
    check_vs_reference(sp, canonical_schedule(Dim::K, 8, {Dim::N}), unpadded(sp));
  }

  SUBCASE("pointwise") {
    ConvSpec sp = desk_spec();
    sp.variant = Variant::PW;
    sp.flt_w = 1;
    sp.flt_h = 1;
    sp.in_ch = 8;
    sp.out_ch = 4;
    sp.validate();
    check_vs_reference(sp, canonical_schedule(Dim::X, 16, {Dim::Y, Dim::K}), unpadded(sp));
  }

  SUBCASE("width-only filter") {
    ConvSpec sp = desk_spec();
    sp.kind = ConvKind::Conv1D;
    sp.out_w = 64;
    sp.out_h = 1;
    sp.flt_w = 4;
    sp.flt_h = 1;
    sp.out_ch = 2;
    sp.validate();
    check_vs_reference(sp, canonical_schedule(Dim::X, 16, {Dim::X, Dim::K}), unpadded(sp));
  }
}
