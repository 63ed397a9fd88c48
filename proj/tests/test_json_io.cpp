#include <doctest.h>

#include <json.hpp>

#include "convec/json_io.hpp"
#include "convec/pipeline.hpp"

using namespace convec;
using nlohmann::json;

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

}  // namespace

TEST_CASE("workload specs survive a JSON round trip") {
  ConvSpec sp;
  sp.kind = ConvKind::Conv3D;
  sp.variant = Variant::REG;
  sp.out_w = 16;
  sp.out_h = 4;
  sp.out_ch = 4;
  sp.batch = 2;
  sp.flt_w = 3;
  sp.flt_h = 3;
  sp.flt_d = 2;
  sp.in_ch = 4;
  sp.stride = 1;
  sp.precision = Precision::I16;
  sp.seed = 3;

  ConvSpec back = spec_from_json(spec_to_json(sp));
  CHECK(back.kind == sp.kind);
  CHECK(back.variant == sp.variant);
  CHECK(back.out_w == sp.out_w);
  CHECK(back.out_h == sp.out_h);
  CHECK(back.out_ch == sp.out_ch);
  CHECK(back.batch == sp.batch);
  CHECK(back.flt_w == sp.flt_w);
  CHECK(back.flt_h == sp.flt_h);
  CHECK(back.flt_d == sp.flt_d);
  CHECK(back.in_ch == sp.in_ch);
  CHECK(back.stride == sp.stride);
  CHECK(back.precision == sp.precision);
  CHECK(back.seed == sp.seed);
}

TEST_CASE("spec parsing is forgiving about case but strict about values") {
  ConvSpec sp = spec_from_json(R"({"kind":"CONV2D","variant":"Ds","out_w":32,"out_h":4,
      "out_ch":16,"flt_w":3,"flt_h":3,"in_ch":1,"precision":"i16"})");
  CHECK(sp.kind == ConvKind::Conv2D);
  CHECK(sp.variant == Variant::DS);

  CHECK_THROWS_AS(spec_from_json(R"({"kind":"conv4d"})"), SpecError);
  CHECK_THROWS_AS(spec_from_json(R"({"precision":"f32"})"), SpecError);
  CHECK_THROWS_AS(spec_from_json(R"({"out_w":0})"), SpecError);
  CHECK_THROWS_AS(spec_from_json("{nope"), SpecError);
}

TEST_CASE("schedules survive a JSON round trip, blocked and padded terms included") {
  Schedule s = desk_schedule();
  s.uj[Dim::Y] = 2;
  s.layout_weights.terms = {{Dim::K}, {Dim::T}, {Dim::S}, {Dim::R, 0, 8}, {Dim::C, 2}};

  std::string text = schedule_to_json(s);
  Schedule back = schedule_from_json(text);
  CHECK(back.encode() == s.encode());

  json j = json::parse(text);
  CHECK(j["vector_loop"] == "x");
  CHECK(j["loop_order"] == "y");
  CHECK(j["unroll_jam"]["y"] == 2);
  CHECK(j["pad_filter"] == "none");
  CHECK(j["layouts"]["input"][4] == json::array({"x", 0, 8}));
  CHECK(j["layouts"]["weights"][3] == json::array({"r", 0, 8}));
  CHECK(j["layouts"]["weights"][4] == json::array({"c", 2}));
}

TEST_CASE("a schedule without layouts is rejected") {
  CHECK_THROWS_AS(schedule_from_json(R"({"vector_loop":"x","lanes":16})"), SpecError);
  CHECK_THROWS_AS(schedule_from_json(R"({"layouts":{"output":[],"weights":[]}})"), SpecError);
  CHECK_THROWS_AS(
      schedule_from_json(R"({"layouts":{"output":[["x",1,2,3]],"weights":[],"input":[]}})"),
      SpecError);
}

TEST_CASE("schedule-space JSON fills only the listed axes") {
  ConvSpec sp = desk_spec();
  std::string text = R"({
    "vector_loops": ["x"],
    "loop_orders": ["y", "yx"],
    "unroll_jam": {"y": [1, 2, 4]},
    "layouts": {"input": [[["n"],["c"],["t"],["y"],["x",0,8]]]},
    "max_program_ops": 512
  })";
  ScheduleSpace space = space_from_json(text, sp, MachineConfig{});
  REQUIRE(space.vector_loops.size() == 1);
  CHECK(space.vector_loops[0] == Dim::X);
  REQUIRE(space.loop_orders.size() == 2);
  CHECK(space.loop_orders[1] == std::vector<Dim>{Dim::Y, Dim::X});
  CHECK(space.uj_candidates.at(Dim::Y) == std::vector<int>{1, 2, 4});
  CHECK(space.uj_candidates.count(Dim::X) == 0);
  REQUIRE(space.layout_candidates.count(TensorId::Input) == 1);
  CHECK(space.layout_candidates.at(TensorId::Input)[0].terms.size() == 5);
  CHECK(space.layout_candidates.count(TensorId::Output) == 0);
  CHECK(space.max_program_ops == 512);
}

TEST_CASE("machine JSON overrides single knobs and keeps the rest") {
  MachineConfig mc = machine_from_json(R"({"memory_bytes":65536,"preamble_cycles":10})");
  CHECK(mc.memory_bytes == 65536);
  CHECK(mc.preamble_cycles == 10);
  CHECK(mc.shape_i16.lanes == 16);
  CHECK(mc.shape_i32.lanes == 8);
  CHECK(mc.register_file_bytes == 256);
  CHECK(mc.port_bytes == 32);
}

TEST_CASE("tune reports serialize every candidate and stay wall-clock free") {
  TuneOptions opt;
  opt.space.vector_loops = {Dim::X};
  opt.space.loop_orders = {{Dim::Y}};
  opt.space.uj_candidates[Dim::X] = {1};
  opt.space.uj_candidates[Dim::Y] = {1, 2, 4};
  opt.space.layout_candidates[TensorId::Output] = {DataLayout::canonical(TensorId::Output)};
  opt.space.layout_candidates[TensorId::Weights] = {DataLayout::canonical(TensorId::Weights)};
  DataLayout in;
  in.terms = {{Dim::N}, {Dim::C}, {Dim::T}, {Dim::Y}, {Dim::X, 0, 8}};
  opt.space.layout_candidates[TensorId::Input] = {in};

  TuneReport rep = tune(desk_spec(), MachineConfig{}, opt);
  json j = json::parse(report_to_json(rep));

  CHECK(j["workload"]["out_w"] == 16);
  CHECK(j["space_size"] == 3);
  CHECK(j["accepted"] == 3);
  CHECK(j["rejected"] == json::object());
  CHECK(j["peak_macs_per_cycle"] == 32);
  REQUIRE(j["best"].is_object());
  CHECK(j["best"]["id"] == 2);
  CHECK(j["best"]["output_checksum"] == "0xfef9e843ad8478e9");
  CHECK(j["best"]["peak_fraction"].get<double>() == doctest::Approx(1.0));
  CHECK(j["best"]["schedule_json"]["unroll_jam"]["y"] == 4);
  REQUIRE(j["all"].size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(j["all"][i]["id"] == i);
    CHECK(j["all"][i]["status"] == "ok");
  }
  std::string text = report_to_json(rep);
  CHECK(text.find("time") == std::string::npos);
  CHECK(text.find("host") == std::string::npos);
}

TEST_CASE("compile stats mirror the pipeline artifacts") {
  ConvSpec sp = desk_spec();
  Schedule s = desk_schedule();
  const MachineConfig mc;
  Fallible<CompileResult> res = compile_schedule(sp, s, mc);
  REQUIRE(res.ok());
  Workload w = make_workload(sp);
  RunResult rr = run_compiled(res.value(), w, mc);

  json j = json::parse(compile_stats_json(res.value(), &rr));
  CHECK(j["filter_width_padded"] == 4);
  CHECK(j["rows"] == 12);
  CHECK(j["store_groups"] == 1);
  REQUIRE(j["windows"].size() == 4);
  CHECK(j["windows"][0]["tensor"] == "W");
  CHECK(j["windows"][1]["width_bits"] == 512);
  CHECK(j["fused_ops"] == 6);
  CHECK(j["instructions"] == 23);
  CHECK(j["kernel_cycles"] == 6);
  CHECK(j["total_cycles"] == 56);
  CHECK(j["peak_live_register_bytes"] == 96);
  CHECK(j.count("violations") == 0);
  CHECK(j["simulation"]["mac_events"] == 768);
  CHECK(j["simulation"]["output_checksum"] == "0xfef9e843ad8478e9");
  CHECK(j["simulation"]["vector_loads"] == 25);
}

TEST_CASE("forced compiles carry their violations into the stats") {
  ConvSpec sp = desk_spec();
  sp.flt_w = 3;  // odd filter + no padding: misaligned row starts
  Schedule s = desk_schedule();
  s.layout_input = DataLayout::canonical(TensorId::Input);

  CompileOptions opt;
  opt.enforce = false;
  Fallible<CompileResult> res = compile_schedule(sp, s, MachineConfig{}, opt);
  REQUIRE(res.ok());
  json j = json::parse(compile_stats_json(res.value(), nullptr));
  REQUIRE(j.count("violations") == 1);
  CHECK(j["violations"][0]["reason"] == "alignment");
  CHECK(j.count("simulation") == 0);
}
