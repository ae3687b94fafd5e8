#include <gtest/gtest.h>

#include <cstring>

#include "odmn/io.hpp"
#include "test_helpers.hpp"

using namespace odmn;
using namespace odmn::io;

namespace {

std::size_t count_lines(const std::string &s) { return std::size_t(std::count(s.begin(), s.end(), '\n')); }

std::string error_of(const std::function<void()> &fn) {
  try {
    fn();
  } catch (const Error &e) {
    return e.what();
  }
  return {};
}

} // namespace

TEST(Format, ShortestRoundTrip) {
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    const double x = std::ldexp(rng.uniform(-1.0, 1.0), int(rng.index(200)) - 100);
    const std::string s = fmt(x);
    EXPECT_EQ(std::strtod(s.c_str(), nullptr), x);
  }
  EXPECT_EQ(fmt(0.5), "0.5");
}

TEST(CheckpointFile, RoundTripIsBitExact) {
  Rng rng(2);
  Checkpoint c{init_parameters(4, rng), {42, "00ff00ff00ff00ff", 200}};
  c.params.z[3] = 1e-300;
  c.params.alpha[1] = -0.1 - 0.2;
  c.params.theta[0] = std::nextafter(1.0, 2.0);
  const Checkpoint back = checkpoint_from_string(checkpoint_to_string(c));
  EXPECT_EQ(back.params.depth, 4);
  const auto a = c.params.flatten(), b = back.params.flatten();
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0);
  EXPECT_EQ(back.info.seed, 42u);
  EXPECT_EQ(back.info.dataset_hash, "00ff00ff00ff00ff");
  EXPECT_EQ(back.info.epochs, 200);
  EXPECT_EQ(back.params.z.size(), 16u);
  EXPECT_EQ(back.params.theta.size(), 15u);
  EXPECT_EQ(checkpoint_to_string(back), checkpoint_to_string(c));
}

TEST(CheckpointFile, RejectsBadDocuments) {
  Rng rng(3);
  json j = json::parse(checkpoint_to_string({init_parameters(2, rng), {}}));
  json v = j;
  v["version"] = 2;
  EXPECT_NE(error_of([&] { checkpoint_from_string(v.dump()); }).find("unsupported version 2"), std::string::npos);
  json f = j;
  f["format"] = "something-else";
  EXPECT_THROW(checkpoint_from_string(f.dump()), DataError);
  json s = j;
  s["theta"].push_back(0.5);
  EXPECT_THROW(checkpoint_from_string(s.dump()), DataError);
  json m = j;
  m.erase("phi");
  EXPECT_THROW(checkpoint_from_string(m.dump()), DataError);
  EXPECT_THROW(checkpoint_from_string("{not json"), DataError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.json"), DataError);
}

TEST(DatasetFile, RoundTripAndLineCount) {
  Rng rng(4);
  const ParameterSet teacher = init_parameters(2, rng);
  const Dataset d = synthesize_teacher_dataset(teacher, PhaseMode::two_phase, 25, rng);
  const std::string text = dataset_to_string(d);
  EXPECT_EQ(count_lines(text), 25u);
  const Dataset back = dataset_from_string(text);
  ASSERT_EQ(back.samples.size(), 25u);
  EXPECT_EQ(back.provenance, "teacher");
  for (std::size_t k = 0; k < 25; ++k) {
    EXPECT_EQ(back.samples[k].phase1, d.samples[k].phase1);
    EXPECT_EQ(*back.samples[k].phase2, *d.samples[k].phase2);
    EXPECT_EQ(back.samples[k].target, d.samples[k].target);
  }
  EXPECT_EQ(dataset_to_string(back), text);
}

TEST(DatasetFile, FullMatricesAndSinglePhase) {
  Rng rng(5);
  Dataset d;
  d.samples.push_back({odmn::testing::random_spd_stiffness(rng), std::nullopt, odmn::testing::random_spd_stiffness(rng)});
  const Dataset back = dataset_from_string(dataset_to_string(d));
  EXPECT_FALSE(back.samples[0].phase2.has_value());
  EXPECT_EQ(back.samples[0].phase1, d.samples[0].phase1);
}

TEST(DatasetFile, ErrorsNameTheLine) {
  Rng rng(6);
  const Dataset d = synthesize_teacher_dataset(init_parameters(1, rng), PhaseMode::two_phase, 3, rng);
  std::string text = dataset_to_string(d);
  const auto second = text.find('\n') + 1;
  const std::string broken = text.substr(0, second) + "{\"oops\"\n" + text.substr(second);
  EXPECT_NE(error_of([&] { dataset_from_string(broken, "d.jsonl"); }).find("d.jsonl line 2"), std::string::npos);

  json rec = json::parse(text.substr(0, second - 1));
  rec["target"][1] = 12345.0;
  EXPECT_NE(error_of([&] { dataset_from_string(rec.dump()); }).find("not symmetric"), std::string::npos);
  rec = json::parse(text.substr(0, second - 1));
  rec["version"] = 7;
  EXPECT_NE(error_of([&] { dataset_from_string(rec.dump()); }).find("unsupported version"), std::string::npos);
  rec = json::parse(text.substr(0, second - 1));
  rec["units"] = "MPa";
  EXPECT_THROW(dataset_from_string(rec.dump()), DataError);
  EXPECT_THROW(dataset_from_string(""), DataError);
}

TEST(MaterialFile, ParsesEachLaw) {
  const std::string text = R"({"format": "odmn-material", "version": 1, "units": "MPa", "phases": [
      {"law": "crystal_plasticity", "xi0": 25.3, "xi_inf": 88.6},
      {"law": "elastic", "stiffness": {"C11": 191000, "C12": 162000, "C44": 42200}}]})";
  const MaterialSpec m = material_from_string(text);
  ASSERT_EQ(m.phases.size(), 2u);
  const auto *cp = dynamic_cast<const CrystalPlasticityLaw *>(m.phases[0].get());
  ASSERT_NE(cp, nullptr);
  EXPECT_EQ(cp->params().xi0, 25.3);
  EXPECT_EQ(cp->params().h0, 1020.0);
  EXPECT_EQ(m.phases[1]->name(), ElasticLaw(StiffnessMatrix::Identity()).name());

  const std::string lin = R"({"format": "odmn-material", "version": 1, "units": "MPa",
      "phases": [{"law": "linear_elastic", "stiffness": {"C11": 3, "C12": 1, "C44": 1}}]})";
  EXPECT_EQ(material_from_string(lin).phases.size(), 1u);
}

TEST(MaterialFile, RejectsBadInput) {
  EXPECT_THROW(material_from_string(R"({"format": "odmn-material", "version": 1, "units": "GPa", "phases": []})"),
               DataError);
  EXPECT_THROW(material_from_string(R"({"format": "odmn-material", "version": 1, "units": "MPa",
      "phases": [{"law": "viscous"}]})"),
               DataError);
  EXPECT_THROW(material_from_string(R"({"format": "odmn-material", "version": 1, "units": "MPa",
      "phases": [{"law": "crystal_plasticity", "n": 0}]})"),
               DataError);
  EXPECT_THROW(material_from_string(R"({"format": "odmn-material", "version": 1, "units": "MPa",
      "phases": [{"law": "crystal_plasticity", "slip_systems": 24}]})"),
               DataError);
}

TEST(LoadPathFile, ExplicitSteps) {
  const auto steps = load_path_from_string(R"({"format": "odmn-loadpath", "version": 1, "steps": [
      {"F": [[1.01, 0, 0], [0, 1, 0], [0, 0, 1]], "dt": 0.5},
      {"F": [1.02, 0.01, 0, 0, 1, 0, 0, 0, 1], "dt": 0.25}]})");
  ASSERT_EQ(steps.size(), 2u);
  EXPECT_EQ(steps[0].f(0, 0), 1.01);
  EXPECT_EQ(steps[1].f(0, 1), 0.01);
  EXPECT_EQ(steps[1].dt, 0.25);
  EXPECT_THROW(load_path_from_string(R"({"format": "odmn-loadpath", "version": 1, "steps": [
      {"F": [[-1, 0, 0], [0, 1, 0], [0, 0, 1]], "dt": 1}]})"),
               DataError);
  EXPECT_THROW(load_path_from_string(R"({"format": "odmn-loadpath", "version": 1, "steps": [
      {"F": [[1, 0, 0], [0, 1, 0], [0, 0, 1]], "dt": 0}]})"),
               DataError);
}

TEST(LoadPathFile, RampShorthand) {
  const auto steps = load_path_from_string(R"({"format": "odmn-loadpath", "version": 1,
      "ramp": {"component": "F11", "rate": 1.0, "final": 1.3, "steps": 30}})");
  ASSERT_EQ(steps.size(), 30u);
  EXPECT_NEAR(steps.back().f(0, 0), 1.3, 1e-15);
  EXPECT_NEAR(steps[0].f(0, 0), 1.01, 1e-15);
  EXPECT_NEAR(steps[0].dt, 0.01, 1e-15);
  EXPECT_EQ(steps[5].f(1, 1), 1.0);
  const auto shear = load_path_from_string(R"({"format": "odmn-loadpath", "version": 1,
      "ramp": {"component": "F12", "rate": 0.001, "final": 0.02, "steps": 4}})");
  EXPECT_NEAR(shear[1].f(0, 1), 0.01, 1e-15);
  EXPECT_NEAR(shear[1].dt, 5.0, 1e-12);
  EXPECT_THROW(load_path_from_string(R"({"format": "odmn-loadpath", "version": 1,
      "ramp": {"component": "G11", "rate": 1, "final": 1.1, "steps": 2}})"),
               DataError);
  EXPECT_THROW(load_path_from_string(R"({"format": "odmn-loadpath", "version": 1,
      "ramp": {"component": "F11", "rate": 1, "final": 0.9, "steps": 2}})"),
               DataError);
}

TEST(Csv, HistoryLayout) {
  EXPECT_EQ(history_header(), "step,time,F11,F12,F13,F21,F22,F23,F31,F32,F33,P11,P12,P13,P21,P22,P23,P31,P32,P33,"
                              "residual,iterations\n");
  StepResult r;
  r.state.time = 0.5;
  r.state.f_bar << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  r.p_bar = -r.state.f_bar;
  r.residual = 1e-12;
  r.iterations = 3;
  EXPECT_EQ(history_row(4, r), "4,0.5,1,2,3,4,5,6,7,8,9,-1,-2,-3,-4,-5,-6,-7,-8,-9,1e-12,3\n");
}

TEST(Csv, CurvesAndPoleFigures) {
  EXPECT_EQ(curves_csv({{0, 0.5, 0.25}, {1, 0.125, 0.0625}}),
            "epoch,train_error,val_error\n0,0.5,0.25\n1,0.125,0.0625\n");
  const auto pf = pole_figure({{Quat(1, 0, 0, 0), 1.0}}, {0, 0, 1});
  EXPECT_EQ(count_lines(pole_figure_csv(pf)), 4u);
}

TEST(Csv, OrientationDumpRoundTrip) {
  Rng rng(7);
  const OrientationSamples a{{random_quat(rng), 0.3}, {random_quat(rng), 0.7}};
  const OrientationSamples b{{random_quat(rng), 0.4}, {random_quat(rng), 0.6}};
  const std::string text = orientation_header() + orientation_rows(1, a) + orientation_rows(2, b);
  const auto last = orientations_from_csv(text, -1, "dump");
  ASSERT_EQ(last.size(), 2u);
  EXPECT_EQ(last[1].weight, 0.6);
  EXPECT_LT((last[0].q - b[0].q).norm(), 1e-15);
  EXPECT_EQ(orientations_from_csv(text, 1, "dump")[0].weight, 0.3);
  EXPECT_THROW(orientations_from_csv(text, 9, "dump"), DataError);
  EXPECT_THROW(orientations_from_csv("x,y\n", -1, "dump"), DataError);
}

TEST(Hash, StableAndSensitive) {
  EXPECT_EQ(content_hash(""), "cbf29ce484222325");
  EXPECT_EQ(content_hash("a"), "af63dc4c8601ec8c");
  EXPECT_NE(content_hash("ab"), content_hash("ba"));
}
