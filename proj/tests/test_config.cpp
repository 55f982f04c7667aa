#include <gtest/gtest.h>

#include <algorithm>

#include "stripdet/run_config.hpp"

#ifndef STRIPDET_CONFIG_DIR
#error "STRIPDET_CONFIG_DIR must point at the shipped configs"
#endif

using namespace stripdet;

namespace {

bool has(const std::vector<std::string>& v, const std::string& s) { return std::find(v.begin(), v.end(), s) != v.end(); }

}  // namespace

TEST(Config, EmptyDocumentIsReference) {
  const RunConfig cfg = parse_run_config("");
  EXPECT_EQ(cfg.model.c0, reference_config().c0);
  EXPECT_EQ(cfg.model.k, 7u);
  EXPECT_EQ(cfg.model.anchors.size(), 3u);
  EXPECT_TRUE(has(cfg.defaulted, "k"));
  EXPECT_TRUE(has(cfg.defaulted, "anchor.*"));
}

TEST(Config, ParsesValuesAndComments) {
  const RunConfig cfg = parse_run_config(
      "# comment\n"
      "k = 11   # trailing\n"
      "stage_depths = 1, 2, 3\n"
      "grid.x_range = 0, 20.48\n"
      "points = scan.bin\n"
      "seed = 42\n");
  EXPECT_EQ(cfg.model.k, 11u);
  EXPECT_EQ(cfg.model.stage_depths, (std::array<std::size_t, 3>{1, 2, 3}));
  EXPECT_DOUBLE_EQ(cfg.model.grid.x_range.second, 20.48);
  EXPECT_EQ(cfg.points, "scan.bin");
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_FALSE(has(cfg.defaulted, "k"));
  EXPECT_TRUE(has(cfg.defaulted, "c0"));
}

TEST(Config, FormatRoundTrip) {
  RunConfig cfg = parse_run_config("base = toy\nk = 5\nfocal.gamma = 1.5\nweights = w.sdw\n");
  const std::string text = format_run_config(cfg);
  const RunConfig back = parse_run_config(text);
  EXPECT_EQ(format_run_config(back), text);
  EXPECT_EQ(back.model.k, 5u);
  EXPECT_EQ(back.model.c0, toy_config().c0);
  EXPECT_DOUBLE_EQ(back.model.focal_gamma, 1.5);
  EXPECT_EQ(back.weights, "w.sdw");
  EXPECT_TRUE(back.defaulted.empty());
}

TEST(Config, RejectsUnknownKey) {
  try {
    parse_run_config("k = 7\nstage_chanels = 1, 2, 3\n");
    FAIL() << "misspelled key accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("stage_chanels"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Config, RejectsDuplicatesAndMalformedLines) {
  EXPECT_THROW(parse_run_config("k = 7\nk = 9\n"), ConfigError);
  EXPECT_THROW(parse_run_config("k 7\n"), ConfigError);
  EXPECT_THROW(parse_run_config("k = seven\n"), ConfigError);
  EXPECT_THROW(parse_run_config("stage_depths = 1, 2\n"), ConfigError);
  EXPECT_THROW(parse_run_config("anchor.Car = 1, 2, 3\n"), ConfigError);
}

TEST(Config, BaseMustComeFirst) {
  EXPECT_THROW(parse_run_config("k = 7\nbase = toy\n"), ConfigError);
  EXPECT_THROW(parse_run_config("base = huge\n"), ConfigError);
  EXPECT_EQ(parse_run_config("base = toy\n").model.c0, 16u);
}

TEST(Config, AnchorsReplaceDefaults) {
  const RunConfig cfg = parse_run_config("anchor.Truck = 2.5, 8, 3, -1.2, 0.6, 0.45\n");
  ASSERT_EQ(cfg.model.anchors.size(), 1u);
  EXPECT_EQ(cfg.model.anchors[0].class_name, "Truck");
  EXPECT_DOUBLE_EQ(cfg.model.anchors[0].length, 8.0);
  EXPECT_EQ(cfg.model.anchors[0].yaws.size(), 2u);
  EXPECT_FALSE(has(cfg.defaulted, "anchor.*"));
}

TEST(Config, ValidationErrorsBecomeConfigErrors) {
  EXPECT_THROW(parse_run_config("k = 6\n"), ConfigError);
  EXPECT_THROW(parse_run_config("c0 = 0\n"), ConfigError);
  EXPECT_THROW(parse_run_config("anchor.Car = 1.6, 3.9, 1.56, -1.78, 0.4, 0.45\n"), ConfigError);
  EXPECT_THROW(parse_run_config("grid.pillar_dx = 0\n"), ConfigError);
}

TEST(Config, ShippedConfigsParse) {
  const RunConfig ref = load_run_config(std::string(STRIPDET_CONFIG_DIR) + "/reference.cfg");
  EXPECT_EQ(format_run_config(ref), format_run_config(parse_run_config("")));
  const RunConfig toy = load_run_config(std::string(STRIPDET_CONFIG_DIR) + "/toy.cfg");
  EXPECT_EQ(toy.model.grid.height(), 128u);
  EXPECT_EQ(toy.model.grid.width(), 128u);
  EXPECT_EQ(toy.model.num_classes(), 1u);
  EXPECT_THROW(load_run_config(std::string(STRIPDET_CONFIG_DIR) + "/missing.cfg"), ConfigError);
}
