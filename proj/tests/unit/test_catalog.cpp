#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "visinf/catalog.hpp"

using namespace visinf;
using nlohmann::json;

namespace {

const std::filesystem::path kData = VISINF_TEST_DATA;

json three_resnets() {
  return json::parse(R"({
    "dnns": [
      {"name": "ResNet-18", "exec_throughput": 12592, "accuracy_by_format": {"a": 0.682, "b": 0.6}},
      {"name": "ResNet-34", "exec_throughput": 6860, "accuracy_by_format": {"a": 0.719, "b": 0.65}},
      {"name": "ResNet-50", "exec_throughput": 4513, "accuracy_by_format": {"a": 0.7434, "b": 0.7}}
    ],
    "formats": [
      {"name": "a", "codec": "JPEG", "short_side": 480, "quality": 90, "preproc_throughput": 500, "lossless": false},
      {"name": "b", "codec": "OTHER", "short_side": 161, "quality": null, "preproc_throughput": 2000, "lossless": true}
    ]
  })");
}

std::filesystem::path temp_file(const std::string& name, const std::string& text) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST(LoadCatalog, ThreeResNets) {
  const auto c = load_catalog(kData / "catalog_resnet.json");
  ASSERT_EQ(c.dnns.size(), 3u);
  EXPECT_DOUBLE_EQ(c.dnn("ResNet-18").exec_throughput(), 12592);
  EXPECT_DOUBLE_EQ(c.dnn("ResNet-34").exec_throughput(), 6860);
  EXPECT_DOUBLE_EQ(c.dnn("ResNet-50").exec_throughput(), 4513);
  EXPECT_EQ(c.formats.size(), 2u);
  EXPECT_EQ(c.formats[1].codec, Codec::Other);
  EXPECT_FALSE(c.formats[1].quality.has_value());
}

TEST(LoadCatalog, EmptyDnnListRejected) {
  auto j = three_resnets();
  j["dnns"] = json::array();
  try {
    catalog_from_json(j);
    FAIL();
  } catch (const CatalogError& e) {
    EXPECT_STREQ(e.what(), "catalog must contain >=1 DNN");
  }
}

TEST(LoadCatalog, InvariantViolationsNameFieldAndValue) {
  auto j = three_resnets();
  j["dnns"][0]["accuracy_by_format"]["a"] = 1.2;
  try {
    catalog_from_json(j);
    FAIL();
  } catch (const CatalogError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("accuracy_by_format[a]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("1.2"), std::string::npos) << msg;
  }
  j = three_resnets();
  j["dnns"][1]["exec_throughput"] = 0;
  EXPECT_THROW(catalog_from_json(j), CatalogError);
  j = three_resnets();
  j["dnns"][1]["passthrough"] = 0;
  EXPECT_THROW(catalog_from_json(j), CatalogError);
  j = three_resnets();
  j["formats"][0]["short_side"] = 0;
  EXPECT_THROW(catalog_from_json(j), CatalogError);
  j = three_resnets();
  j["formats"][0]["preproc_throughput"] = -3;
  EXPECT_THROW(catalog_from_json(j), CatalogError);
}

TEST(LoadCatalog, DuplicatesAndParseErrors) {
  auto j = three_resnets();
  j["dnns"][2]["name"] = "ResNet-18";
  EXPECT_THROW(catalog_from_json(j), CatalogError);
  j = three_resnets();
  j["formats"][1]["name"] = "a";
  EXPECT_THROW(catalog_from_json(j), CatalogError);
  j = three_resnets();
  j["cascades"] = json::array({json::array({"ResNet-18", "NoSuchNet"})});
  EXPECT_THROW(catalog_from_json(j), CatalogError);
  EXPECT_THROW(load_catalog(temp_file("visinf_bad.json", "{\"dnns\": [")), CatalogError);
  EXPECT_THROW(load_catalog("/nonexistent/catalog.json"), CatalogError);
}

TEST(LoadCatalog, PerBatchThroughputUsesLargestBatch) {
  auto j = three_resnets();
  j["dnns"][0]["exec_throughput"] = json{{"1", 900.0}, {"64", 12592.0}, {"8", 5000.0}};
  const auto c = catalog_from_json(j);
  EXPECT_DOUBLE_EQ(c.dnn("ResNet-18").exec_throughput(), 12592);
}

TEST(GeneratePlans, CrossProductCardinality) {
  const auto c = catalog_from_json(three_resnets());
  const auto plans = generate_plans(c);
  EXPECT_EQ(plans.size(), 6u);
  EXPECT_EQ(plans[0].id, "ResNet-18@a");
  for (const auto& p : plans) {
    EXPECT_GT(p.est_throughput, 0);
    EXPECT_GE(p.est_accuracy, 0);
    EXPECT_LE(p.est_accuracy, 1);
    EXPECT_DOUBLE_EQ(p.est_throughput, std::min(p.format.preproc_throughput, p.cascade.stages()[0].exec_throughput));
  }
}

TEST(GeneratePlans, SingleDnnSingleFormatIsIdentity) {
  auto j = three_resnets();
  j["dnns"].erase(1);
  j["dnns"].erase(1);
  j["formats"].erase(1);
  const auto plans = generate_plans(catalog_from_json(j));
  ASSERT_EQ(plans.size(), 1u);
  EXPECT_EQ(plans[0].dnn_names, std::vector<std::string>{"ResNet-18"});
  EXPECT_EQ(plans[0].format.name, "a");
  EXPECT_DOUBLE_EQ(plans[0].est_accuracy, 0.682);
  EXPECT_DOUBLE_EQ(plans[0].est_throughput, 500);
}

TEST(GeneratePlans, TwentyFourConfigurationsOneFormat) {
  json j;
  j["dnns"] = json::array();
  for (int i = 0; i < 24; ++i) {
    j["dnns"].push_back({{"name", "cfg" + std::to_string(i)}, {"exec_throughput", 100 + i}, {"accuracy_by_format", {{"f", 0.5}}}});
  }
  j["formats"] = json::array({{{"name", "f"}, {"short_side", 256}, {"preproc_throughput", 3000}}});
  EXPECT_EQ(generate_plans(catalog_from_json(j)).size(), 24u);
}

TEST(GeneratePlans, DeclaredCascadesAddToSingles) {
  // 4 specialized filters x 6 targets declared as cascades; one format.
  json j;
  j["dnns"] = json::array();
  std::vector<std::string> filters, targets;
  for (int i = 0; i < 4; ++i) {
    filters.push_back("filter" + std::to_string(i));
    j["dnns"].push_back({{"name", filters.back()}, {"exec_throughput", 20000 + 1000 * i}, {"passthrough", 0.1 + 0.1 * i}});
  }
  for (int i = 0; i < 6; ++i) {
    targets.push_back("target" + std::to_string(i));
    j["dnns"].push_back({{"name", targets.back()}, {"exec_throughput", 1000 + 500 * i}});
  }
  j["formats"] = json::array({{{"name", "f"}, {"short_side", 256}, {"preproc_throughput", 3000}}});
  j["cascades"] = json::array();
  std::string header = "item_id,label";
  std::vector<std::string> ids;
  for (const auto& f : filters) {
    for (const auto& t : targets) {
      j["cascades"].push_back({f, t});
      ids.push_back(plan_id({f, t}, "f"));
    }
  }
  for (const auto& d : j["dnns"]) ids.push_back(plan_id({d["name"].get<std::string>()}, "f"));
  for (const auto& id : ids) header += "," + id;
  std::string body = header + "\n";
  for (int r = 0; r < 4; ++r) {
    body += "i" + std::to_string(r) + ",x";
    for (std::size_t c = 0; c < ids.size(); ++c) body += (c + r) % 2 ? ",x" : ",y";
    body += "\n";
  }
  const auto cal = temp_file("visinf_cal24.csv", body);
  j["calibration_path"] = cal.string();
  const auto c = catalog_from_json(j);
  const auto plans = generate_plans(c);
  std::size_t cascade_plans = 0;
  for (const auto& p : plans) cascade_plans += p.dnn_names.size() == 2;
  EXPECT_EQ(cascade_plans, 24u);
  EXPECT_EQ(plans.size(), (10u + 24u) * 1u);
  // Cumulative alpha: the target sees the filter's pass-through.
  const auto& p = *std::find_if(plans.begin(), plans.end(), [](const auto& x) { return x.id == "filter2+target0@f"; });
  EXPECT_DOUBLE_EQ(p.cascade.stages()[1].alpha, 0.3);
  EXPECT_NEAR(p.cascade.stages()[0].alpha, 1.0, 0);
}

TEST(GeneratePlans, CascadeWithoutCalibrationIsAnError) {
  auto j = three_resnets();
  j["cascades"] = json::array({json::array({"ResNet-18", "ResNet-50"})});
  EXPECT_THROW(generate_plans(catalog_from_json(j)), CatalogError);
}

TEST(EstimateAccuracy, Counts) {
  CalibrationSet cal;
  for (int i = 0; i < 100; ++i) {
    cal.item_ids.push_back(std::to_string(i));
    cal.labels.push_back(std::to_string(i % 7));
  }
  cal.predictions_by_plan["perfect"] = cal.labels;
  EXPECT_DOUBLE_EQ(estimate_accuracy("perfect", cal), 1.0);
  EXPECT_THROW(estimate_accuracy("missing", cal), CatalogError);

  // 50 hand-built items, 37 right.
  CalibrationSet half;
  std::vector<std::string> preds;
  for (int i = 0; i < 50; ++i) {
    half.item_ids.push_back("x" + std::to_string(i));
    half.labels.push_back(i % 2 ? "cat" : "dog");
    preds.push_back(i < 37 ? half.labels.back() : "bird");
  }
  half.predictions_by_plan["p"] = preds;
  EXPECT_DOUBLE_EQ(estimate_accuracy("p", half), 0.74);
}

TEST(EstimateAccuracy, LowResolutionFixture) {
  const auto c = load_catalog(kData / "catalog_lowres.json");
  ASSERT_TRUE(c.calibration);
  EXPECT_EQ(c.calibration->size(), 10000u);
  EXPECT_DOUBLE_EQ(estimate_accuracy("ResNet-50@161-PNG", *c.calibration), 0.75);
  EXPECT_DOUBLE_EQ(estimate_accuracy("ResNet-34@full", *c.calibration), 0.7272);
}

TEST(EstimateAccuracy, PermutationInvariant) {
  const auto c = load_catalog(kData / "catalog_lowres.json");
  auto cal = *c.calibration;
  std::vector<std::size_t> perm(cal.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(3);
  std::shuffle(perm.begin(), perm.end(), rng);
  CalibrationSet shuffled = cal;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shuffled.item_ids[i] = cal.item_ids[perm[i]];
    shuffled.labels[i] = cal.labels[perm[i]];
    for (auto& [plan, preds] : shuffled.predictions_by_plan) preds[i] = cal.predictions_by_plan.at(plan)[perm[i]];
  }
  for (const auto& [plan, _] : cal.predictions_by_plan) {
    EXPECT_DOUBLE_EQ(estimate_accuracy(plan, shuffled), estimate_accuracy(plan, cal));
  }
}

TEST(Calibration, RejectsRaggedRows) {
  EXPECT_THROW(load_calibration(temp_file("visinf_rag.csv", "item_id,label,p\na,1,1\nb,2\n")), CatalogError);
  EXPECT_THROW(load_calibration(temp_file("visinf_hdr.csv", "id,label,p\na,1,1\n")), CatalogError);
}

TEST(EstimatePassthrough, Proportions) {
  std::vector<double> s(1000, 0.0);
  for (int i = 0; i < 100; ++i) s[std::size_t(i)] = 1.0;
  EXPECT_DOUBLE_EQ(estimate_passthrough(s, 0.5), 0.1);
  EXPECT_DOUBLE_EQ(estimate_passthrough(s, 2.0), 0.0);
  EXPECT_THROW(estimate_passthrough({}, 0.5), std::invalid_argument);
}

TEST(EstimatePassthrough, UniformScoresAgainstExactCount) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> s(20000);
  for (auto& v : s) v = u(rng);
  const auto exact = std::count_if(s.begin(), s.end(), [](double v) { return v >= 0.25; });
  EXPECT_DOUBLE_EQ(estimate_passthrough(s, 0.25), double(exact) / double(s.size()));
  EXPECT_NEAR(estimate_passthrough(s, 0.25), 0.75, 0.02);
}

TEST(EstimatePassthrough, NonIncreasingInThreshold) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> s(500);
  for (auto& v : s) v = n(rng);
  double prev = 1.0;
  for (double t = -4; t <= 4; t += 0.05) {
    const double f = estimate_passthrough(s, t);
    EXPECT_LE(f, prev);
    prev = f;
  }
}
