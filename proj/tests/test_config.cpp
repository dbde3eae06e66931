#include "doctest.h"
#include "fixtures.hpp"

#include "hgnn/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace hgnn;
using hgnn::testing::small_config;
using nlohmann::json;

namespace {

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    line.erase(line.find_last_not_of(" \t\r") + 1);
    out.push_back(line);
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool mentions(const std::vector<std::string>& v, const std::string& needle) {
  return std::any_of(v.begin(), v.end(), [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("architecture names") {
  CHECK(architecture_from_string("two-pseudo") == Architecture::two_level_pseudo);
  CHECK(architecture_from_string("TE") == Architecture::two_level_embedding);
  CHECK(architecture_from_string("one_level") == Architecture::one_level);
  CHECK(short_label(Architecture::two_level) == "T");
  CHECK_THROWS(architecture_from_string("three"));
}

TEST_CASE("json round trip for every architecture and operator") {
  for (auto arch : kAllArchitectures) {
    for (auto op : kAllOperators) {
      auto c = small_config(arch, op);
      c.gnn_layers[0].dropout = 0.25;
      c.gnn_layers[1].batch_norm = BatchNormSpec{0.3, 1e-4};
      c.gnn_layers[1].skip = true;
      c.scheduler.kind = SchedulerKind::cyclic;
      const json j = c;
      const ModelConfig back = j.get<ModelConfig>();
      CHECK(json(back) == j);
    }
  }
}

TEST_CASE("conditional fields are enforced") {
  json j = small_config(Architecture::one_level, OperatorKind::gcn);
  SUBCASE("unknown key") {
    j["colour"] = "blue";
    CHECK_THROWS_AS(j.get<ModelConfig>(), ConfigError);
  }
  SUBCASE("embedding dim outside its architecture") {
    j["embedding_dim"] = 12;
    CHECK_THROWS_AS(j.get<ModelConfig>(), ConfigError);
  }
  SUBCASE("K outside tag and cheb") {
    j["K"] = 2;
    CHECK_THROWS_AS(j.get<ModelConfig>(), ConfigError);
  }
  SUBCASE("graph aggregation needs the graph operator") {
    j["graph_aggregation"] = "max";
    CHECK_THROWS_AS(j.get<ModelConfig>(), ConfigError);
  }
  SUBCASE("missing stack") {
    json t = small_config(Architecture::two_level_pseudo, OperatorKind::gcn);
    t.erase("concat_gnn_layers");
    CHECK_THROWS_AS(t.get<ModelConfig>(), ConfigError);
  }
  SUBCASE("rmsprop fields on adam") {
    j["optimizer"]["alpha"] = 0.9;
    CHECK_THROWS_AS(j.get<ModelConfig>(), ConfigError);
  }
  SUBCASE("too many layers") {
    j["final_dense_layers"] = json::array({j["final_dense_layers"][0], j["final_dense_layers"][0],
                                           j["final_dense_layers"][0], j["final_dense_layers"][0]});
    CHECK_THROWS_AS(j.get<ModelConfig>(), ConfigError);
  }
}

TEST_CASE("reference configuration parses; its out-of-range values are reported, not rejected") {
  const ModelConfig c = load_model_config(HGNN_TEST_DATA "/reference_config.json");
  CHECK(c.architecture == Architecture::two_level_pseudo);
  CHECK(c.pooling == ReduceMode::sum);
  const auto v = range_violations(c);
  CHECK(mentions(v, "momentum"));
  CHECK(mentions(v, "dropout"));
  CHECK(mentions(v, "alpha"));
  auto inside = small_config(Architecture::two_level, OperatorKind::tag, 16);
  inside.sequence_dense_layers[0].units = 16;
  inside.scheduler.kind = SchedulerKind::step;
  CAPTURE(json(range_violations(inside)).dump());
  CHECK(range_violations(inside).empty());
}

TEST_CASE("dump reproduces the reference listing") {
  const ModelConfig c = load_model_config(HGNN_TEST_DATA "/reference_config.json");
  const DumpSummary summary{12, 0.9858, 0.0684, 0.2745};
  auto produced = lines(format_best_config(c, InputDims{24, 7, 10, 6}, summary));
  const auto expected = lines(read_file(HGNN_TEST_DATA "/reference_listing.txt"));
  REQUIRE(produced.size() > 2);
  CHECK(produced.front() == "Best hyperparameters found were:");
  CHECK(produced[1] == "Architecture: two_level_pseudo");
  produced.erase(produced.begin() + 1);
  REQUIRE(produced.size() >= expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CAPTURE(i);
    CHECK(produced[i] == expected[i]);
  }
  const std::vector<std::string> tail(produced.end() - 6, produced.end());
  CHECK(tail == std::vector<std::string>{"Output Size: 2", "Best batch size: 128", "Best epoch: 12",
                                         "Best accuracy: 0.9858", "Best loss: 0.0684", "Best loss std: 0.2745"});
}

TEST_CASE("dump lists operator-specific fields") {
  auto c = small_config(Architecture::two_level_embedding, OperatorKind::graph);
  const auto text = format_best_config(c, InputDims{10, 3, 4, 6});
  CHECK(text.find(" GraphConv Aggregation: mean") != std::string::npos);
  CHECK(text.find("Activity Embedding Dim: 5") != std::string::npos);
  c = small_config(Architecture::one_level, OperatorKind::cheb);
  CHECK(format_best_config(c, InputDims{10, 3, 4, 6}).find(" Filter Order K: 2") != std::string::npos);
}

}  // TEST_SUITE
