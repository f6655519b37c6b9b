#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "fdan/checkpoint.hpp"
#include "fdan/util.hpp"

namespace fs = std::filesystem;
using namespace fdan;

namespace {

ModelParams demo_params() {
  ModelConfig cfg;
  cfg.d = 8;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.enc_channels = {4, 4, 4, 8, 8};
  cfg.l_max = 16;
  cfg.n_max_line = 16;
  cfg.n_max_flat = 64;
  cfg.variant = Variant::kSumPe;
  cfg.seed = 99;
  return ModelParams::init(cfg, Vocabulary::from_alphabet("abc", {"P", "Q"}));
}

}  // namespace

TEST_CASE("checkpoint save -> load -> save is byte-identical") {
  ModelParams p = demo_params();
  std::vector<NamedArray> extra{{"opt.t", {1}, {17.0}}, {"opt.rng", {2}, {1.0, 2.0}}};
  std::vector<std::pair<std::string, std::string>> meta{{"mode", "fasterdan"}};
  std::string a = "ckpt_a.fdan", b = "ckpt_b.fdan";
  save_model(a, p, meta, extra);
  LoadedModel lm = load_model(a);
  std::vector<std::pair<std::string, std::string>> meta2{{"mode", lm.meta.at("mode")}};
  save_model(b, lm.params, meta2, lm.extra_arrays);
  CHECK(read_text_file(a) == read_text_file(b));
  std::remove(a.c_str());
  std::remove(b.c_str());
}

TEST_CASE("checkpoints restore the vocabulary, config and weights") {
  ModelParams p = demo_params();
  std::string path = "ckpt_meta.fdan";
  save_model(path, p);
  LoadedModel lm = load_model(path);
  CHECK(lm.params.cfg.d == 8);
  CHECK(lm.params.cfg.variant == Variant::kSumPe);
  CHECK(lm.params.vocab.characters() == p.vocab.characters());
  CHECK(lm.params.vocab.entity_classes() == p.vocab.entity_classes());
  CHECK(lm.params.embedding->val == p.embedding->val);
  CHECK(lm.params.layers[0].ffn_w1->val == p.layers[0].ffn_w1->val);
  std::remove(path.c_str());
}

TEST_CASE("a wrong magic or truncated file is rejected") {
  write_text_file("bad.fdan", "NOPE....");
  CHECK_THROWS_WITH_AS(load_model("bad.fdan"), doctest::Contains("FDAN"),
                       std::runtime_error);
  std::remove("bad.fdan");

  ModelParams p = demo_params();
  save_model("trunc.fdan", p);
  std::string full = read_text_file("trunc.fdan");
  write_text_file("trunc.fdan", full.substr(0, full.size() / 2));
  CHECK_THROWS_AS(load_model("trunc.fdan"), std::runtime_error);
  std::remove("trunc.fdan");
}

TEST_CASE("checkpoint entries are little-endian with the documented layout") {
  ModelParams p = demo_params();
  std::string path = "layout.fdan";
  save_model(path, p);
  std::string bytes = read_text_file(path);
  REQUIRE(bytes.size() > 6);
  CHECK(bytes.substr(0, 4) == "FDAN");
  CHECK(static_cast<unsigned char>(bytes[4]) == 1);  // version 1, LE u16
  CHECK(static_cast<unsigned char>(bytes[5]) == 0);
  std::remove(path.c_str());
}

TEST_CASE("a missing parameter entry is reported by name") {
  ModelParams p = demo_params();
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<NamedArray> arrays;
  std::map<std::string, std::string> loaded_meta;
  save_model("partial.fdan", p);
  read_checkpoint_entries("partial.fdan", loaded_meta, arrays);
  arrays.pop_back();  // drop proj.wp
  for (const auto& [k, v] : loaded_meta) meta.emplace_back(k, v);
  // meta map is sorted by key; rebuild the canonical file by hand
  write_checkpoint_entries("partial.fdan", meta, arrays);
  CHECK_THROWS_WITH_AS(load_model("partial.fdan"), doctest::Contains("proj.wp"),
                       std::runtime_error);
  std::remove("partial.fdan");
}
