#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fragalign/checkpoint.hpp"
#include "fragalign/optimizer.hpp"

using namespace fragalign;
using nlohmann::json;

namespace {

std::filesystem::path tmp_path(const std::string& name) {
  std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "fragalign_ckpt_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint sample_checkpoint() {
  Checkpoint ckpt;
  Dims dims{3, 4, 5};
  ckpt.params = init_params(dims, 2, 17);
  ckpt.params.image_proj(0, 0) = -0.0;  // signed zero must survive
  ckpt.params.relations[1].bias(2) = 1e-300;
  ckpt.relations.add("nsubj");
  ckpt.relations.add("amod");
  ckpt.words = WordTable(3);
  Vec v(3);
  v << 0.1, -2.5, 1e17;
  ckpt.words.insert("cat", v);
  v << 0, 0, 1;
  ckpt.words.insert("dog", v);
  ckpt.pooled_sentences = false;
  ckpt.run_config = {{"mode", "combined_mil"}, {"lr", 0.01}, {"epochs", 15}};
  return ckpt;
}

}  // namespace

TEST_CASE("checkpoints round-trip every field bitwise") {
  Checkpoint ckpt = sample_checkpoint();
  std::filesystem::path path = tmp_path("roundtrip.ckpt");
  save_checkpoint(ckpt, path.string());
  Checkpoint loaded = load_checkpoint(path.string());

  CHECK(loaded.params.dims.dim_word == 3);
  CHECK(loaded.params.dims.dim_embed == 4);
  CHECK(loaded.params.dims.dim_image == 5);
  CHECK(loaded.params.image_proj == ckpt.params.image_proj);
  CHECK(std::signbit(loaded.params.image_proj(0, 0)));
  REQUIRE(loaded.params.relations.size() == 2);
  for (int r = 0; r < 2; ++r) {
    CHECK(loaded.params.relations[r].weight == ckpt.params.relations[r].weight);
    CHECK(loaded.params.relations[r].bias == ckpt.params.relations[r].bias);
  }
  CHECK(loaded.relations.names() == ckpt.relations.names());
  CHECK(loaded.words.words() == ckpt.words.words());
  CHECK(loaded.words.dim() == 3);
  CHECK(loaded.words.vector("cat") == ckpt.words.vector("cat"));
  CHECK(loaded.words.vector("dog") == ckpt.words.vector("dog"));
  CHECK(loaded.pooled_sentences == ckpt.pooled_sentences);
  CHECK(loaded.run_config == ckpt.run_config);

  // saving the loaded copy reproduces the file byte for byte
  std::filesystem::path path2 = tmp_path("roundtrip2.ckpt");
  save_checkpoint(loaded, path2.string());
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("pooled checkpoints may carry no relations") {
  Checkpoint ckpt;
  Dims dims{3, 3, 4};
  ckpt.params = init_params(dims, 0, 5);
  ckpt.pooled_sentences = true;
  ckpt.words = WordTable(3);
  Vec v(3);
  v << 1, 2, 3;
  ckpt.words.insert("only", v);
  std::filesystem::path path = tmp_path("pooled.ckpt");
  save_checkpoint(ckpt, path.string());
  Checkpoint loaded = load_checkpoint(path.string());
  CHECK(loaded.pooled_sentences);
  CHECK(loaded.params.relations.empty());
  CHECK(loaded.relations.size() == 0);
  CHECK(loaded.words.vector("only") == ckpt.words.vector("only"));
}

TEST_CASE("saving validates shape agreement and finiteness") {
  Checkpoint ckpt = sample_checkpoint();
  ckpt.relations.add("extra");  // three names, two weight sets
  CHECK_THROWS_WITH_AS(
      save_checkpoint(ckpt, tmp_path("bad.ckpt").string()),
      doctest::Contains("does not match the relation vocabulary"),
      std::runtime_error);

  Checkpoint nan_ckpt = sample_checkpoint();
  nan_ckpt.params.image_proj(1, 1) = std::nan("");
  CHECK_THROWS_WITH_AS(
      save_checkpoint(nan_ckpt, tmp_path("bad.ckpt").string()),
      doctest::Contains("non-finite"), std::runtime_error);
}

TEST_CASE("loader rejects files that are not checkpoints") {
  CHECK_THROWS_WITH_AS(
      (void)load_checkpoint(tmp_path("missing.ckpt").string()),
      doctest::Contains("cannot open"), std::runtime_error);

  std::filesystem::path garbage = tmp_path("garbage.ckpt");
  spit(garbage, "definitely not a checkpoint, long enough to read");
  CHECK_THROWS_WITH_AS((void)load_checkpoint(garbage.string()),
                       doctest::Contains("not a checkpoint file"),
                       std::runtime_error);

  std::filesystem::path tiny = tmp_path("tiny.ckpt");
  spit(tiny, "FR");
  CHECK_THROWS_AS((void)load_checkpoint(tiny.string()), std::runtime_error);
}

TEST_CASE("loader rejects version, truncation, and trailing bytes") {
  Checkpoint ckpt = sample_checkpoint();
  std::filesystem::path good = tmp_path("good.ckpt");
  save_checkpoint(ckpt, good.string());
  std::string bytes = slurp(good);

  std::string wrong_version = bytes;
  wrong_version[8] = 99;  // version field follows the 8-byte magic
  std::filesystem::path vpath = tmp_path("version.ckpt");
  spit(vpath, wrong_version);
  CHECK_THROWS_WITH_AS((void)load_checkpoint(vpath.string()),
                       doctest::Contains("unsupported checkpoint version"),
                       std::runtime_error);

  std::filesystem::path tpath = tmp_path("truncated.ckpt");
  spit(tpath, bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_WITH_AS((void)load_checkpoint(tpath.string()),
                       doctest::Contains("truncated"), std::runtime_error);

  std::filesystem::path hpath = tmp_path("headerless.ckpt");
  spit(hpath, bytes.substr(0, 16));  // magic + version + header length only
  CHECK_THROWS_AS((void)load_checkpoint(hpath.string()), std::runtime_error);

  std::filesystem::path xpath = tmp_path("trailing.ckpt");
  spit(xpath, bytes + "x");
  CHECK_THROWS_WITH_AS((void)load_checkpoint(xpath.string()),
                       doctest::Contains("trailing bytes"),
                       std::runtime_error);
}

TEST_CASE("loader cross-checks the tensor manifest against dims") {
  Checkpoint ckpt = sample_checkpoint();
  std::filesystem::path good = tmp_path("manifest.ckpt");
  save_checkpoint(ckpt, good.string());
  std::string bytes = slurp(good);

  // corrupt the declared embed dim inside the JSON header; the manifest rows
  // no longer agree with it
  std::size_t pos = bytes.find("\"embed\":4");
  REQUIRE(pos != std::string::npos);
  bytes[pos + 8] = '3';
  std::filesystem::path bad = tmp_path("manifest_bad.ckpt");
  spit(bad, bytes);
  CHECK_THROWS_WITH_AS((void)load_checkpoint(bad.string()),
                       doctest::Contains("unexpected tensor"),
                       std::runtime_error);
}

TEST_CASE("run config survives as structured data") {
  Checkpoint ckpt = sample_checkpoint();
  ckpt.run_config = json{{"nested", {{"list", {1, 2, 3}}}},
                         {"flag", true},
                         {"text", "with \"quotes\" and \n newline"}};
  std::filesystem::path path = tmp_path("config.ckpt");
  save_checkpoint(ckpt, path.string());
  Checkpoint loaded = load_checkpoint(path.string());
  CHECK(loaded.run_config == ckpt.run_config);
  CHECK(loaded.run_config["nested"]["list"][2] == 3);
}
