#include "fragalign/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace fragalign {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'F', 'R', 'A', 'G', 'A', 'L', 'N', '\0'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void write_tensor(std::ostream& out, const double* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(count * sizeof(double)));
}

void read_tensor(std::istream& in, double* data, std::size_t count) {
  in.read(reinterpret_cast<char*>(data),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint truncated inside tensor data");
}

json tensor_entry(const std::string& name, Eigen::Index rows,
                  Eigen::Index cols) {
  return json{{"name", name}, {"rows", rows}, {"cols", cols}};
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const ModelParams& p = ckpt.params;
  if (static_cast<int>(p.relations.size()) != ckpt.relations.size())
    throw std::runtime_error(
        "relation weight count does not match the relation vocabulary");
  if (!p.all_finite())
    throw std::runtime_error("refusing to save non-finite parameters");

  json manifest = json::array();
  manifest.push_back(
      tensor_entry("image_proj", p.image_proj.rows(), p.image_proj.cols()));
  for (std::size_t r = 0; r < p.relations.size(); ++r) {
    std::string base = "relation" + std::to_string(r);
    manifest.push_back(tensor_entry(base + ".weight", p.relations[r].weight.rows(),
                                    p.relations[r].weight.cols()));
    manifest.push_back(
        tensor_entry(base + ".bias", p.relations[r].bias.size(), 1));
  }
  manifest.push_back(tensor_entry(
      "words", ckpt.words.size(), ckpt.words.size() ? ckpt.words.dim() : 0));

  json header;
  header["dims"] = {{"word", p.dims.dim_word},
                    {"embed", p.dims.dim_embed},
                    {"image", p.dims.dim_image}};
  header["relations"] = ckpt.relations.names();
  header["words"] = ckpt.words.words();
  header["word_dim"] = ckpt.words.dim();
  header["pooled_sentences"] = ckpt.pooled_sentences;
  header["run_config"] = ckpt.run_config;
  header["tensors"] = std::move(manifest);
  std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof kMagic);
  write_u32(out, kVersion);
  write_u64(out, header_text.size());
  out.write(header_text.data(),
            static_cast<std::streamsize>(header_text.size()));

  write_tensor(out, p.image_proj.data(),
               static_cast<std::size_t>(p.image_proj.size()));
  for (const RelationWeights& rw : p.relations) {
    write_tensor(out, rw.weight.data(),
                 static_cast<std::size_t>(rw.weight.size()));
    write_tensor(out, rw.bias.data(), static_cast<std::size_t>(rw.bias.size()));
  }
  for (const std::string& w : ckpt.words.words())
    write_tensor(out, ckpt.words.vector(w).data(),
                 static_cast<std::size_t>(ckpt.words.dim()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);

  char magic[8] = {};
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error(path + ": not a checkpoint file");
  std::uint32_t version = read_u32(in);
  if (version != kVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version " +
                             std::to_string(version));
  std::uint64_t header_len = read_u64(in);
  if (!in || header_len > (1ull << 30))
    throw std::runtime_error(path + ": corrupt header length");
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw std::runtime_error(path + ": truncated header");

  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path + ": bad header JSON: " + e.what());
  }

  Checkpoint ckpt;
  ckpt.params.dims.dim_word = header.at("dims").at("word").get<int>();
  ckpt.params.dims.dim_embed = header.at("dims").at("embed").get<int>();
  ckpt.params.dims.dim_image = header.at("dims").at("image").get<int>();
  ckpt.pooled_sentences = header.value("pooled_sentences", false);
  ckpt.run_config = header.value("run_config", json::object());

  std::vector<std::string> relation_names =
      header.at("relations").get<std::vector<std::string>>();
  for (const std::string& name : relation_names) ckpt.relations.add(name);
  if (ckpt.relations.size() != static_cast<int>(relation_names.size()))
    throw std::runtime_error(path + ": duplicate relation names in header");

  std::vector<std::string> words =
      header.at("words").get<std::vector<std::string>>();
  int word_dim = header.at("word_dim").get<int>();

  const json& manifest = header.at("tensors");
  std::size_t expected =
      2 * relation_names.size() + 2;  // image_proj + per-relation + words
  if (manifest.size() != expected)
    throw std::runtime_error(path + ": tensor manifest size mismatch");

  auto check_entry = [&](std::size_t i, const std::string& name,
                         Eigen::Index rows, Eigen::Index cols) {
    const json& e = manifest.at(i);
    if (e.at("name").get<std::string>() != name ||
        e.at("rows").get<Eigen::Index>() != rows ||
        e.at("cols").get<Eigen::Index>() != cols)
      throw std::runtime_error(path + ": unexpected tensor '" +
                               e.at("name").get<std::string>() +
                               "' in manifest (wanted " + name + ")");
  };

  const Dims& d = ckpt.params.dims;
  if (d.dim_word <= 0 || d.dim_embed <= 0 || d.dim_image <= 0)
    throw std::runtime_error(path + ": non-positive dimensions in header");

  check_entry(0, "image_proj", d.dim_embed, d.dim_image);
  ckpt.params.image_proj.resize(d.dim_embed, d.dim_image);
  read_tensor(in, ckpt.params.image_proj.data(),
              static_cast<std::size_t>(ckpt.params.image_proj.size()));

  for (std::size_t r = 0; r < relation_names.size(); ++r) {
    std::string base = "relation" + std::to_string(r);
    RelationWeights rw;
    check_entry(1 + 2 * r, base + ".weight", d.dim_embed, 2 * d.dim_word);
    rw.weight.resize(d.dim_embed, 2 * d.dim_word);
    read_tensor(in, rw.weight.data(),
                static_cast<std::size_t>(rw.weight.size()));
    check_entry(2 + 2 * r, base + ".bias", d.dim_embed, 1);
    rw.bias.resize(d.dim_embed);
    read_tensor(in, rw.bias.data(), static_cast<std::size_t>(rw.bias.size()));
    ckpt.params.relations.push_back(std::move(rw));
  }

  check_entry(manifest.size() - 1, "words",
              static_cast<Eigen::Index>(words.size()),
              words.empty() ? 0 : word_dim);
  ckpt.words = WordTable(word_dim);
  Vec v(word_dim);
  for (const std::string& w : words) {
    read_tensor(in, v.data(), static_cast<std::size_t>(word_dim));
    ckpt.words.insert(w, v);
  }

  char extra = 0;
  if (in.read(&extra, 1))
    throw std::runtime_error(path + ": trailing bytes after tensor data");
  if (!ckpt.params.all_finite())
    throw std::runtime_error(path + ": non-finite parameter values");
  return ckpt;
}

}  // namespace fragalign
