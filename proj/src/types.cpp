#include "fragalign/types.hpp"

#include <stdexcept>

namespace fragalign {

WordTable::WordTable(int dim_word) : dim_word_(dim_word) {
  if (dim_word < 0)
    throw std::invalid_argument("word dimension must be non-negative");
}

bool WordTable::contains(std::string_view word) const {
  return entries_.find(word) != entries_.end();
}

const Vec* WordTable::find(std::string_view word) const noexcept {
  auto it = entries_.find(word);
  return it == entries_.end() ? nullptr : &it->second;
}

const Vec& WordTable::vector(std::string_view word) const {
  auto it = entries_.find(word);
  if (it == entries_.end())
    throw std::runtime_error("word not in table: " + std::string(word));
  return it->second;
}

void WordTable::insert(const std::string& word, Vec v) {
  if (v.size() != dim_word_)
    throw std::runtime_error("word vector for '" + word + "' has width " +
                             std::to_string(v.size()) + ", expected " +
                             std::to_string(dim_word_));
  auto [it, inserted] = entries_.insert_or_assign(word, std::move(v));
  if (inserted) words_.push_back(word);
}

int RelationVocab::add(const std::string& name) {
  auto it = index_.find(name);
  if (it != index_.end()) return it->second;
  int id = static_cast<int>(names_.size());
  names_.push_back(name);
  index_.emplace(name, id);
  return id;
}

int RelationVocab::index(std::string_view name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

const std::string& RelationVocab::name(int index) const {
  if (index < 0 || index >= size())
    throw std::out_of_range("relation index " + std::to_string(index) +
                            " out of range (vocab size " +
                            std::to_string(size()) + ")");
  return names_[index];
}

ModelParams ModelParams::zeros(const Dims& dims, int relation_count) {
  if (dims.dim_word < 0 || dims.dim_embed <= 0 || dims.dim_image <= 0)
    throw std::invalid_argument("model dimensions must be positive");
  if (relation_count < 0)
    throw std::invalid_argument("relation count must be non-negative");
  ModelParams p;
  p.dims = dims;
  p.image_proj = Mat::Zero(dims.dim_embed, dims.dim_image);
  p.relations.resize(relation_count);
  for (auto& r : p.relations) {
    r.weight = Mat::Zero(dims.dim_embed, 2 * dims.dim_word);
    r.bias = Vec::Zero(dims.dim_embed);
  }
  return p;
}

bool ModelParams::all_finite() const {
  if (!image_proj.allFinite()) return false;
  for (const auto& r : relations)
    if (!r.weight.allFinite() || !r.bias.allFinite()) return false;
  return true;
}

}  // namespace fragalign
