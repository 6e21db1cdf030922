#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ckge/matrix.hpp"

namespace ckge {

// Binary container shared by model, method-state and generator checkpoints.
// See docs/checkpoint-format.md for the byte layout. Doubles are stored as
// raw IEEE-754 little-endian values, so a write/read cycle is bit-exact.
class Checkpoint {
 public:
  void set(std::string key, std::string value);
  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;

  void add_tensor(std::string name, Matrix value);
  bool has_tensor(const std::string& name) const;
  const Matrix& tensor(const std::string& name) const;

  const std::vector<std::pair<std::string, std::string>>& attributes() const { return attributes_; }
  const std::vector<std::pair<std::string, Matrix>>& tensors() const { return tensors_; }

  void write(const std::filesystem::path& file) const;
  static Checkpoint read(const std::filesystem::path& file);

 private:
  std::vector<std::pair<std::string, std::string>> attributes_;
  std::vector<std::pair<std::string, Matrix>> tensors_;
};

}  // namespace ckge
