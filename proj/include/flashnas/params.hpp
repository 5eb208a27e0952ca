#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace flashnas {

/// Dense row-major 64-bit matrix; the storage type of every tensor in the kit.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ParamId = int;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;
};

/// Named parameters with gradient accumulators and per-parameter freeze flags.
/// Iteration order is insertion order.
class ParamStore {
 public:
  ParamId add(std::string name, Matrix init);

  ParamId id(std::string_view name) const;
  bool has(std::string_view name) const;

  Parameter& operator[](ParamId id) { return params_.at(static_cast<std::size_t>(id)); }
  const Parameter& operator[](ParamId id) const { return params_.at(static_cast<std::size_t>(id)); }
  Parameter& at(std::string_view name) { return (*this)[id(name)]; }
  const Parameter& at(std::string_view name) const { return (*this)[id(name)]; }

  int size() const { return static_cast<int>(params_.size()); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  void set_all_trainable(bool trainable);
  /// Applies to every parameter whose name starts with `prefix`.
  void set_trainable_prefix(std::string_view prefix, bool trainable);

  /// Number of scalars, optionally restricted to names starting with `prefix`.
  std::int64_t scalar_count(std::string_view prefix = {}) const;
  std::int64_t trainable_scalar_count() const;

  /// FNV-1a over the raw bytes of every value whose name starts with `prefix`.
  std::uint64_t hash(std::string_view prefix = {}) const;

  /// Snapshot: one line of JSON shape manifest, then the values as
  /// little-endian float64 in manifest order.
  void save(const std::filesystem::path& path) const;
  /// Loads values into existing parameters; shapes must agree.
  void load(const std::filesystem::path& path);
  /// Builds a store from a snapshot file.
  static ParamStore read(const std::filesystem::path& path);

 private:
  std::vector<Parameter> params_;
  std::map<std::string, ParamId, std::less<>> index_;
};

}  // namespace flashnas
