#include "flashnas/params.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "flashnas/io.hpp"

namespace flashnas {

ParamId ParamStore::add(std::string name, Matrix init) {
  if (index_.count(name) != 0) throw std::invalid_argument("duplicate parameter '" + name + "'");
  const auto id = static_cast<ParamId>(params_.size());
  index_.emplace(name, id);
  Parameter p;
  p.name = std::move(name);
  p.grad = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  params_.push_back(std::move(p));
  return id;
}

ParamId ParamStore::id(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + std::string(name) + "'");
  return it->second;
}

bool ParamStore::has(std::string_view name) const { return index_.find(name) != index_.end(); }

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

void ParamStore::set_all_trainable(bool trainable) {
  for (auto& p : params_) p.trainable = trainable;
}

void ParamStore::set_trainable_prefix(std::string_view prefix, bool trainable) {
  for (auto& p : params_) {
    if (std::string_view(p.name).substr(0, prefix.size()) == prefix) p.trainable = trainable;
  }
}

std::int64_t ParamStore::scalar_count(std::string_view prefix) const {
  std::int64_t n = 0;
  for (const auto& p : params_) {
    if (std::string_view(p.name).substr(0, prefix.size()) == prefix) n += p.value.size();
  }
  return n;
}

std::int64_t ParamStore::trainable_scalar_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) {
    if (p.trainable) n += p.value.size();
  }
  return n;
}

std::uint64_t ParamStore::hash(std::string_view prefix) const {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& p : params_) {
    if (std::string_view(p.name).substr(0, prefix.size()) != prefix) continue;
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.value.data());
    const std::size_t n = static_cast<std::size_t>(p.value.size()) * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "snapshot writer assumes a little-endian host");

nlohmann::json manifest_of(const std::vector<Parameter>& params) {
  nlohmann::json tensors = nlohmann::json::array();
  std::int64_t offset = 0;
  for (const auto& p : params) {
    tensors.push_back({{"name", p.name},
                       {"shape", {p.value.rows(), p.value.cols()}},
                       {"offset", offset}});
    offset += p.value.size();
  }
  return {{"format", "flashnas-params"},
          {"version", 1},
          {"dtype", "float64"},
          {"byte_order", "little"},
          {"count", offset},
          {"tensors", tensors}};
}

struct Snapshot {
  nlohmann::json manifest;
  std::vector<double> values;
};

Snapshot read_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open parameter snapshot " + path.string());
  std::string header;
  std::getline(in, header);
  Snapshot s;
  s.manifest = nlohmann::json::parse(header);
  if (s.manifest.value("format", "") != "flashnas-params")
    throw std::runtime_error(path.string() + " is not a parameter snapshot");
  const auto count = s.manifest.at("count").get<std::int64_t>();
  s.values.resize(static_cast<std::size_t>(count));
  in.read(reinterpret_cast<char*>(s.values.data()),
          static_cast<std::streamsize>(count * static_cast<std::int64_t>(sizeof(double))));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(double)))
    throw std::runtime_error("parameter snapshot " + path.string() + " is truncated");
  return s;
}

}  // namespace

void ParamStore::save(const std::filesystem::path& path) const {
  std::string blob = manifest_of(params_).dump();
  blob.push_back('\n');
  for (const auto& p : params_) {
    const auto* bytes = reinterpret_cast<const char*>(p.value.data());
    blob.append(bytes, static_cast<std::size_t>(p.value.size()) * sizeof(double));
  }
  write_file_atomic(path, blob);
}

void ParamStore::load(const std::filesystem::path& path) {
  const Snapshot s = read_snapshot(path);
  for (const auto& t : s.manifest.at("tensors")) {
    auto& p = at(t.at("name").get<std::string>());
    const auto rows = t.at("shape")[0].get<Eigen::Index>();
    const auto cols = t.at("shape")[1].get<Eigen::Index>();
    if (rows != p.value.rows() || cols != p.value.cols())
      throw std::runtime_error("shape mismatch loading parameter '" + p.name + "'");
    const auto offset = t.at("offset").get<std::size_t>();
    std::memcpy(p.value.data(), s.values.data() + offset,
                static_cast<std::size_t>(p.value.size()) * sizeof(double));
  }
}

ParamStore ParamStore::read(const std::filesystem::path& path) {
  const Snapshot s = read_snapshot(path);
  ParamStore store;
  for (const auto& t : s.manifest.at("tensors")) {
    const auto rows = t.at("shape")[0].get<Eigen::Index>();
    const auto cols = t.at("shape")[1].get<Eigen::Index>();
    Matrix m(rows, cols);
    const auto offset = t.at("offset").get<std::size_t>();
    std::memcpy(m.data(), s.values.data() + offset, static_cast<std::size_t>(m.size()) * sizeof(double));
    store.add(t.at("name").get<std::string>(), std::move(m));
  }
  return store;
}

}  // namespace flashnas
