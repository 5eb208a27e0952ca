#include "flashnas/archspace.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <stdexcept>

namespace flashnas {

namespace {

constexpr std::array<std::string_view, kNumFactors> kFactorNames = {
    "hidden_size", "bottleneck_size", "attention_heads", "intermediate_size", "stacked_ff"};

}  // namespace

std::string_view factor_name(Factor f) { return kFactorNames[static_cast<int>(f)]; }

Factor factor_from_name(std::string_view name) {
  for (int i = 0; i < kNumFactors; ++i) {
    if (kFactorNames[i] == name) return static_cast<Factor>(i);
  }
  throw std::invalid_argument("unknown design factor '" + std::string(name) + "'");
}

void FactorDomain::validate() const {
  const std::string n(factor_name(factor));
  if (values.empty()) throw std::invalid_argument("factor " + n + " has an empty domain");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] <= 0) throw std::invalid_argument("factor " + n + " has a non-positive value");
    if (i > 0 && values[i] <= values[i - 1])
      throw std::invalid_argument("factor " + n + " values must be strictly increasing");
  }
}

int FactorDomain::index_of(int v) const {
  auto it = std::lower_bound(values.begin(), values.end(), v);
  if (it == values.end() || *it != v) return -1;
  return static_cast<int>(it - values.begin());
}

int ArchitectureConfig::value(Factor f) const {
  switch (f) {
    case Factor::HiddenSize: return hidden_size;
    case Factor::BottleneckSize: return bottleneck_size;
    case Factor::AttentionHeads: return attention_heads;
    case Factor::IntermediateSize: return intermediate_size;
    case Factor::StackedFF: return stacked_ff;
  }
  return 0;
}

void ArchitectureConfig::set(Factor f, int v) {
  switch (f) {
    case Factor::HiddenSize: hidden_size = v; break;
    case Factor::BottleneckSize: bottleneck_size = v; break;
    case Factor::AttentionHeads: attention_heads = v; break;
    case Factor::IntermediateSize: intermediate_size = v; break;
    case Factor::StackedFF: stacked_ff = v; break;
  }
}

std::string ArchitectureConfig::name() const {
  std::ostringstream os;
  os << "Model_" << hidden_size << '_' << bottleneck_size << '_' << attention_heads << '_'
     << intermediate_size << '_' << stacked_ff;
  return os.str();
}

ArchitectureConfig parse_config_name(std::string_view name, int depth) {
  constexpr std::string_view prefix = "Model_";
  if (name.substr(0, prefix.size()) != prefix)
    throw std::invalid_argument("model name must start with Model_: " + std::string(name));
  name.remove_prefix(prefix.size());
  ArchitectureConfig c;
  c.depth = depth;
  for (int i = 0; i < kNumFactors; ++i) {
    auto sep = name.find('_');
    auto token = name.substr(0, sep);
    int v = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || ptr != token.data() + token.size())
      throw std::invalid_argument("malformed model name field '" + std::string(token) + "'");
    c.set(kFactorOrder[i], v);
    if (i + 1 < kNumFactors) {
      if (sep == std::string_view::npos)
        throw std::invalid_argument("model name needs five fields");
      name.remove_prefix(sep + 1);
    } else if (sep != std::string_view::npos) {
      throw std::invalid_argument("model name has trailing fields");
    }
  }
  return c;
}

DesignSpace DesignSpace::standard() {
  return DesignSpace({FactorDomain{Factor::HiddenSize, {128, 246, 384, 512}},
                      FactorDomain{Factor::BottleneckSize, {64, 96, 128, 160}},
                      FactorDomain{Factor::AttentionHeads, {1, 2, 4, 8}},
                      FactorDomain{Factor::IntermediateSize, {384, 512, 640}},
                      FactorDomain{Factor::StackedFF, {2, 4, 6}}},
                     24, 30522, 128, 128);
}

DesignSpace::DesignSpace(std::array<FactorDomain, kNumFactors> domains, int depth, int vocab_size,
                         int seq_len, int embed_dim)
    : domains_(std::move(domains)),
      depth_(depth),
      vocab_size_(vocab_size),
      seq_len_(seq_len),
      embed_dim_(embed_dim) {
  for (int i = 0; i < kNumFactors; ++i) {
    if (domains_[i].factor != kFactorOrder[i])
      throw std::invalid_argument("design space factors must be given in canonical order");
    domains_[i].validate();
  }
  if (depth_ <= 0 || vocab_size_ <= 0 || seq_len_ <= 0 || embed_dim_ <= 0)
    throw std::invalid_argument("depth, vocab_size, seq_len and embed_dim must be positive");
  for (int heads : domain(Factor::AttentionHeads).values) {
    for (int b : domain(Factor::BottleneckSize).values) {
      if (b % heads != 0) {
        throw std::invalid_argument("attention_heads " + std::to_string(heads) +
                                    " does not divide bottleneck_size " + std::to_string(b));
      }
    }
  }
}

std::uint64_t DesignSpace::cardinality() const {
  std::uint64_t n = 1;
  for (const auto& d : domains_) n *= static_cast<std::uint64_t>(d.size());
  return n;
}

std::uint64_t DesignSpace::encode(const ArchitectureConfig& c) const {
  std::uint64_t index = 0;
  for (const auto& d : domains_) {
    const int pos = d.index_of(c.value(d.factor));
    if (pos < 0) {
      throw std::invalid_argument("value " + std::to_string(c.value(d.factor)) + " of " +
                                  std::string(factor_name(d.factor)) + " is not in the domain");
    }
    index = index * static_cast<std::uint64_t>(d.size()) + static_cast<std::uint64_t>(pos);
  }
  return index;
}

ArchitectureConfig DesignSpace::decode(std::uint64_t index) const {
  if (index >= cardinality())
    throw std::out_of_range("index " + std::to_string(index) + " >= cardinality " +
                            std::to_string(cardinality()));
  ArchitectureConfig c;
  c.depth = depth_;
  for (int i = kNumFactors - 1; i >= 0; --i) {
    const auto& d = domains_[i];
    const auto radix = static_cast<std::uint64_t>(d.size());
    c.set(d.factor, d.values[index % radix]);
    index /= radix;
  }
  return c;
}

bool DesignSpace::contains(const ArchitectureConfig& c) const {
  if (c.depth != depth_) return false;
  for (const auto& d : domains_) {
    if (d.index_of(c.value(d.factor)) < 0) return false;
  }
  return c.bottleneck_size % c.attention_heads == 0;
}

void DesignSpace::validate(const ArchitectureConfig& c) const {
  if (c.depth != depth_)
    throw std::invalid_argument("config depth " + std::to_string(c.depth) +
                                " differs from design-space depth " + std::to_string(depth_));
  encode(c);
  if (c.bottleneck_size % c.attention_heads != 0)
    throw std::invalid_argument("bottleneck_size must be divisible by attention_heads");
}

std::vector<ArchitectureConfig> DesignSpace::enumerate() const {
  std::vector<ArchitectureConfig> all;
  all.reserve(cardinality());
  for (std::uint64_t i = 0; i < cardinality(); ++i) all.push_back(decode(i));
  return all;
}

UnitPoint DesignSpace::normalize(const ArchitectureConfig& c) const {
  UnitPoint u;
  for (int i = 0; i < kNumFactors; ++i) {
    const auto& d = domains_[i];
    const int pos = d.index_of(c.value(d.factor));
    if (pos < 0) throw std::invalid_argument("config value outside domain");
    u(i) = d.size() > 1 ? static_cast<double>(pos) / (d.size() - 1) : 0.0;
  }
  return u;
}

ArchitectureConfig DesignSpace::snap(const UnitPoint& u) const {
  ArchitectureConfig c;
  c.depth = depth_;
  for (int i = 0; i < kNumFactors; ++i) {
    const auto& d = domains_[i];
    const double x = std::clamp(u(i), 0.0, 1.0);
    const long pos = std::lround(x * (d.size() - 1));
    c.set(d.factor, d.values[static_cast<std::size_t>(pos)]);
  }
  return c;
}

ArchitectureConfig DesignSpace::sample_uniform(std::uint64_t seed) const {
  auto rng = make_rng({seed});
  return sample(rng);
}

ParamBreakdown param_breakdown(const ArchitectureConfig& c, const DesignSpace& space) {
  space.validate(c);
  const std::int64_t h = c.hidden_size;
  const std::int64_t b = c.bottleneck_size;
  const std::int64_t f = c.intermediate_size;
  const std::int64_t e = space.embed_dim();

  ParamBreakdown out;
  out.embedding = static_cast<std::int64_t>(space.vocab_size()) * e;
  out.resize = (e != h) ? e * h + h : 0;

  const std::int64_t qkv = 3 * (h * b + b);
  const std::int64_t attn_out = b * b + b;
  const std::int64_t ff = c.stacked_ff * ((b * f + f) + (f * b + b));
  const std::int64_t block_out = b * h + h;
  const std::int64_t norms = 2 * b + 2 * h;
  out.per_block = qkv + attn_out + ff + block_out + norms;
  out.blocks = out.per_block * c.depth;
  return out;
}

std::int64_t param_count(const ArchitectureConfig& c, const DesignSpace& space) {
  return param_breakdown(c, space).total();
}

std::mt19937_64 make_rng(std::initializer_list<std::uint64_t> keys) {
  std::vector<std::uint32_t> words;
  words.reserve(keys.size() * 2);
  for (auto k : keys) {
    words.push_back(static_cast<std::uint32_t>(k & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace flashnas
