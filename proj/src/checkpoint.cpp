#include "hdet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <limits>
#include <string>

#include "hdet/config_io.hpp"
#include "hdet/io.hpp"

namespace hdet {

namespace {

constexpr char kMagic[4] = {'H', 'Y', 'D', 'M'};
constexpr std::size_t kMaxRank = 8;

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  template <typename T>
  void le(T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
  void u32_len(std::size_t n) {
    if (n > std::numeric_limits<std::uint32_t>::max()) throw CheckpointError("checkpoint field too long");
    le(static_cast<std::uint32_t>(n));
  }
  void tensor(const std::string& name, const Tensor& t) {
    u32_len(name.size());
    raw(name.data(), name.size());
    le(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) le(static_cast<std::uint64_t>(d));
    for (double v : t.data()) le(std::bit_cast<std::uint64_t>(v));
  }

  std::vector<std::uint8_t> out;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  T le() {
    const auto s = take(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(s[i]) << (8 * i);
    return v;
  }
  std::string string(std::size_t n) {
    const auto s = take(n);
    return std::string(s.begin(), s.end());
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.le(kCheckpointVersion);

  Json header{{"detector", model.config()}, {"hybrid", nullptr}};
  if (model.hybrid_config()) header["hybrid"] = *model.hybrid_config();
  const std::string text = header.dump();
  w.u32_len(text.size());
  w.raw(text.data(), text.size());

  w.u32_len(model.parameters().size() + 2 * model.norms().size());
  for (const auto& [name, t] : model.parameters()) w.tensor(name, t);
  for (const auto& [name, s] : model.norms()) {
    w.tensor(name + ".running_mean", s.running_mean);
    w.tensor(name + ".running_var", s.running_var);
  }
  return std::move(w.out);
}

Model decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw CheckpointError("not a model checkpoint (bad magic)");
  const auto version = r.le<std::uint16_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

  DetectorConfig detector;
  std::optional<HybridBlockConfig> hybrid;
  try {
    const Json header = Json::parse(r.string(r.le<std::uint32_t>()));
    detector = header.at("detector").get<DetectorConfig>();
    if (!header.at("hybrid").is_null()) hybrid = header.at("hybrid").get<HybridBlockConfig>();
  } catch (const Json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }

  std::map<std::string, Tensor> tensors;
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.string(r.le<std::uint32_t>());
    const auto rank = r.le<std::uint32_t>();
    if (rank > kMaxRank) throw CheckpointError("tensor " + name + " has implausible rank " + std::to_string(rank));
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      const auto dim = r.le<std::uint64_t>();
      if (dim == 0 || dim > (std::uint64_t{1} << 32)) throw CheckpointError("tensor " + name + " has a bad dimension");
      d = static_cast<std::size_t>(dim);
      n *= d;
    }
    if (n > bytes.size() / 8) throw CheckpointError("tensor " + name + " is larger than the file");
    std::vector<double> values(n);
    for (double& v : values) v = std::bit_cast<double>(r.le<std::uint64_t>());
    if (!tensors.emplace(name, Tensor(shape, std::move(values))).second)
      throw CheckpointError("duplicate tensor " + name);
  }
  if (!r.done()) throw CheckpointError("trailing bytes after last tensor");

  std::map<std::string, Tensor> params;
  std::map<std::string, BatchNormState> norms;
  for (auto& [name, t] : tensors) {
    constexpr std::string_view mean_suffix = ".running_mean", var_suffix = ".running_var";
    if (name.ends_with(mean_suffix) || name.ends_with(var_suffix)) {
      const bool is_mean = name.ends_with(mean_suffix);
      const std::string key = name.substr(0, name.size() - (is_mean ? mean_suffix : var_suffix).size());
      auto [it, fresh] = norms.try_emplace(key);
      if (fresh) {
        it->second.eps = detector.bn_eps;
        it->second.momentum = detector.bn_momentum;
      }
      (is_mean ? it->second.running_mean : it->second.running_var) = std::move(t);
    } else {
      params.emplace(name, std::move(t));
    }
  }
  try {
    return Model(detector, hybrid, std::move(params), std::move(norms));
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("inconsistent checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  io::write_atomic(path, encode_checkpoint(model));
}

Model load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_bytes(path)); }

}  // namespace hdet
