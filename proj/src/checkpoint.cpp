#include "aupt/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace aupt {
namespace {

template <typename T>
T to_little(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return value;
}

class Writer {
 public:
  template <typename T>
  void put(T value) {
    value = to_little(value);
    const auto* p = reinterpret_cast<const char*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(std::uint32_t(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  template <typename Vec>
  void put_f32(const Vec& values) {
    for (Index i = 0; i < values.size(); ++i) put<float>(float(values[i]));
  }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get() {
    require(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(value);
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    require(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void require(std::uint64_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint truncated", pos_);
  }
  std::uint64_t pos() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::vector<char> bytes_;
  std::uint64_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct RawTensor {
  std::string name;
  Shape dims;
  std::vector<float> data;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};

struct RawCheckpoint {
  std::map<std::string, std::string> meta;
  std::vector<RawTensor> tensors;
  bool has_optimizer = false;
  std::int64_t step = 0;
  AdamConfig adam;
  std::vector<std::vector<float>> m, v;
};

std::vector<float> read_floats(Reader& r, Index count) {
  r.require(std::uint64_t(count) * 4);
  std::vector<float> out(count);
  for (auto& x : out) x = r.get<float>();
  return out;
}

RawCheckpoint parse(const std::filesystem::path& path) {
  Reader r(read_file(path));
  r.require(4);
  char magic[4];
  for (char& c : magic) c = r.get<char>();
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw FormatError("bad checkpoint magic", 0);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  }

  RawCheckpoint raw;
  const auto n_meta = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto key = r.get_string();
    raw.meta[key] = r.get_string();
  }
  const auto n_tensors = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    RawTensor t;
    t.offset = r.pos();
    t.name = r.get_string();
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank), r.pos() - 4);
    for (std::uint32_t d = 0; d < rank; ++d) t.dims.push_back(Index(r.get<std::uint32_t>()));
    t.data = read_floats(r, shape_size(t.dims));
    t.length = r.pos() - t.offset;
    raw.tensors.push_back(std::move(t));
  }
  const auto flag = r.get<std::uint8_t>();
  if (flag > 1) throw FormatError("bad optimizer flag", r.pos() - 1);
  raw.has_optimizer = flag == 1;
  if (raw.has_optimizer) {
    raw.step = r.get<std::int64_t>();
    raw.adam.lr = r.get<double>();
    raw.adam.beta1 = r.get<double>();
    raw.adam.beta2 = r.get<double>();
    raw.adam.eps = r.get<double>();
    for (const auto& t : raw.tensors) {
      raw.m.push_back(read_floats(r, Index(t.data.size())));
      raw.v.push_back(read_floats(r, Index(t.data.size())));
    }
  }
  if (!r.at_end()) throw FormatError("trailing bytes after checkpoint", r.pos());
  return raw;
}

int meta_int(const RawCheckpoint& raw, const std::string& key) {
  auto it = raw.meta.find(key);
  if (it == raw.meta.end()) throw FormatError("checkpoint metadata lacks '" + key + "'", 8);
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw FormatError("checkpoint metadata '" + key + "' is not an integer", 8);
  }
}

}  // namespace

template <typename Scalar>
void save_checkpoint(const Network<Scalar>& net, const std::filesystem::path& path, const CheckpointMetadata& metadata,
                     const AdamState<Scalar>* optimizer) {
  std::map<std::string, std::string> meta = metadata.extra;
  meta["config_hash"] = metadata.config_hash;
  meta["seed"] = std::to_string(metadata.seed);
  meta["epoch"] = std::to_string(metadata.epoch);
  meta["in_channels"] = std::to_string(net.in_channels());
  meta["num_outputs"] = std::to_string(net.num_outputs());
  meta["width_divisor"] = std::to_string(net.width_divisor());

  Writer w;
  for (char c : kCheckpointMagic) w.put<char>(c);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(std::uint32_t(meta.size()));
  for (const auto& [key, value] : meta) {
    w.put_string(key);
    w.put_string(value);
  }
  const auto& params = net.named_parameters();
  w.put<std::uint32_t>(std::uint32_t(params.size()));
  for (const auto& p : params) {
    w.put_string(p.name);
    w.put<std::uint32_t>(std::uint32_t(p.tensor.rank()));
    for (Index d : p.tensor.dims()) w.put<std::uint32_t>(std::uint32_t(d));
    w.put_f32(p.tensor.values());
  }
  w.put<std::uint8_t>(optimizer ? 1 : 0);
  if (optimizer) {
    if (optimizer->m.size() != params.size()) throw ShapeError("optimizer state does not match network parameters");
    w.put<std::int64_t>(optimizer->step_count);
    w.put<double>(optimizer->config.lr);
    w.put<double>(optimizer->config.beta1);
    w.put<double>(optimizer->config.beta2);
    w.put<double>(optimizer->config.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
      w.put_f32(optimizer->m[i]);
      w.put_f32(optimizer->v[i]);
    }
  }

  // Write-then-rename so readers never observe a half-written checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(w.bytes().data(), std::streamsize(w.bytes().size()));
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename Scalar>
LoadedCheckpoint<Scalar> load_checkpoint(const std::filesystem::path& path) {
  RawCheckpoint raw = parse(path);
  Network<Scalar> net;
  try {
    net = build_vgg13<Scalar>(meta_int(raw, "in_channels"), meta_int(raw, "num_outputs"), 0,
                              meta_int(raw, "width_divisor"));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint geometry invalid: ") + e.what(), 8);
  }
  auto& params = net.named_parameters();
  if (params.size() != raw.tensors.size()) {
    throw FormatError("checkpoint has " + std::to_string(raw.tensors.size()) + " tensors, network needs " +
                          std::to_string(params.size()),
                      raw.tensors.empty() ? 0 : raw.tensors.front().offset);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = raw.tensors[i];
    if (t.name != params[i].name || t.dims != params[i].tensor.dims()) {
      throw FormatError("checkpoint tensor '" + t.name + "' " + shape_string(t.dims) + " does not match expected '" +
                            params[i].name + "' " + shape_string(params[i].tensor.dims()),
                        t.offset);
    }
    auto& values = params[i].tensor.values();
    for (Index j = 0; j < values.size(); ++j) values[j] = Scalar(t.data[j]);
  }

  LoadedCheckpoint<Scalar> out;
  out.metadata.config_hash = raw.meta["config_hash"];
  out.metadata.seed = std::stoull(raw.meta.count("seed") ? raw.meta["seed"] : "0");
  out.metadata.epoch = std::stoll(raw.meta.count("epoch") ? raw.meta["epoch"] : "0");
  for (const auto& [k, v] : raw.meta) {
    if (k != "config_hash" && k != "seed" && k != "epoch" && k != "in_channels" && k != "num_outputs" &&
        k != "width_divisor") {
      out.metadata.extra[k] = v;
    }
  }
  if (raw.has_optimizer) {
    AdamState<Scalar> state;
    state.config = raw.adam;
    state.step_count = raw.step;
    for (std::size_t i = 0; i < raw.m.size(); ++i) {
      state.m.push_back(Eigen::Map<const Eigen::VectorXf>(raw.m[i].data(), Index(raw.m[i].size())).cast<Scalar>());
      state.v.push_back(Eigen::Map<const Eigen::VectorXf>(raw.v[i].data(), Index(raw.v[i].size())).cast<Scalar>());
    }
    out.optimizer = std::move(state);
  }
  out.network = std::move(net);
  return out;
}

std::vector<CheckpointEntry> inspect_checkpoint(const std::filesystem::path& path) {
  RawCheckpoint raw = parse(path);
  std::vector<CheckpointEntry> out;
  for (const auto& t : raw.tensors) out.push_back({t.name, t.dims, t.offset, t.length});
  return out;
}

template void save_checkpoint(const Network<float>&, const std::filesystem::path&, const CheckpointMetadata&,
                              const AdamState<float>*);
template void save_checkpoint(const Network<double>&, const std::filesystem::path&, const CheckpointMetadata&,
                              const AdamState<double>*);
template LoadedCheckpoint<float> load_checkpoint(const std::filesystem::path&);
template LoadedCheckpoint<double> load_checkpoint(const std::filesystem::path&);

}  // namespace aupt
