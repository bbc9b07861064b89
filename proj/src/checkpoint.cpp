#include "sgiformer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sgiformer/scene_io.hpp"

namespace sgiformer {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'G', 'I', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    buf_ += s;
  }
  void doubles(const std::vector<double>& v) {
    pod<std::uint64_t>(v.size());
    buf_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}
  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> doubles() {
    const auto n = pod<std::uint64_t>();
    if (n > (data_.size() - pos_) / sizeof(double)) throw CheckpointError("checkpoint truncated");
    std::vector<double> v(n);
    std::memcpy(v.data(), data_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
  }
  std::size_t position() const { return pos_; }
  std::size_t size() const { return data_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > data_.size() - pos_) throw CheckpointError("checkpoint truncated");
  }
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t model_hash(const ModelConfig& model) { return fnv1a64(model_config_json(model)); }

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const ParamStore& params,
                     const OptimizerState* optimizer, std::uint64_t step) {
  Writer w;
  w.bytes().append(kMagic, sizeof(kMagic));
  w.pod(kVersion);
  w.pod(model_hash(config.model));
  w.pod(step);
  w.str(config_to_json(config));
  const auto& list = params.params();
  w.pod<std::uint64_t>(list.size());
  for (const auto& p : list) {
    w.str(p.name);
    w.pod<std::uint8_t>(p.group == ParamGroup::kVoxelHead ? 1 : 0);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(p.tensor.rank()));
    for (auto d : p.tensor.shape()) w.pod<std::uint64_t>(d);
    w.doubles(std::vector<double>(p.tensor.data().begin(), p.tensor.data().end()));
  }
  w.pod<std::uint8_t>(optimizer ? 1 : 0);
  if (optimizer) {
    if (optimizer->first_moment.size() != list.size()) throw CheckpointError("optimizer state does not match parameters");
    w.pod<std::uint64_t>(optimizer->step);
    for (std::size_t i = 0; i < list.size(); ++i) {
      w.doubles(optimizer->first_moment[i]);
      w.doubles(optimizer->second_moment[i]);
    }
  }
  w.pod(fnv1a64(w.bytes()));
  write_file_atomic(path, w.bytes());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  std::string data = ss.str();
  if (data.size() < sizeof(kMagic) + sizeof(std::uint64_t) || std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(path.string() + ": not a checkpoint");
  }
  std::uint64_t stored_sum;
  std::memcpy(&stored_sum, data.data() + data.size() - sizeof(stored_sum), sizeof(stored_sum));
  data.resize(data.size() - sizeof(stored_sum));
  if (fnv1a64(data) != stored_sum) throw CheckpointError(path.string() + ": checksum mismatch");

  Reader r(data.substr(sizeof(kMagic)));
  Checkpoint ck;
  if (r.pod<std::uint32_t>() != kVersion) throw CheckpointError(path.string() + ": unsupported version");
  ck.config_hash = r.pod<std::uint64_t>();
  ck.step = r.pod<std::uint64_t>();
  ck.config = parse_config(r.str());
  if (model_hash(ck.config.model) != ck.config_hash) throw CheckpointError(path.string() + ": config hash mismatch");
  const auto count = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    SavedTensor t;
    t.name = r.str();
    t.group = r.pod<std::uint8_t>() ? ParamGroup::kVoxelHead : ParamGroup::kDefault;
    const auto rank = r.pod<std::uint32_t>();
    for (std::uint32_t d = 0; d < rank; ++d) t.shape.push_back(r.pod<std::uint64_t>());
    t.values = r.doubles();
    if (t.values.size() != shape_numel(t.shape)) throw CheckpointError(path.string() + ": bad tensor " + t.name);
    ck.params.push_back(std::move(t));
  }
  if (r.pod<std::uint8_t>()) {
    OptimizerState st;
    st.step = r.pod<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
      st.first_moment.push_back(r.doubles());
      st.second_moment.push_back(r.doubles());
      if (st.first_moment.back().size() != ck.params[i].values.size() ||
          st.second_moment.back().size() != ck.params[i].values.size()) {
        throw CheckpointError(path.string() + ": optimizer moments do not match " + ck.params[i].name);
      }
    }
    ck.optimizer = std::move(st);
  }
  if (r.position() != r.size()) throw CheckpointError(path.string() + ": trailing bytes");
  return ck;
}

void restore_params(const Checkpoint& ck, ParamStore& params) {
  auto& list = params.params();
  if (list.size() != ck.params.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(ck.params.size()) + " tensors, model has " +
                          std::to_string(list.size()));
  }
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto& saved = ck.params[i];
    if (saved.name != list[i].name || saved.shape != list[i].tensor.shape()) {
      throw CheckpointError("checkpoint tensor " + saved.name + " " + shape_str(saved.shape) + " does not match " +
                            list[i].name + " " + shape_str(list[i].tensor.shape()));
    }
    auto dst = list[i].tensor.mutable_data();
    std::copy(saved.values.begin(), saved.values.end(), dst.begin());
  }
}

}  // namespace sgiformer
