#include "qsel/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "qsel/errors.hpp"

namespace qsel {

namespace {

constexpr char kMagic[8] = {'Q', 'S', 'E', 'L', 'C', 'K', 'P', 'T'};

template <class U>
void put_le(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>(static_cast<unsigned char>(value >> (8 * i))));
  }
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class U>
  U get() {
    need(sizeof(U));
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      value |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return value;
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("checkpoint truncated at byte " + std::to_string(pos_));
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const CheckpointFile& file) {
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, file.version);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(file.config_echo.size()));
  out += file.config_echo;
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(file.tensors.size()));
  for (const auto& [name, m] : file.tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le<std::uint64_t>(out, m.rows());
    put_le<std::uint64_t>(out, m.cols());
    for (double v : m.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

CheckpointFile decode_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.take(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw DataError("not a checkpoint file (bad magic)");
  }
  CheckpointFile file;
  file.version = in.get<std::uint32_t>();
  if (file.version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(file.version));
  }
  file.config_echo = in.take(in.get<std::uint32_t>());
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name = in.take(in.get<std::uint32_t>());
    const auto rows = in.get<std::uint64_t>();
    const auto cols = in.get<std::uint64_t>();
    if (rows == 0 || cols == 0 || rows > (1u << 30) || cols > (1u << 30)) {
      throw DataError("checkpoint tensor '" + name + "' has invalid shape");
    }
    std::vector<double> data(rows * cols);
    for (double& v : data) v = std::bit_cast<double>(in.get<std::uint64_t>());
    file.tensors.emplace_back(std::move(name), Matrix(rows, cols, std::move(data)));
  }
  if (!in.done()) throw DataError("checkpoint has trailing bytes");
  return file;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  const std::string bytes = encode_checkpoint(file);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint '" + path.string() + "'");
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

CheckpointFile to_checkpoint(const ModelWeights<Matrix>& weights, std::string config_echo) {
  CheckpointFile file;
  file.config_echo = std::move(config_echo);
  for_each_tensor(weights, [&](const std::string& name, const Matrix& m) {
    file.tensors.emplace_back(name, m);
  });
  return file;
}

void restore(ModelWeights<Matrix>& weights, const CheckpointFile& file) {
  std::size_t i = 0;
  for_each_tensor(weights, [&](const std::string& name, Matrix& m) {
    if (i >= file.tensors.size()) throw DataError("checkpoint is missing tensor '" + name + "'");
    const auto& [stored_name, stored] = file.tensors[i++];
    if (stored_name != name) {
      throw DataError("checkpoint tensor '" + stored_name + "' found where '" + name + "' expected");
    }
    if (!stored.same_shape(m)) {
      throw DataError("checkpoint tensor '" + name + "' is " + shape_of(stored) + ", model expects " +
                      shape_of(m));
    }
    m = stored;
  });
  if (i != file.tensors.size()) throw DataError("checkpoint has extra tensors");
}

}  // namespace qsel
