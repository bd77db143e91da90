#include "capsgram/models/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "capsgram/error.hpp"

namespace capsgram {

namespace {

constexpr char kMagic[4] = {'C', 'G', 'L', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::filesystem::path& path) : bytes_(bytes), path_(path) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= std::uint64_t(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    pos_ += 8;
    return v;
  }

  std::string raw(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(path_.string() + ": truncated checkpoint while reading " + what + " at byte " +
                        std::to_string(pos_));
    }
  }

  const std::string& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::string out(kMagic, 4);
  for (const auto& p : model.parameters()) {
    put_u64(out, p.name.size());
    out += p.name;
    put_u64(out, p.value.rank());
    for (std::size_t e : p.value.shape()) put_u64(out, e);
    for (Real v : p.value.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("failed writing checkpoint " + path.string());
}

std::vector<Parameter> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader in(bytes, path);
  if (in.raw(4, "magic") != std::string(kMagic, 4)) {
    throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  }
  std::vector<Parameter> params;
  while (!in.done()) {
    Parameter p;
    const auto name_len = in.u64("name length");
    if (name_len > 4096) throw FormatError(path.string() + ": implausible parameter name length");
    p.name = in.raw(name_len, "name");
    const auto rank = in.u64("rank");
    if (rank > 8) throw FormatError(path.string() + ": implausible rank for '" + p.name + "'");
    Shape shape(rank);
    for (auto& e : shape) e = in.u64("extent");
    std::vector<Real> values(shape_numel(shape));
    for (auto& v : values) v = std::bit_cast<Real>(in.u64("values"));
    p.value = Tensor(std::move(shape), std::move(values));
    params.push_back(std::move(p));
  }
  return params;
}

void load_checkpoint(Model& model, const std::filesystem::path& path) {
  auto stored = read_checkpoint(path);
  auto& params = model.parameters();
  if (stored.size() != params.size()) {
    throw FormatError(path.string() + ": checkpoint has " + std::to_string(stored.size()) +
                      " parameters, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (stored[i].name != params[i].name || stored[i].value.shape() != params[i].value.shape()) {
      throw FormatError(path.string() + ": checkpoint parameter '" + stored[i].name + "' " +
                        shape_to_string(stored[i].value.shape()) + " does not match model parameter '" +
                        params[i].name + "' " + shape_to_string(params[i].value.shape()));
    }
    auto dst = params[i].value.mutable_data();
    const auto src = stored[i].value.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace capsgram
