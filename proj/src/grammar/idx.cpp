#include "capsgram/grammar/idx.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <json.hpp>

#include "capsgram/error.hpp"

namespace capsgram {

namespace {

using Json = nlohmann::ordered_json;

constexpr unsigned char kImageMagic[4] = {0x00, 0x00, 0x08, 0x03};
constexpr unsigned char kLabelMagic[4] = {0x00, 0x00, 0x08, 0x01};

void put_u32(std::string& out, std::size_t v) {
  if (v > 0xFFFFFFFFu) throw DomainError("IDX extent does not fit in 32 bits");
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xFF));
}

std::size_t get_u32(const std::string& bytes, std::size_t pos) {
  std::size_t v = 0;
  for (std::size_t k = 0; k < 4; ++k) v = (v << 8) | static_cast<unsigned char>(bytes[pos + k]);
  return v;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void spill(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

void check_header(const std::string& bytes, const unsigned char (&magic)[4], std::size_t header,
                  const std::filesystem::path& path) {
  if (bytes.size() < header) {
    throw FormatError(path.string() + ": truncated IDX header (" + std::to_string(bytes.size()) + " bytes)");
  }
  for (std::size_t k = 0; k < 4; ++k) {
    if (static_cast<unsigned char>(bytes[k]) != magic[k]) {
      throw FormatError(path.string() + ": bad IDX magic");
    }
  }
}

void check_payload(const std::string& bytes, std::size_t expected, const std::filesystem::path& path) {
  if (bytes.size() < expected) {
    throw FormatError(path.string() + ": truncated IDX payload, expected " + std::to_string(expected) +
                      " bytes, found " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) {
    throw FormatError(path.string() + ": " + std::to_string(bytes.size() - expected) + " trailing bytes");
  }
}

}  // namespace

Tensor ImageSet::image(std::size_t i) const {
  if (i >= count) throw std::out_of_range("image " + std::to_string(i) + " of " + std::to_string(count));
  std::vector<Real> px(height * width);
  const std::uint8_t* src = pixels.data() + i * height * width;
  for (std::size_t k = 0; k < px.size(); ++k) px[k] = static_cast<Real>(src[k]) / 255.0;
  return Tensor({1, height, width}, std::move(px));
}

void ImageSet::append(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 1) {
    throw ShapeError("ImageSet::append: expected [1,H,W], got " + shape_to_string(image.shape()));
  }
  if (count == 0 && pixels.empty()) {
    height = image.dim(1);
    width = image.dim(2);
  } else if (image.dim(1) != height || image.dim(2) != width) {
    throw ShapeError("ImageSet::append: image extent differs from the set");
  }
  for (Real p : image.data()) pixels.push_back(quantize(p));
  ++count;
}

std::uint8_t quantize(Real p) {
  const Real c = std::min(1.0, std::max(0.0, p));
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

void write_idx_images(const std::filesystem::path& path, const ImageSet& images) {
  if (images.pixels.size() != images.count * images.height * images.width) {
    throw ShapeError("write_idx_images: pixel count does not match extents");
  }
  std::string out(reinterpret_cast<const char*>(kImageMagic), 4);
  put_u32(out, images.count);
  put_u32(out, images.height);
  put_u32(out, images.width);
  out.append(reinterpret_cast<const char*>(images.pixels.data()), images.pixels.size());
  spill(path, out);
}

ImageSet read_idx_images(const std::filesystem::path& path) {
  const std::string bytes = slurp(path);
  check_header(bytes, kImageMagic, 16, path);
  ImageSet s;
  s.count = get_u32(bytes, 4);
  s.height = get_u32(bytes, 8);
  s.width = get_u32(bytes, 12);
  check_payload(bytes, 16 + s.count * s.height * s.width, path);
  s.pixels.assign(bytes.begin() + 16, bytes.end());
  return s;
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
  std::string out(reinterpret_cast<const char*>(kLabelMagic), 4);
  put_u32(out, labels.size());
  out.append(reinterpret_cast<const char*>(labels.data()), labels.size());
  spill(path, out);
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  const std::string bytes = slurp(path);
  check_header(bytes, kLabelMagic, 8, path);
  check_payload(bytes, 8 + get_u32(bytes, 4), path);
  return {bytes.begin() + 8, bytes.end()};
}

void write_manifest(const std::filesystem::path& path, const std::vector<SceneManifest>& manifests) {
  std::string out;
  for (const auto& m : manifests) {
    Json j;
    j["index"] = m.index;
    j["label"] = m.label;
    j["parts"] = Json::array();
    for (const auto& p : m.parts) {
      j["parts"].push_back({{"name", p.name}, {"glyph", p.glyph}, {"box", {p.box.y0, p.box.x0, p.box.y1, p.box.x1}}});
    }
    if (m.has_swap()) j["swap"] = {m.swap[0], m.swap[1]};
    Json jitters = Json::array();
    for (const auto& o : m.derivation.jitters) jitters.push_back({o.dy, o.dx});
    j["derivation"] = {{"or", m.derivation.or_choices}, {"jitter", jitters}};
    out += j.dump();
    out += '\n';
  }
  spill(path, out);
}

std::vector<SceneManifest> read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<SceneManifest> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = Json::parse(line);
      SceneManifest m;
      m.index = j.at("index").get<std::size_t>();
      m.label = j.at("label").get<int>();
      for (const auto& p : j.at("parts")) {
        const auto b = p.at("box").get<std::vector<int>>();
        if (b.size() != 4) throw FormatError("box must have four coordinates");
        m.parts.push_back({p.at("name").get<std::string>(), p.at("glyph").get<int>(), Box{b[0], b[1], b[2], b[3]}});
      }
      if (j.contains("swap")) {
        const auto s = j.at("swap").get<std::vector<int>>();
        if (s.size() != 2) throw FormatError("swap must name two parts");
        m.swap = {s[0], s[1]};
      }
      if (j.contains("derivation")) {
        const auto& d = j.at("derivation");
        m.derivation.or_choices = d.at("or").get<std::vector<std::size_t>>();
        for (const auto& o : d.at("jitter")) m.derivation.jitters.push_back({o.at(0).get<int>(), o.at(1).get<int>()});
      }
      out.push_back(std::move(m));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace capsgram
