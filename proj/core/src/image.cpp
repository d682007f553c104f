#include "milkit/image.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace milkit {

void SlideImage::validate() const {
  if (width < 1 || height < 1) {
    throw std::invalid_argument("image '" + id + "': dimensions must be at least 1x1, got " +
                                std::to_string(width) + "x" + std::to_string(height));
  }
  if (channels != 1 && channels != 3) {
    throw std::invalid_argument("image '" + id + "': channels must be 1 or 3");
  }
  if (pixels.size() != static_cast<std::size_t>(width) * height * channels) {
    throw std::invalid_argument("image '" + id + "': pixel buffer size mismatch");
  }
}

namespace {

// Reads the next PNM header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
    } else if (!std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      while ((c = in.peek()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(in.get()));
      return tok;
    }
  }
  throw std::runtime_error("unexpected end of PNM header");
}

}  // namespace

SlideImage read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image file: " + path.string());

  const std::string magic = next_token(in);
  int channels;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw std::runtime_error("unsupported image format '" + magic + "' in " + path.string());

  const int width = std::stoi(next_token(in));
  const int height = std::stoi(next_token(in));
  const int maxval = std::stoi(next_token(in));
  if (maxval != 255) {
    throw std::runtime_error("unsupported maxval " + std::to_string(maxval) + " in " +
                             path.string());
  }
  in.get();  // single whitespace after maxval

  SlideImage img;
  img.id = path.stem().string();
  img.width = width;
  img.height = height;
  img.channels = channels;
  const std::size_t n = static_cast<std::size_t>(width) * height * channels;
  std::vector<unsigned char> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw std::runtime_error("truncated image data in " + path.string());
  }
  img.pixels.assign(raw.begin(), raw.end());
  img.validate();
  return img;
}

void write_image(const SlideImage& image, const std::filesystem::path& path) {
  image.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image file: " + path.string());
  out << (image.channels == 1 ? "P5" : "P6") << "\n"
      << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> raw(image.pixels.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double v = std::round(image.pixels[i]);
    raw[i] = static_cast<unsigned char>(v < 0.0 ? 0.0 : (v > 255.0 ? 255.0 : v));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw std::runtime_error("failed writing image data to " + path.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string label_str;
    if (!std::getline(ls, e.id, ',') || !std::getline(ls, e.image_path, ',') ||
        !std::getline(ls, label_str)) {
      throw std::runtime_error("manifest " + path.string() + " line " + std::to_string(lineno) +
                               ": expected 'id,image_path,label'");
    }
    e.label = std::stoi(label_str);
    if (e.label != 0 && e.label != 1) {
      throw std::runtime_error("manifest " + path.string() + " line " + std::to_string(lineno) +
                               ": label must be 0 or 1");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path.string());
  for (const auto& e : entries) out << e.id << ',' << e.image_path << ',' << e.label << '\n';
}

}  // namespace milkit
