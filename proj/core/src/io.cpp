#include "tinyann/io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unistd.h>

#include "tinyann/error.hpp"

namespace tinyann {

namespace {

constexpr std::string_view kModelFormat = "tinyann-model";
constexpr std::string_view kCompressedFormat = "tinyann-compressed";
constexpr std::string_view kDatasetFormat = "tinyann-dataset";
constexpr std::size_t kMaxHeaderBytes = 1 << 20;

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in pieces.
  constexpr std::size_t kPiece = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kPiece) {
    const auto n = std::min(kPiece, bytes.size() - off);
    crc = crc32(crc, bytes.data() + off, static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u32(bits);
  }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void text(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

  std::vector<std::uint8_t>& data() { return out_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  bool done() const noexcept { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::Truncated, "payload ends early");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

using Tokens = std::vector<std::string>;

struct Header {
  std::vector<Tokens> lines;  // without format, version and end
  std::size_t payload_offset = 0;
  std::size_t payload_size = 0;
};

Tokens split(std::string_view line) {
  Tokens out;
  std::istringstream in{std::string(line)};
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

std::size_t to_count(const std::string& s) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, "expected a count, got '" + s + "'");
  }
  if (pos != s.size() || s.front() == '-') throw Error(ErrorCode::ParseError, "expected a count, got '" + s + "'");
  return static_cast<std::size_t>(v);
}

/// Parses the text header, checks the format and version, then the
/// payload length and checksum.
Header read_header(std::span<const std::uint8_t> bytes, std::string_view format) {
  Header h;
  std::size_t pos = 0;
  bool ended = false;
  std::size_t index = 0;
  while (!ended) {
    if (pos >= bytes.size() || pos > kMaxHeaderBytes) throw Error(ErrorCode::Truncated, "header ends early");
    const auto* begin = bytes.data() + pos;
    const auto* nl = static_cast<const std::uint8_t*>(std::memchr(begin, '\n', bytes.size() - pos));
    if (!nl) throw Error(ErrorCode::Truncated, "header ends early");
    const std::string_view line(reinterpret_cast<const char*>(begin), static_cast<std::size_t>(nl - begin));
    pos += line.size() + 1;
    auto tokens = split(line);
    if (index == 0) {
      if (tokens.size() != 2 || tokens[0] != "format" || tokens[1] != format) {
        throw Error(ErrorCode::ParseError, "not a " + std::string(format) + " file");
      }
    } else if (index == 1) {
      if (tokens.size() != 2 || tokens[0] != "version") throw Error(ErrorCode::ParseError, "missing version line");
      if (tokens[1] != std::to_string(kFormatVersion)) {
        throw Error(ErrorCode::VersionUnsupported, "format version " + tokens[1] + " is not supported");
      }
    } else if (tokens.size() == 1 && tokens[0] == "end") {
      ended = true;
    } else if (tokens.size() == 2 && tokens[0] == "payload") {
      h.payload_size = to_count(tokens[1]);
    } else if (!tokens.empty()) {
      h.lines.push_back(std::move(tokens));
    }
    ++index;
  }
  h.payload_offset = pos;
  const std::size_t expected = pos + h.payload_size + 4;
  if (bytes.size() < expected) throw Error(ErrorCode::Truncated, "file shorter than its payload");
  if (bytes.size() > expected) throw Error(ErrorCode::ParseError, "trailing bytes after the checksum");
  Reader trailer(bytes.subspan(expected - 4));
  if (trailer.u32() != crc_of(bytes.first(expected - 4))) {
    throw Error(ErrorCode::ChecksumMismatch, "checksum mismatch");
  }
  return h;
}

void write_prologue(Writer& w, std::string_view format) {
  w.text("format ");
  w.text(format);
  w.text("\nversion " + std::to_string(kFormatVersion) + "\n");
}

void write_spec(Writer& w, const ModelSpec& spec) {
  w.text("features " + std::to_string(spec.features) + "\n");
  for (const auto& l : spec.layers) {
    w.text(std::string("layer ") + (l.kind == LayerKind::Recurrent ? "recurrent " : "dense ") +
           std::to_string(l.neurons) + " " + std::string(to_string(l.activation)) + "\n");
  }
}

void write_metadata(Writer& w, const Metadata& metadata) {
  for (const auto& [key, value] : metadata) {
    if (key.empty() || key.find_first_of(" \t\r\n") != std::string::npos ||
        value.find_first_of("\r\n") != std::string::npos) {
      throw Error(ErrorCode::InvalidArgument, "metadata keys need no whitespace and values no newlines");
    }
    w.text("meta " + key + " " + value + "\n");
  }
}

/// Appends payload length, end marker, payload and checksum.
std::vector<std::uint8_t> finish(Writer& w, std::span<const std::uint8_t> payload) {
  w.text("payload " + std::to_string(payload.size()) + "\nend\n");
  w.bytes(payload);
  const auto crc = crc_of(w.data());
  w.u32(crc);
  return std::move(w.data());
}

/// Spec and metadata lines shared by both model formats.
struct ModelHeader {
  ModelSpec spec;
  Metadata metadata;
  std::vector<Tokens> rest;
};

ModelHeader parse_model_header(const Header& h) {
  ModelHeader out;
  bool have_features = false;
  std::vector<LayerShape> shapes;
  for (const auto& t : h.lines) {
    if (t[0] == "features" && t.size() == 2) {
      out.spec.features = to_count(t[1]);
      have_features = true;
    } else if (t[0] == "layer" && t.size() == 4) {
      LayerShape s;
      if (t[1] == "dense") s.kind = LayerKind::Dense;
      else if (t[1] == "recurrent") s.kind = LayerKind::Recurrent;
      else throw Error(ErrorCode::ParseError, "unknown layer kind '" + t[1] + "'");
      s.neurons = to_count(t[2]);
      const auto act = activation_from_string(t[3]);
      if (!act) throw Error(ErrorCode::ParseError, "unknown activation '" + t[3] + "'");
      s.activation = *act;
      shapes.push_back(s);
    } else if (t[0] == "meta" && t.size() >= 2) {
      std::string value;
      for (std::size_t i = 2; i < t.size(); ++i) value += (i > 2 ? " " : "") + t[i];
      out.metadata[t[1]] = value;
    } else {
      out.rest.push_back(t);
    }
  }
  if (!have_features) throw Error(ErrorCode::ParseError, "missing features line");
  out.spec = ModelSpec::chain(out.spec.features, shapes);
  validate(out.spec);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Models

std::vector<std::uint8_t> serialize_model(const ModelSpec& spec, const Parameters& params,
                                          const Metadata& metadata) {
  validate(spec, params);
  Writer payload;
  for (const auto& l : params.layers) {
    for (double v : l.weights.data) payload.f32(static_cast<float>(v));
  }
  for (const auto& l : params.layers) {
    for (double v : l.biases) payload.f32(static_cast<float>(v));
  }
  Writer w;
  write_prologue(w, kModelFormat);
  write_spec(w, spec);
  write_metadata(w, metadata);
  return finish(w, payload.data());
}

ModelFile parse_model(std::span<const std::uint8_t> bytes) {
  const Header h = read_header(bytes, kModelFormat);
  auto mh = parse_model_header(h);
  if (!mh.rest.empty()) throw Error(ErrorCode::ParseError, "unexpected header line '" + mh.rest.front()[0] + "'");
  ModelFile file;
  file.spec = mh.spec;
  file.metadata = std::move(mh.metadata);
  file.params = Parameters::zeros(file.spec);
  std::size_t count = 0;
  for (const auto& l : file.params.layers) count += l.weights.size() + l.biases.size();
  if (h.payload_size != 4 * count) throw Error(ErrorCode::ParseError, "payload size does not match the spec");
  Reader r(bytes.subspan(h.payload_offset, h.payload_size));
  for (auto& l : file.params.layers) {
    for (auto& v : l.weights.data) v = r.f32();
  }
  for (auto& l : file.params.layers) {
    for (auto& v : l.biases) v = r.f32();
  }
  validate(file.spec, file.params);
  return file;
}

// ---------------------------------------------------------------------------
// Compressed models

namespace {

std::vector<std::uint8_t> compressed_payload(const CompressedModel& model) {
  Writer w;
  for (const auto& l : model.layers) {
    w.u16(static_cast<std::uint16_t>(l.centroids.size()));
    w.u32(static_cast<std::uint32_t>(l.surviving));
    w.u32(static_cast<std::uint32_t>(l.deltas.size()));
  }
  if (model.huffman) {
    const auto& c = model.coded;
    w.u16(static_cast<std::uint16_t>(c.table.size()));
    for (const auto& [symbol, length] : c.table) {
      w.u8(symbol);
      w.u8(length);
    }
    w.u32(static_cast<std::uint32_t>(c.symbol_count));
    w.u32(static_cast<std::uint32_t>(c.bit_count));
    w.bytes(c.bits);
  } else {
    w.bytes(model.weight_stream());
  }
  for (const auto& l : model.layers) {
    for (float b : l.biases) w.f32(b);
  }
  return std::move(w.data());
}

}  // namespace

std::size_t compressed_payload_size(const CompressedModel& model) { return compressed_payload(model).size(); }

std::vector<std::uint8_t> serialize_compressed(const CompressedModel& model, const Metadata& metadata) {
  if (model.layers.size() != model.spec.layers.size()) {
    throw Error(ErrorCode::ShapeMismatch, "compressed layers do not match the spec");
  }
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& cl = model.layers[l];
    if (cl.centroids.size() > 0xFFFF || cl.surviving > 0xFFFFFFFFu) {
      throw Error(ErrorCode::InvalidArgument, "layer too large for the compressed format");
    }
    if (cl.rows != model.spec.layers[l].neurons || cl.cols != model.spec.layers[l].fan_in()) {
      throw Error(ErrorCode::ShapeMismatch, "compressed layer shape differs from the spec");
    }
  }
  Writer w;
  write_prologue(w, kCompressedFormat);
  write_spec(w, model.spec);
  w.text(std::string("huffman ") + (model.huffman ? "1" : "0") + "\n");
  write_metadata(w, metadata);
  return finish(w, compressed_payload(model));
}

CompressedFile parse_compressed(std::span<const std::uint8_t> bytes) {
  const Header h = read_header(bytes, kCompressedFormat);
  auto mh = parse_model_header(h);
  CompressedFile file;
  auto& m = file.model;
  m.spec = mh.spec;
  file.metadata = std::move(mh.metadata);
  bool have_flag = false;
  for (const auto& t : mh.rest) {
    if (t[0] == "huffman" && t.size() == 2 && (t[1] == "0" || t[1] == "1")) {
      m.huffman = t[1] == "1";
      have_flag = true;
    } else {
      throw Error(ErrorCode::ParseError, "unexpected header line '" + t[0] + "'");
    }
  }
  if (!have_flag) throw Error(ErrorCode::ParseError, "missing huffman line");

  Reader r(bytes.subspan(h.payload_offset, h.payload_size));
  std::size_t stream_size = 0;
  for (const auto& spec : m.spec.layers) {
    CompressedLayer cl;
    cl.rows = spec.neurons;
    cl.cols = spec.fan_in();
    cl.centroids.resize(r.u16());
    cl.bits = bits_per_index(cl.centroids.size());
    cl.surviving = r.u32();
    cl.deltas.resize(r.u32());
    if (cl.surviving > cl.rows * cl.cols || cl.deltas.size() > cl.rows * cl.cols) {
      throw Error(ErrorCode::CorruptStream, "layer counts exceed the layer size");
    }
    cl.indices.resize((cl.surviving * cl.bits + 7) / 8);
    stream_size += 4 * cl.centroids.size() + cl.indices.size() + cl.deltas.size();
    m.layers.push_back(std::move(cl));
  }

  std::vector<std::uint8_t> stream;
  if (m.huffman) {
    auto& c = m.coded;
    const std::size_t entries = r.u16();
    for (std::size_t i = 0; i < entries; ++i) {
      const auto symbol = r.u8();
      c.table.emplace_back(symbol, r.u8());
    }
    c.symbol_count = r.u32();
    c.bit_count = r.u32();
    const auto bits = r.bytes((c.bit_count + 7) / 8);
    c.bits.assign(bits.begin(), bits.end());
    stream = huffman_decode(c);
    if (stream.size() != stream_size) throw Error(ErrorCode::CorruptStream, "Huffman stream has the wrong length");
  } else {
    const auto raw = r.bytes(stream_size);
    stream.assign(raw.begin(), raw.end());
  }

  Reader s(stream);
  for (auto& cl : m.layers) {
    for (auto& c : cl.centroids) c = s.f32();
    const auto idx = s.bytes(cl.indices.size());
    std::copy(idx.begin(), idx.end(), cl.indices.begin());
    const auto d = s.bytes(cl.deltas.size());
    std::copy(d.begin(), d.end(), cl.deltas.begin());
  }
  for (auto& cl : m.layers) {
    cl.biases.resize(cl.rows);
    for (auto& b : cl.biases) b = r.f32();
  }
  if (!r.done()) throw Error(ErrorCode::ParseError, "unexpected bytes in the compressed payload");
  decode_model(m);  // validates the layer streams
  return file;
}

// ---------------------------------------------------------------------------
// Datasets

std::vector<std::uint8_t> serialize_dataset(const Dataset& dataset) {
  const auto& seq = dataset.sequence;
  if (!(dataset.fps > 0.0) || !std::isfinite(dataset.fps)) {
    throw Error(ErrorCode::InvalidArgument, "frame rate must be positive");
  }
  const bool phases = !seq.phases.empty();
  if (phases && seq.phases.size() != seq.images.size()) {
    throw Error(ErrorCode::ShapeMismatch, "phase labels must cover every frame");
  }
  Writer payload;
  for (const auto& image : seq.images) {
    if (image.width != seq.width || image.height != seq.height || image.pixels.size() != seq.width * seq.height) {
      throw Error(ErrorCode::ShapeMismatch, "image dimensions differ from the dataset's");
    }
    for (auto px : image.pixels) {
      if (px > kAdcMax) throw Error(ErrorCode::PixelOutOfRange, "pixel value " + std::to_string(px) + " above 1023");
      payload.u16(px);
    }
  }
  for (const auto& a : seq.annotations) {
    if (a.frame >= seq.images.size()) throw Error(ErrorCode::InvalidArgument, "annotation past the last frame");
    payload.u32(static_cast<std::uint32_t>(a.frame));
    payload.u8(static_cast<std::uint8_t>(a.label));
  }
  for (auto p : seq.phases) {
    if (p >= phase::kStates) throw Error(ErrorCode::InvalidArgument, "phase label out of range");
    payload.u8(p);
  }

  std::ostringstream fps;
  fps.precision(17);
  fps << dataset.fps;
  Writer w;
  write_prologue(w, kDatasetFormat);
  w.text("width " + std::to_string(seq.width) + "\nheight " + std::to_string(seq.height) + "\n");
  w.text("fps " + fps.str() + "\n");
  w.text("frames " + std::to_string(seq.images.size()) + "\n");
  w.text("annotations " + std::to_string(seq.annotations.size()) + "\n");
  w.text(std::string("phases ") + (phases ? "1" : "0") + "\n");
  return finish(w, payload.data());
}

Dataset parse_dataset(std::span<const std::uint8_t> bytes) {
  const Header h = read_header(bytes, kDatasetFormat);
  Dataset d;
  auto& seq = d.sequence;
  std::size_t frames = 0;
  std::size_t annotations = 0;
  bool phases = false;
  unsigned seen = 0;
  for (const auto& t : h.lines) {
    if (t.size() != 2) throw Error(ErrorCode::ParseError, "malformed header line '" + t[0] + "'");
    if (t[0] == "width") seq.width = to_count(t[1]), seen |= 1;
    else if (t[0] == "height") seq.height = to_count(t[1]), seen |= 2;
    else if (t[0] == "fps") {
      try {
        d.fps = std::stod(t[1]);
      } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, "bad frame rate");
      }
      seen |= 4;
    } else if (t[0] == "frames") frames = to_count(t[1]), seen |= 8;
    else if (t[0] == "annotations") annotations = to_count(t[1]), seen |= 16;
    else if (t[0] == "phases") phases = t[1] == "1", seen |= 32;
    else throw Error(ErrorCode::ParseError, "unexpected header line '" + t[0] + "'");
  }
  if (seen != 63) throw Error(ErrorCode::ParseError, "incomplete dataset header");
  const std::size_t pixels = seq.width * seq.height;
  const std::size_t expected = frames * pixels * 2 + annotations * 5 + (phases ? frames : 0);
  if (h.payload_size != expected) throw Error(ErrorCode::ParseError, "payload size does not match the header");

  Reader r(bytes.subspan(h.payload_offset, h.payload_size));
  seq.images.reserve(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    Image image(seq.width, seq.height, std::vector<std::uint16_t>(pixels));
    for (auto& px : image.pixels) {
      px = r.u16();
      if (px > kAdcMax) throw Error(ErrorCode::PixelOutOfRange, "stored pixel above 1023");
    }
    seq.images.push_back(std::move(image));
  }
  for (std::size_t i = 0; i < annotations; ++i) {
    Annotation a;
    a.frame = r.u32();
    const auto label = r.u8();
    if (label >= kGestureClasses || a.frame >= frames) throw Error(ErrorCode::ParseError, "invalid annotation");
    a.label = static_cast<GestureClass>(label);
    seq.annotations.push_back(a);
  }
  if (phases) {
    seq.phases.resize(frames);
    for (auto& p : seq.phases) {
      p = r.u8();
      if (p >= phase::kStates) throw Error(ErrorCode::ParseError, "invalid phase label");
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Files

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot create " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::IoError, "cannot replace " + path.string());
  }
}

void save_model(const std::filesystem::path& path, const ModelSpec& spec, const Parameters& params,
                const Metadata& metadata) {
  write_file_atomic(path, serialize_model(spec, params, metadata));
}

ModelFile load_model(const std::filesystem::path& path) { return parse_model(read_file(path)); }

void save_compressed(const std::filesystem::path& path, const CompressedModel& model, const Metadata& metadata) {
  write_file_atomic(path, serialize_compressed(model, metadata));
}

CompressedFile load_compressed(const std::filesystem::path& path) { return parse_compressed(read_file(path)); }

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  write_file_atomic(path, serialize_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) { return parse_dataset(read_file(path)); }

}  // namespace tinyann
