#include "fgr/io.hpp"

#include <array>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fgr/appearance.hpp"

namespace fgr {

namespace {

// ---------------------------------------------------------------------------
// Little-endian byte codec shared by every binary format.

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(v & 0xFF);
  out.push_back((v >> 8) & 0xFF);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF);
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct ByteReader {
  const std::uint8_t* data;
  std::size_t len;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > len) throw FormatError("unexpected end of file");
  }
  std::uint8_t u8() {
    need(1);
    return data[pos++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = data[pos] | (std::uint16_t(data[pos + 1]) << 8);
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
};

std::vector<std::uint8_t> read_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_binary(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

// Appends the CRC of everything accumulated so far and flushes to disk.
void seal_and_write(std::vector<std::uint8_t>& bytes, const std::string& path) {
  put_u32(bytes, crc32(bytes.data(), bytes.size()));
  write_binary(path, bytes);
}

// Verifies magic and trailing checksum; returns a reader over the payload.
ByteReader open_sealed(const std::vector<std::uint8_t>& bytes,
                       const char magic[4], const std::string& path) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), magic, 4) != 0) {
    throw FormatError(path + ": bad magic (expected " +
                      std::string(magic, 4) + ")");
  }
  if (bytes.size() < 8) throw ChecksumError(path + ": file too short");
  const std::size_t payload = bytes.size() - 4;
  ByteReader tail{bytes.data() + payload, 4, 0};
  const std::uint32_t stored = tail.u32();
  if (crc32(bytes.data(), payload) != stored) {
    throw ChecksumError(path + ": checksum mismatch");
  }
  ByteReader r{bytes.data(), payload, 0};
  r.pos = 4;  // past the magic
  return r;
}

void put_shape(std::vector<std::uint8_t>& out, const Shape& shape) {
  out.push_back(static_cast<std::uint8_t>(shape.rank()));
  for (int i = 0; i < shape.rank(); ++i)
    put_u32(out, static_cast<std::uint32_t>(shape[i]));
}

Shape get_shape(ByteReader& r) {
  const int rank = r.u8();
  if (rank < 1 || rank > kMaxRank) throw FormatError("bad shape rank");
  std::vector<int> dims(rank);
  for (int i = 0; i < rank; ++i) dims[i] = static_cast<int>(r.u32());
  return Shape(dims);
}

void put_tensor(std::vector<std::uint8_t>& out, const Tensorf& t) {
  if (t.empty()) {
    out.push_back(0);  // rank 0 marks "no parameters"
    return;
  }
  put_shape(out, t.shape());
  for (long long i = 0; i < t.size(); ++i) put_f32(out, t[i]);
}

Tensorf get_tensor(ByteReader& r) {
  r.need(1);
  if (r.data[r.pos] == 0) {
    ++r.pos;
    return Tensorf();
  }
  const Shape shape = get_shape(r);
  Tensorf t(shape);
  for (long long i = 0; i < t.size(); ++i) t[i] = r.f32();
  return t;
}

// ---------------------------------------------------------------------------

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

int parse_int(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(where + ": not an integer: '" + s + "'");
  }
}

float parse_float(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const float v = std::stof(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(where + ": not a number: '" + s + "'");
  }
}

std::string format_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::uint32_t crc32(const std::uint8_t* data, std::size_t len) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int bit = 0; bit < 8; ++bit)
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i)
    crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

// ---------------------------------------------------------------------------
// FER CSV

std::vector<FerRecord> parse_fer_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "emotion,pixels,Usage") {
    throw ParseError(path + ": line 1: expected header 'emotion,pixels,Usage'");
  }
  std::vector<FerRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path + ": line " + std::to_string(line_no);
    const auto fields = split(line, ',');
    if (fields.size() != 3) throw ParseError(where + ": expected 3 fields");

    FerRecord rec;
    rec.emotion = parse_int(fields[0], where);
    if (rec.emotion < 0 || rec.emotion > 6) {
      throw ParseError(where + ": emotion label " + fields[0] +
                       " outside 0..6");
    }
    rec.image = Tensorf(Shape{48, 48});
    const std::string& pixels = fields[1];
    std::size_t pos = 0;
    for (int i = 0; i < 48 * 48; ++i) {
      while (pos < pixels.size() && pixels[pos] == ' ') ++pos;
      if (pos >= pixels.size())
        throw ParseError(where + ": expected 2304 pixels, found " +
                         std::to_string(i));
      int v = 0;
      bool any = false;
      while (pos < pixels.size() && pixels[pos] >= '0' && pixels[pos] <= '9') {
        v = v * 10 + (pixels[pos] - '0');
        ++pos;
        any = true;
      }
      if (!any) throw ParseError(where + ": bad pixel token");
      if (v > 255) throw ParseError(where + ": pixel value " +
                                    std::to_string(v) + " exceeds 255");
      rec.image[i] = static_cast<float>(v);
    }
    while (pos < pixels.size() && pixels[pos] == ' ') ++pos;
    if (pos != pixels.size())
      throw ParseError(where + ": more than 2304 pixels");

    if (fields[2] == "Training") rec.usage = FerUsage::Training;
    else if (fields[2] == "PublicTest") rec.usage = FerUsage::PublicTest;
    else if (fields[2] == "PrivateTest") rec.usage = FerUsage::PrivateTest;
    else throw ParseError(where + ": unknown usage '" + fields[2] + "'");
    records.push_back(std::move(rec));
  }
  return records;
}

void write_fer_csv(const std::vector<FerRecord>& records,
                   const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "emotion,pixels,Usage\n";
  for (const auto& rec : records) {
    out << rec.emotion << ',';
    for (int i = 0; i < 48 * 48; ++i) {
      if (i) out << ' ';
      out << static_cast<int>(rec.image[i]);
    }
    const char* usage = rec.usage == FerUsage::Training     ? "Training"
                        : rec.usage == FerUsage::PublicTest ? "PublicTest"
                                                            : "PrivateTest";
    out << ',' << usage << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

// ---------------------------------------------------------------------------
// Manifest TSV

namespace {

const std::vector<std::string> kManifestColumns = {
    "image",  "eye_left_x", "eye_left_y", "eye_right_x", "eye_right_y",
    "emotion", "age",       "gender",     "ethnicity",   "glasses",
    "beard",  "mustache",   "target"};

struct LabelRange {
  const char* name;
  int max;  // inclusive
};

std::optional<int> parse_label(const std::string& value, const LabelRange& range,
                               const std::string& where) {
  if (value == "-") return std::nullopt;
  const int v = parse_int(value, where);
  if (v < 0 || v > range.max) {
    throw ParseError(where + ": " + range.name + " label " + value +
                     " outside 0.." + std::to_string(range.max));
  }
  return v;
}

}  // namespace

std::vector<ManifestRow> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line, '\t');
  std::vector<int> column_of(kManifestColumns.size(), -1);
  for (std::size_t i = 0; i < header.size(); ++i) {
    bool known = false;
    for (std::size_t c = 0; c < kManifestColumns.size(); ++c) {
      if (header[i] == kManifestColumns[c]) {
        column_of[c] = static_cast<int>(i);
        known = true;
        break;
      }
    }
    if (!known) {
      throw ParseError(path + ": line 1, column " + std::to_string(i + 1) +
                       ": unknown column '" + header[i] + "'");
    }
  }
  if (column_of[0] < 0) throw ParseError(path + ": missing 'image' column");

  const auto field = [&](const std::vector<std::string>& fields,
                         int col) -> const std::string& {
    static const std::string absent = "-";
    const int idx = column_of[col];
    return idx < 0 ? absent : fields[idx];
  };

  std::vector<ManifestRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path + ": line " + std::to_string(line_no);
    const auto fields = split(line, '\t');
    if (fields.size() != header.size()) {
      throw ParseError(where + ": expected " + std::to_string(header.size()) +
                       " fields, got " + std::to_string(fields.size()));
    }
    ManifestRow row;
    row.image = field(fields, 0);
    if (row.image.empty() || row.image == "-") {
      throw ParseError(where + ": missing image path");
    }
    const std::string& lx = field(fields, 1);
    const std::string& ly = field(fields, 2);
    const std::string& rx = field(fields, 3);
    const std::string& ry = field(fields, 4);
    const bool any_eye = lx != "-" || ly != "-" || rx != "-" || ry != "-";
    if (any_eye) {
      if (lx == "-" || ly == "-" || rx == "-" || ry == "-") {
        throw ParseError(where + ": partial eye annotation");
      }
      row.eyes = FaceAnnotation{parse_float(lx, where), parse_float(ly, where),
                                parse_float(rx, where), parse_float(ry, where)};
    }
    row.emotion = parse_label(field(fields, 5), {"emotion", 6}, where);
    row.age = parse_label(field(fields, 6), {"age", 16}, where);
    row.gender = parse_label(field(fields, 7), {"gender", 1}, where);
    row.ethnicity = parse_label(field(fields, 8), {"ethnicity", 4}, where);
    row.glasses = parse_label(field(fields, 9), {"glasses", 1}, where);
    row.beard = parse_label(field(fields, 10), {"beard", 2}, where);
    row.mustache = parse_label(field(fields, 11), {"mustache", 2}, where);
    const std::string& target = field(fields, 12);
    if (target != "-") {
      std::vector<float> values;
      for (const auto& tok : split(target, ','))
        values.push_back(parse_float(tok, where));
      if (values.size() < 3) {
        throw ParseError(where + ": target needs k coeffs plus 2 pose angles");
      }
      row.target = std::move(values);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_manifest(const std::vector<ManifestRow>& rows,
                    const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (std::size_t i = 0; i < kManifestColumns.size(); ++i) {
    if (i) out << '\t';
    out << kManifestColumns[i];
  }
  out << '\n';
  const auto label = [&](const std::optional<int>& v) {
    return v ? std::to_string(*v) : "-";
  };
  for (const auto& row : rows) {
    out << row.image << '\t';
    if (row.eyes) {
      out << format_float(row.eyes->left_x) << '\t'
          << format_float(row.eyes->left_y) << '\t'
          << format_float(row.eyes->right_x) << '\t'
          << format_float(row.eyes->right_y);
    } else {
      out << "-\t-\t-\t-";
    }
    out << '\t' << label(row.emotion) << '\t' << label(row.age) << '\t'
        << label(row.gender) << '\t' << label(row.ethnicity) << '\t'
        << label(row.glasses) << '\t' << label(row.beard) << '\t'
        << label(row.mustache) << '\t';
    if (row.target) {
      for (std::size_t i = 0; i < row.target->size(); ++i) {
        if (i) out << ',';
        out << format_float((*row.target)[i]);
      }
    } else {
      out << '-';
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

// ---------------------------------------------------------------------------
// Model file

namespace {

constexpr std::uint16_t kModelVersion = 1;

enum LayerTag : std::uint8_t {
  kTagConv = 1,
  kTagMaxPool = 2,
  kTagLcn = 3,
  kTagRelu = 4,
  kTagFc = 5,
  kTagDropout = 6,
  kTagSoftmax = 7,
  kTagBlockSoftmax = 8,
  kTagLinear = 9,
};

void put_layer_spec(std::vector<std::uint8_t>& out, const LayerSpec& spec) {
  if (const auto* c = std::get_if<ConvSpec>(&spec)) {
    out.push_back(kTagConv);
    put_u32(out, c->maps);
    put_u32(out, c->kernel_h);
    put_u32(out, c->kernel_w);
    put_u32(out, c->stride);
  } else if (const auto* p = std::get_if<MaxPoolSpec>(&spec)) {
    out.push_back(kTagMaxPool);
    put_u32(out, p->kernel);
    put_u32(out, p->stride);
  } else if (const auto* l = std::get_if<LcnSpec>(&spec)) {
    out.push_back(kTagLcn);
    put_u32(out, l->window);
    put_f32(out, l->floor);
  } else if (std::get_if<ReluSpec>(&spec)) {
    out.push_back(kTagRelu);
  } else if (const auto* f = std::get_if<FullyConnectedSpec>(&spec)) {
    out.push_back(kTagFc);
    put_u32(out, f->units);
  } else if (const auto* d = std::get_if<DropoutSpec>(&spec)) {
    out.push_back(kTagDropout);
    put_f32(out, d->p);
  } else if (const auto* s = std::get_if<OutputSoftmaxSpec>(&spec)) {
    out.push_back(kTagSoftmax);
    put_u32(out, s->classes);
  } else if (const auto* b = std::get_if<OutputBlockSoftmaxSpec>(&spec)) {
    out.push_back(kTagBlockSoftmax);
    put_u32(out, static_cast<std::uint32_t>(b->block_sizes.size()));
    for (int v : b->block_sizes) put_u32(out, v);
  } else if (const auto* o = std::get_if<OutputLinearSpec>(&spec)) {
    out.push_back(kTagLinear);
    put_u32(out, o->dim);
  }
}

LayerSpec get_layer_spec(ByteReader& r) {
  switch (r.u8()) {
    case kTagConv: {
      ConvSpec c;
      c.maps = r.u32();
      c.kernel_h = r.u32();
      c.kernel_w = r.u32();
      c.stride = r.u32();
      return c;
    }
    case kTagMaxPool: {
      MaxPoolSpec p;
      p.kernel = r.u32();
      p.stride = r.u32();
      return p;
    }
    case kTagLcn: {
      LcnSpec l;
      l.window = r.u32();
      l.floor = r.f32();
      return l;
    }
    case kTagRelu:
      return ReluSpec{};
    case kTagFc: {
      FullyConnectedSpec f;
      f.units = r.u32();
      return f;
    }
    case kTagDropout: {
      DropoutSpec d;
      d.p = r.f32();
      return d;
    }
    case kTagSoftmax: {
      OutputSoftmaxSpec s;
      s.classes = r.u32();
      return s;
    }
    case kTagBlockSoftmax: {
      OutputBlockSoftmaxSpec b;
      const std::uint32_t n = r.u32();
      for (std::uint32_t i = 0; i < n; ++i)
        b.block_sizes.push_back(static_cast<int>(r.u32()));
      return b;
    }
    case kTagLinear: {
      OutputLinearSpec o;
      o.dim = r.u32();
      return o;
    }
    default:
      throw FormatError("unknown layer tag");
  }
}

}  // namespace

void save_model(const NetworkState<float>& net, const std::string& path) {
  std::vector<std::uint8_t> bytes;
  bytes.insert(bytes.end(), {'F', 'G', 'R', '1'});
  put_u16(bytes, kModelVersion);
  put_u16(bytes, static_cast<std::uint16_t>(net.num_layers()));
  put_shape(bytes, net.input_shape);
  for (int i = 0; i < net.num_layers(); ++i) {
    put_layer_spec(bytes, net.specs[i]);
    put_tensor(bytes, net.weights[i]);
    put_tensor(bytes, net.biases[i]);
  }
  seal_and_write(bytes, path);
}

NetworkState<float> load_model(const std::string& path) {
  const auto bytes = read_binary(path);
  ByteReader r = open_sealed(bytes, "FGR1", path);
  const std::uint16_t version = r.u16();
  if (version != kModelVersion) {
    throw VersionError(path + ": unsupported model version " +
                       std::to_string(version) + "; supported: " +
                       std::to_string(kModelVersion));
  }
  const int layers = r.u16();
  const Shape input_shape = get_shape(r);
  NetworkState<float> net;
  net.input_shape = input_shape;
  net.mode = Mode::Eval;
  for (int i = 0; i < layers; ++i) {
    net.specs.push_back(get_layer_spec(r));
    net.weights.push_back(get_tensor(r));
    net.biases.push_back(get_tensor(r));
  }
  // momentum buffers are not persisted; reset to zero
  net.vel_weights.resize(layers);
  net.vel_biases.resize(layers);
  for (int i = 0; i < layers; ++i) {
    if (!net.weights[i].empty()) {
      net.vel_weights[i] = Tensorf(net.weights[i].shape());
      net.vel_biases[i] = Tensorf(net.biases[i].shape());
    }
  }
  // shape consistency: the stack must reconstruct on the stored input shape
  const auto shapes = infer_shapes(net.specs, net.input_shape);
  Shape cur = net.input_shape;
  for (int i = 0; i < layers; ++i) {
    if (const auto* c = std::get_if<ConvSpec>(&net.specs[i])) {
      const Shape expect{c->maps, cur[0], c->kernel_h, c->kernel_w};
      if (net.weights[i].shape() != expect) {
        throw FormatError(path + ": layer " + std::to_string(i) +
                          " weight shape " + net.weights[i].shape().str() +
                          " does not reconstruct (expected " + expect.str() + ")");
      }
    } else if (std::get_if<FullyConnectedSpec>(&net.specs[i]) ||
               is_output_layer(net.specs[i])) {
      const Shape expect{static_cast<int>(shapes[i].total()),
                         static_cast<int>(cur.total())};
      if (net.weights[i].shape() != expect) {
        throw FormatError(path + ": layer " + std::to_string(i) +
                          " weight shape does not reconstruct");
      }
    }
    cur = shapes[i];
  }
  return net;
}

// ---------------------------------------------------------------------------
// PixelStats sidecar

void save_pixel_stats(const PixelStats& stats, const std::string& path) {
  std::vector<std::uint8_t> bytes;
  bytes.insert(bytes.end(), {'F', 'S', 'T', '1'});
  put_u16(bytes, 1);
  put_u32(bytes, stats.mean.dim(0));
  put_u32(bytes, stats.mean.dim(1));
  for (long long i = 0; i < stats.mean.size(); ++i) put_f32(bytes, stats.mean[i]);
  for (long long i = 0; i < stats.std.size(); ++i) put_f32(bytes, stats.std[i]);
  put_u16(bytes, static_cast<std::uint16_t>(stats.source.size()));
  bytes.insert(bytes.end(), stats.source.begin(), stats.source.end());
  seal_and_write(bytes, path);
}

PixelStats load_pixel_stats(const std::string& path) {
  const auto bytes = read_binary(path);
  ByteReader r = open_sealed(bytes, "FST1", path);
  const std::uint16_t version = r.u16();
  if (version != 1) {
    throw VersionError(path + ": unsupported stats version " +
                       std::to_string(version));
  }
  const int h = static_cast<int>(r.u32());
  const int w = static_cast<int>(r.u32());
  PixelStats stats{Tensorf(Shape{h, w}), Tensorf(Shape{h, w}), ""};
  for (long long i = 0; i < stats.mean.size(); ++i) stats.mean[i] = r.f32();
  for (long long i = 0; i < stats.std.size(); ++i) stats.std[i] = r.f32();
  const std::uint16_t len = r.u16();
  r.need(len);
  stats.source.assign(reinterpret_cast<const char*>(r.data + r.pos), len);
  return stats;
}

// ---------------------------------------------------------------------------
// Appearance model

void save_appearance_model(const AppearanceModel& model,
                           const std::string& path) {
  std::vector<std::uint8_t> bytes;
  bytes.insert(bytes.end(), {'F', 'A', 'M', '1'});
  put_u16(bytes, 1);
  put_u32(bytes, model.image_size);
  put_u32(bytes, model.k);
  for (long long i = 0; i < model.mean_face.size(); ++i)
    put_f32(bytes, model.mean_face[i]);
  for (long long i = 0; i < model.components.size(); ++i)
    put_f32(bytes, model.components[i]);
  for (float s : model.component_stds) put_f32(bytes, s);
  seal_and_write(bytes, path);
}

AppearanceModel load_appearance_model(const std::string& path) {
  const auto bytes = read_binary(path);
  ByteReader r = open_sealed(bytes, "FAM1", path);
  const std::uint16_t version = r.u16();
  if (version != 1) {
    throw VersionError(path + ": unsupported appearance model version " +
                       std::to_string(version));
  }
  AppearanceModel model;
  model.image_size = static_cast<int>(r.u32());
  model.k = static_cast<int>(r.u32());
  const int pixels = model.image_size * model.image_size;
  model.mean_face = Tensorf(Shape{pixels});
  for (long long i = 0; i < model.mean_face.size(); ++i)
    model.mean_face[i] = r.f32();
  model.components = Tensorf(Shape{model.k, pixels});
  for (long long i = 0; i < model.components.size(); ++i)
    model.components[i] = r.f32();
  model.component_stds.resize(model.k);
  for (int i = 0; i < model.k; ++i) model.component_stds[i] = r.f32();
  return model;
}

// ---------------------------------------------------------------------------
// PGM (binary P5, 8-bit)

Tensorf read_pgm(const std::string& path) {
  const auto bytes = read_binary(path);
  std::size_t pos = 0;
  const auto token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (std::isspace(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos]))
      tok += static_cast<char>(bytes[pos++]);
    return tok;
  };
  if (token() != "P5") throw FormatError(path + ": not a binary PGM (P5)");
  const std::string ws = token(), hs = token(), maxs = token();
  const int w = parse_int(ws, path);
  const int h = parse_int(hs, path);
  const int maxval = parse_int(maxs, path);
  if (maxval != 255) {
    throw FormatError(path + ": maxval " + std::to_string(maxval) +
                      " unsupported (must be 255)");
  }
  ++pos;  // single whitespace after maxval
  if (bytes.size() - pos < static_cast<std::size_t>(w) * h) {
    throw FormatError(path + ": truncated pixel data");
  }
  Tensorf img(Shape{h, w});
  for (long long i = 0; i < img.size(); ++i)
    img[i] = static_cast<float>(bytes[pos + i]);
  return img;
}

void write_pgm(const Tensorf& image, const std::string& path) {
  if (image.rank() != 2) throw DimensionError("write_pgm expects a rank-2 image");
  std::vector<std::uint8_t> bytes;
  const std::string header = "P5\n" + std::to_string(image.dim(1)) + " " +
                             std::to_string(image.dim(0)) + "\n255\n";
  bytes.insert(bytes.end(), header.begin(), header.end());
  for (long long i = 0; i < image.size(); ++i) {
    const float v = std::round(image[i]);
    bytes.push_back(static_cast<std::uint8_t>(std::min(255.0f, std::max(0.0f, v))));
  }
  write_binary(path, bytes);
}

// ---------------------------------------------------------------------------
// Text / CSV

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << content;
  if (!out) throw IoError("write failed for " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_train_log_csv(const TrainLog& log, const std::string& path,
                         const std::vector<std::string>& header_comments) {
  std::string out;
  for (const auto& c : header_comments) out += "# " + c + "\n";
  out += "# best_epoch: " + std::to_string(log.best_epoch) + "\n";
  out += "epoch,train_loss,valid_criterion,lr\n";
  for (const auto& row : log.rows) {
    out += std::to_string(row.epoch) + "," + format_double(row.train_loss) +
           "," + format_double(row.valid_criterion) + "," +
           format_double(row.lr) + "\n";
  }
  write_text_file(path, out);
}

}  // namespace fgr
