#include "xdistill/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <set>

namespace xd::io {

namespace {

constexpr uint32_t kMaxDim = 1u << 24;  // per-axis sanity bound

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (is.gcount() != 4) throw IoError(IoError::Kind::kTruncated, path + ": truncated header");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

void write_tensor_stream(std::ostream& os, const Tensor& t) {
  os.write("XDT1", 4);
  put_u32(os, uint32_t(t.rank()));
  for (int d : t.shape()) put_u32(os, uint32_t(d));
  const real* p = t.data();
  const size_t n = t.numel();
  std::vector<float> buf(n);
  for (size_t i = 0; i < n; ++i) buf[i] = float(p[i]);
  os.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(n * sizeof(float)));
}

Tensor read_tensor_stream(std::istream& is, const std::string& path) {
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4) throw IoError(IoError::Kind::kTruncated, path + ": truncated magic");
  if (std::string(magic, 4) != "XDT1")
    throw IoError(IoError::Kind::kBadMagic, path + ": bad magic");
  const uint32_t rank = get_u32(is, path);
  if (rank > 8) throw IoError(IoError::Kind::kDimOverflow, path + ": rank " +
                                                               std::to_string(rank) + " too large");
  Shape shape;
  size_t n = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    const uint32_t d = get_u32(is, path);
    if (d > kMaxDim || (d != 0 && n > size_t(kMaxDim) * kMaxDim / d))
      throw IoError(IoError::Kind::kDimOverflow, path + ": dimension overflow");
    shape.push_back(int(d));
    n *= d;
  }
  std::vector<float> buf(n);
  is.read(reinterpret_cast<char*>(buf.data()), std::streamsize(n * sizeof(float)));
  if (size_t(is.gcount()) != n * sizeof(float))
    throw IoError(IoError::Kind::kTruncated, path + ": truncated payload");
  std::vector<real> vals(n);
  for (size_t i = 0; i < n; ++i) vals[i] = real(buf[i]);
  return Tensor::from(std::move(shape), std::move(vals));
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(IoError::Kind::kOpen, "cannot open '" + path + "' for writing");
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(IoError::Kind::kOpen, "cannot open '" + path + "'");
  return is;
}

}  // namespace

void write_tensor(const std::string& path, const Tensor& t) {
  auto os = open_out(path);
  write_tensor_stream(os, t);
  if (!os) throw IoError(IoError::Kind::kOpen, "write failed for '" + path + "'");
}

Tensor read_tensor(const std::string& path) {
  auto is = open_in(path);
  return read_tensor_stream(is, path);
}

void write_labels(const std::string& path, const SegmentationMap& map) {
  check(map.labels.size() == size_t(map.H) * size_t(map.W), "write_labels: size mismatch");
  auto os = open_out(path);
  os.write("XDL1", 4);
  put_u32(os, 2);
  put_u32(os, uint32_t(map.H));
  put_u32(os, uint32_t(map.W));
  os.write(reinterpret_cast<const char*>(map.labels.data()), std::streamsize(map.labels.size()));
  if (!os) throw IoError(IoError::Kind::kOpen, "write failed for '" + path + "'");
}

SegmentationMap read_labels(const std::string& path, int num_classes) {
  auto is = open_in(path);
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4) throw IoError(IoError::Kind::kTruncated, path + ": truncated magic");
  if (std::string(magic, 4) != "XDL1")
    throw IoError(IoError::Kind::kBadMagic, path + ": bad magic");
  const uint32_t rank = get_u32(is, path);
  if (rank != 2)
    throw IoError(IoError::Kind::kDimOverflow, path + ": label grid must be rank 2");
  const uint32_t H = get_u32(is, path);
  const uint32_t W = get_u32(is, path);
  if (H > kMaxDim || W > kMaxDim)
    throw IoError(IoError::Kind::kDimOverflow, path + ": dimension overflow");
  SegmentationMap map;
  map.H = int(H);
  map.W = int(W);
  map.num_classes = num_classes;
  map.labels.resize(size_t(H) * W);
  is.read(reinterpret_cast<char*>(map.labels.data()), std::streamsize(map.labels.size()));
  if (size_t(is.gcount()) != map.labels.size())
    throw IoError(IoError::Kind::kTruncated, path + ": truncated payload");
  return map;
}

void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& params) {
  std::set<std::string> seen;
  for (const auto& [name, t] : params) {
    (void)t;
    if (!seen.insert(name).second)
      throw IoError(IoError::Kind::kNameCollision, "duplicate parameter name '" + name + "'");
  }
  auto os = open_out(path);
  for (const auto& [name, t] : params) {
    put_u32(os, uint32_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    write_tensor_stream(os, t);
  }
  if (!os) throw IoError(IoError::Kind::kOpen, "write failed for '" + path + "'");
}

std::vector<NamedTensor> read_checkpoint(const std::string& path) {
  auto is = open_in(path);
  std::vector<NamedTensor> out;
  while (true) {
    is.peek();
    if (is.eof()) break;
    const uint32_t len = get_u32(is, path);
    if (len > 4096)
      throw IoError(IoError::Kind::kBadValue, path + ": implausible name length");
    std::string name(len, '\0');
    is.read(name.data(), std::streamsize(len));
    if (size_t(is.gcount()) != len)
      throw IoError(IoError::Kind::kTruncated, path + ": truncated name");
    out.emplace_back(std::move(name), read_tensor_stream(is, path));
  }
  return out;
}

void load_checkpoint_into(const std::string& path, const std::vector<NamedTensor>& targets) {
  const auto loaded = read_checkpoint(path);
  for (const auto& [name, target] : targets) {
    const NamedTensor* found = nullptr;
    for (const auto& rec : loaded)
      if (rec.first == name) {
        found = &rec;
        break;
      }
    if (!found)
      throw IoError(IoError::Kind::kBadValue, path + ": missing parameter '" + name + "'");
    if (found->second.shape() != target.shape())
      throw IoError(IoError::Kind::kShapeMismatch,
                    path + ": shape mismatch for '" + name + "': checkpoint " +
                        shape_str(found->second.shape()) + " vs model " +
                        shape_str(target.shape()));
    Tensor dst = target;  // handle copy, same storage
    std::copy(found->second.data(), found->second.data() + found->second.numel(), dst.data());
  }
}

void export_image(const std::string& path, const Tensor& t) {
  const Shape s = t.shape();
  check(s.size() == 3, "export_image: expected C x H x W, got " + shape_str(s));
  const int C = s[0], H = s[1], W = s[2];
  if (C != 1 && C != 3) fail("export_image: unsupported channel count " + std::to_string(C));
  auto os = open_out(path);
  os << (C == 3 ? "P3" : "P2") << "\n" << W << " " << H << "\n255\n";
  const real* p = t.data();
  const size_t HW = size_t(H) * W;
  for (size_t i = 0; i < HW; ++i) {
    for (int c = 0; c < C; ++c) {
      const real v = std::min(real(1), std::max(real(0), p[size_t(c) * HW + i]));
      os << int(std::lround(double(v) * 255.0));
      os << (c + 1 < C ? ' ' : '\n');
    }
  }
  if (!os) throw IoError(IoError::Kind::kOpen, "write failed for '" + path + "'");
}

void export_depth_pixmap(const std::string& path, const Tensor& depth) {
  const Shape s = depth.shape();
  check(s.size() == 3 && s[0] == 1, "export_depth_pixmap: expected 1 x H x W");
  Tensor inv = Tensor::zeros(s, false);
  const real* p = depth.data();
  real* q = inv.data();
  const size_t n = depth.numel();
  real lo = std::numeric_limits<real>::infinity(), hi = 0;
  for (size_t i = 0; i < n; ++i) {
    check(p[i] > 0, "export_depth_pixmap: depth must be positive");
    q[i] = real(1) / p[i];
    lo = std::min(lo, q[i]);
    hi = std::max(hi, q[i]);
  }
  const real range = hi - lo;
  for (size_t i = 0; i < n; ++i) q[i] = range > 0 ? (q[i] - lo) / range : real(0);
  export_image(path, inv);
}

}  // namespace xd::io
