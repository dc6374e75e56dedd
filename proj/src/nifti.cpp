#include "pvr/nifti.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include <Eigen/Geometry>
#include <zlib.h>

#include "pvr/error.hpp"

namespace pvr {

namespace {

constexpr int kHeaderSize = 348;
constexpr int kDataOffset = 352;

enum : std::int16_t {
  kUint8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
  kInt8 = 256,
  kUint16 = 512,
  kUint32 = 768,
};

class GzFile {
 public:
  GzFile(const std::filesystem::path& path, const char* mode) : file_(gzopen(path.c_str(), mode)) {
    if (file_ == nullptr) throw IoError("cannot open " + path.string());
  }
  ~GzFile() {
    if (file_ != nullptr) gzclose(file_);
  }
  GzFile(const GzFile&) = delete;
  GzFile& operator=(const GzFile&) = delete;

  void read(void* dst, std::size_t n, const std::filesystem::path& path) {
    auto* p = static_cast<unsigned char*>(dst);
    while (n > 0) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
      const int got = gzread(file_, p, chunk);
      if (got <= 0) throw IoError("truncated NIfTI file: " + path.string());
      p += got;
      n -= static_cast<std::size_t>(got);
    }
  }
  void write(const void* src, std::size_t n, const std::filesystem::path& path) {
    const auto* p = static_cast<const unsigned char*>(src);
    while (n > 0) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
      const int put = gzwrite(file_, p, chunk);
      if (put <= 0) throw IoError("write failed: " + path.string());
      p += put;
      n -= static_cast<std::size_t>(put);
    }
  }
  void close(const std::filesystem::path& path) {
    const int rc = gzclose(file_);
    file_ = nullptr;
    if (rc != Z_OK) throw IoError("close failed: " + path.string());
  }

 private:
  gzFile file_;
};

template <typename T>
T get(const unsigned char* buf, int offset, bool swap) {
  unsigned char tmp[sizeof(T)];
  std::memcpy(tmp, buf + offset, sizeof(T));
  if (swap) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(tmp[i], tmp[sizeof(T) - 1 - i]);
  }
  T v;
  std::memcpy(&v, tmp, sizeof(T));
  return v;
}

template <typename T>
void put(unsigned char* buf, int offset, T v) {
  std::memcpy(buf + offset, &v, sizeof(T));
}

int bytes_per_voxel(std::int16_t datatype) {
  switch (datatype) {
    case kUint8:
    case kInt8: return 1;
    case kInt16:
    case kUint16: return 2;
    case kInt32:
    case kUint32:
    case kFloat32: return 4;
    case kFloat64: return 8;
    default: return 0;
  }
}

template <typename T>
double decode(const unsigned char* p, bool swap) {
  return static_cast<double>(get<T>(p, 0, swap));
}

bool orthonormal(const Eigen::Matrix3d& a) {
  return ((a.transpose() * a) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-4;
}

bool has_gz_suffix(const std::filesystem::path& path) {
  const std::string s = path.string();
  return s.size() >= 3 && s.compare(s.size() - 3, 3, ".gz") == 0;
}

}  // namespace

Volume read_nifti(const std::filesystem::path& path) {
  GzFile f(path, "rb");
  unsigned char hdr[kHeaderSize];
  f.read(hdr, kHeaderSize, path);

  bool swap = false;
  if (get<std::int32_t>(hdr, 0, false) != kHeaderSize) {
    if (get<std::int32_t>(hdr, 0, true) != kHeaderSize) {
      throw IoError("not a NIfTI-1 file: " + path.string());
    }
    swap = true;
  }
  if (std::memcmp(hdr + 344, "n+1", 3) != 0) {
    throw IoError("only single-file NIfTI-1 (n+1) is supported: " + path.string());
  }

  std::array<std::int16_t, 8> dim{};
  for (int i = 0; i < 8; ++i) dim[static_cast<std::size_t>(i)] = get<std::int16_t>(hdr, 40 + 2 * i, swap);
  if (dim[0] < 1 || dim[0] > 7) throw IoError("bad NIfTI dim[0]: " + path.string());
  Geometry g;
  for (int a = 0; a < 3; ++a) {
    g.dims[static_cast<std::size_t>(a)] = a < dim[0] ? std::max<int>(1, dim[static_cast<std::size_t>(a + 1)]) : 1;
  }

  const auto datatype = get<std::int16_t>(hdr, 70, swap);
  const int bpv = bytes_per_voxel(datatype);
  if (bpv == 0) throw IoError("unsupported NIfTI datatype " + std::to_string(datatype));

  std::array<float, 8> pixdim{};
  for (int i = 0; i < 8; ++i) pixdim[static_cast<std::size_t>(i)] = get<float>(hdr, 76 + 4 * i, swap);
  const float vox_offset = get<float>(hdr, 108, swap);
  float slope = get<float>(hdr, 112, swap);
  const float inter = get<float>(hdr, 116, swap);
  if (slope == 0.0f || !std::isfinite(slope)) slope = 1.0f;
  const auto qform_code = get<std::int16_t>(hdr, 252, swap);
  const auto sform_code = get<std::int16_t>(hdr, 254, swap);

  for (int a = 0; a < 3; ++a) {
    const double p = std::abs(pixdim[static_cast<std::size_t>(a + 1)]);
    g.spacing[a] = p > 0.0 ? p : 1.0;
  }

  bool placed = false;
  if (sform_code > 0) {
    Eigen::Matrix3d m;
    Eigen::Vector3d o;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m(r, c) = get<float>(hdr, 280 + 16 * r + 4 * c, swap);
      o[r] = get<float>(hdr, 280 + 16 * r + 12, swap);
    }
    Eigen::Vector3d sp = m.colwise().norm().transpose();
    if ((sp.array() > 0).all()) {
      const Eigen::Matrix3d axes = m * sp.cwiseInverse().asDiagonal();
      if (orthonormal(axes)) {
        g.spacing = sp;
        g.axes = axes;
        g.origin = o;
        placed = true;
      }
    }
  }
  if (!placed && qform_code > 0) {
    const double b = get<float>(hdr, 256, swap);
    const double c = get<float>(hdr, 260, swap);
    const double d = get<float>(hdr, 264, swap);
    const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
    Eigen::Matrix3d r = Eigen::Quaterniond(a, b, c, d).normalized().toRotationMatrix();
    if (pixdim[0] < 0) r.col(2) *= -1.0;
    g.axes = r;
    g.origin = Eigen::Vector3d(get<float>(hdr, 268, swap), get<float>(hdr, 272, swap),
                               get<float>(hdr, 276, swap));
  }
  g.validate();

  const std::size_t skip = static_cast<std::size_t>(std::max<float>(vox_offset, kDataOffset)) - kHeaderSize;
  std::vector<unsigned char> scratch(skip);
  if (skip > 0) f.read(scratch.data(), skip, path);

  const std::size_t n = g.voxel_count();
  std::vector<unsigned char> raw(n * static_cast<std::size_t>(bpv));
  f.read(raw.data(), raw.size(), path);

  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* p = raw.data() + i * static_cast<std::size_t>(bpv);
    double v = 0.0;
    switch (datatype) {
      case kUint8: v = decode<std::uint8_t>(p, false); break;
      case kInt8: v = decode<std::int8_t>(p, false); break;
      case kInt16: v = decode<std::int16_t>(p, swap); break;
      case kUint16: v = decode<std::uint16_t>(p, swap); break;
      case kInt32: v = decode<std::int32_t>(p, swap); break;
      case kUint32: v = decode<std::uint32_t>(p, swap); break;
      case kFloat32: v = decode<float>(p, swap); break;
      case kFloat64: v = decode<double>(p, swap); break;
      default: break;
    }
    data[i] = v * slope + inter;
  }
  return Volume(g, std::move(data));
}

void write_nifti(const std::filesystem::path& path, const Volume& v) {
  const Geometry& g = v.geometry();
  unsigned char hdr[kDataOffset] = {};
  put<std::int32_t>(hdr, 0, kHeaderSize);
  hdr[38] = 'r';
  put<std::int16_t>(hdr, 40, 3);
  for (int a = 0; a < 3; ++a) put<std::int16_t>(hdr, 42 + 2 * a, static_cast<std::int16_t>(g.dims[static_cast<std::size_t>(a)]));
  for (int a = 3; a < 7; ++a) put<std::int16_t>(hdr, 42 + 2 * a, 1);
  put<std::int16_t>(hdr, 70, kFloat32);
  put<std::int16_t>(hdr, 72, 32);

  Eigen::Matrix3d r = g.axes;
  float qfac = 1.0f;
  if (r.determinant() < 0) {
    qfac = -1.0f;
    r.col(2) *= -1.0;
  }
  put<float>(hdr, 76, qfac);
  for (int a = 0; a < 3; ++a) put<float>(hdr, 80 + 4 * a, static_cast<float>(g.spacing[a]));
  put<float>(hdr, 108, static_cast<float>(kDataOffset));
  put<float>(hdr, 112, 1.0f);
  hdr[123] = 2;  // mm
  put<float>(hdr, 124, static_cast<float>(v.max_value()));
  put<float>(hdr, 128, static_cast<float>(v.min_value()));

  put<std::int16_t>(hdr, 252, 1);
  put<std::int16_t>(hdr, 254, 1);
  Eigen::Quaterniond q(r);
  if (q.w() < 0) q.coeffs() *= -1.0;
  put<float>(hdr, 256, static_cast<float>(q.x()));
  put<float>(hdr, 260, static_cast<float>(q.y()));
  put<float>(hdr, 264, static_cast<float>(q.z()));
  for (int a = 0; a < 3; ++a) put<float>(hdr, 268 + 4 * a, static_cast<float>(g.origin[a]));
  const Eigen::Matrix3d m = g.index_to_world_linear();
  for (int row = 0; row < 3; ++row) {
    for (int c = 0; c < 3; ++c) put<float>(hdr, 280 + 16 * row + 4 * c, static_cast<float>(m(row, c)));
    put<float>(hdr, 280 + 16 * row + 12, static_cast<float>(g.origin[row]));
  }
  std::memcpy(hdr + 344, "n+1\0", 4);

  std::vector<float> data(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) data[i] = static_cast<float>(v[i]);

  GzFile f(path, has_gz_suffix(path) ? "wb6" : "wbT");
  f.write(hdr, kDataOffset, path);
  f.write(data.data(), data.size() * sizeof(float), path);
  f.close(path);
}

}  // namespace pvr
