#include "percdia/features.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace percdia {
namespace {

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("truncated DPFT header");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

FeatureSequence stack_features(const Tensor& base, int64_t subsample, const std::string& recording_id) {
  if (base.cols() != kStackBaseDim) {
    throw std::invalid_argument("stack_features expects " + std::to_string(kStackBaseDim) +
                                " columns, got " + std::to_string(base.cols()));
  }
  if (subsample < 1) throw std::invalid_argument("subsample must be >= 1");
  const int64_t t0 = base.rows();
  const int64_t out_t = (t0 + subsample - 1) / subsample;
  const int64_t window = 2 * kStackContext + 1;
  const int64_t out_f = window * kStackBaseDim;

  Tensor out(Shape{out_t, out_f});
  const double* src = base.values().data();
  double* dst = out.raw().data();
  for (int64_t i = 0; i < out_t; ++i) {
    const int64_t center = i * subsample;
    for (int64_t w = -kStackContext; w <= kStackContext; ++w) {
      const int64_t row = center + w;
      double* slot = dst + i * out_f + (w + kStackContext) * kStackBaseDim;
      if (row >= 0 && row < t0) {
        std::memcpy(slot, src + row * kStackBaseDim, sizeof(double) * kStackBaseDim);
      }
    }
  }

  FeatureSequence fs;
  fs.features = std::move(out);
  fs.frame_period_s = kBaseFramePeriodS * static_cast<double>(subsample);
  fs.recording_id = recording_id;
  return fs;
}

void write_dpft(const std::string& path, const FeatureSequence& fs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write("DPFT", 4);
  const char version = 1;
  out.write(&version, 1);
  write_u32(out, static_cast<uint32_t>(fs.num_frames()));
  write_u32(out, static_cast<uint32_t>(fs.dim()));
  std::vector<float> buf(fs.features.values().begin(), fs.features.values().end());
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw std::runtime_error("write failed for " + path);
}

FeatureSequence read_dpft(const std::string& path, double frame_period_s) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open feature file " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::strncmp(magic, "DPFT", 4) != 0) {
    throw std::runtime_error(path + " is not a DPFT feature file");
  }
  char version;
  in.read(&version, 1);
  if (version != 1) throw std::runtime_error("unsupported DPFT version in " + path);
  const uint32_t t = read_u32(in);
  const uint32_t f = read_u32(in);
  std::vector<float> buf(static_cast<size_t>(t) * f);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw std::runtime_error("truncated DPFT payload in " + path);

  FeatureSequence fs;
  fs.features = Tensor(Shape{static_cast<int64_t>(t), static_cast<int64_t>(f)},
                       std::vector<double>(buf.begin(), buf.end()));
  fs.frame_period_s = frame_period_s;
  fs.recording_id = std::filesystem::path(path).stem().string();
  return fs;
}

}  // namespace percdia
