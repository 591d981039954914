#include "pbnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace pbnn {

void read_cifar_batch(const std::filesystem::path& file, const NormalizationSpec& norm,
                      std::vector<double>& images, std::vector<std::uint8_t>& labels) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IngestionError("cannot open CIFAR-10 file " + file.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty() || bytes.size() % kCifarRecordBytes != 0) {
    throw IngestionError("truncated CIFAR-10 file " + file.string() + " (" +
                         std::to_string(bytes.size()) + " bytes is not a whole number of " +
                         std::to_string(kCifarRecordBytes) + "-byte records)");
  }
  const std::size_t records = bytes.size() / kCifarRecordBytes;
  images.reserve(images.size() + records * kCifarImageBytes);
  for (std::size_t r = 0; r < records; ++r) {
    const auto* rec = reinterpret_cast<const std::uint8_t*>(bytes.data()) + r * kCifarRecordBytes;
    if (rec[0] > 9) {
      throw IngestionError("corrupt CIFAR-10 file " + file.string() + ": label " +
                           std::to_string(rec[0]) + " in record " + std::to_string(r));
    }
    labels.push_back(rec[0]);
    for (std::size_t i = 0; i < kCifarImageBytes; ++i) {
      images.push_back(norm.normalize(i / 1024, rec[1 + i]));
    }
  }
}

namespace {

Dataset load_split(const std::vector<std::filesystem::path>& files, Split split,
                   const NormalizationSpec& norm) {
  std::vector<double> images;
  std::vector<std::uint8_t> labels;
  for (const auto& f : files) {
    if (!std::filesystem::exists(f)) throw IngestionError("missing CIFAR-10 file " + f.string());
    read_cifar_batch(f, norm, images, labels);
  }
  const std::size_t n = labels.size();
  return Dataset{Tensor({n, 3, 32, 32}, std::move(images)), std::move(labels), split};
}

}  // namespace

CifarSplits load_cifar10(const std::filesystem::path& dir, const CifarLoadOptions& options) {
  std::vector<std::filesystem::path> train_files;
  for (int i = 1; i <= 5; ++i) train_files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
  CifarSplits splits;
  splits.train = subset(load_split(train_files, Split::train, options.normalization),
                        options.train_subset, options.subset_seed);
  splits.test = subset(load_split({dir / "test_batch.bin"}, Split::test, options.normalization),
                       options.test_subset, options.subset_seed + 1);
  return splits;
}

Dataset subset(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  if (n == 0 || n >= ds.size()) return ds;
  CounterRng rng(RandomKey{seed, 0, 0, 0x5ab5e7});
  auto order = permutation(ds.size(), rng);
  order.resize(n);
  std::sort(order.begin(), order.end());
  const std::size_t stride = ds.images.size() / ds.size();
  std::vector<double> images;
  images.reserve(n * stride);
  std::vector<std::uint8_t> labels;
  labels.reserve(n);
  const auto src = ds.images.values();
  for (auto idx : order) {
    images.insert(images.end(), src.begin() + idx * stride, src.begin() + (idx + 1) * stride);
    labels.push_back(ds.labels[idx]);
  }
  Shape shape = ds.images.shape();
  shape[0] = n;
  return Dataset{Tensor(std::move(shape), std::move(images)), std::move(labels), ds.split};
}

std::vector<std::vector<std::size_t>> batches(std::size_t dataset_size, std::size_t batch_size,
                                              std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size == 0) throw std::invalid_argument("batches: batch_size must be >= 1");
  CounterRng rng(RandomKey{seed, epoch, 0, 0xba7c4});
  const auto order = permutation(dataset_size, rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start + batch_size <= dataset_size; start += batch_size) {
    out.emplace_back(order.begin() + start, order.begin() + start + batch_size);
  }
  return out;
}

Batch gather(const Dataset& ds, const std::vector<std::size_t>& indices,
             const Augmentation& augment, const RandomKey& key) {
  const std::size_t c = ds.images.dim(1), h = ds.images.dim(2), w = ds.images.dim(3);
  const std::size_t stride = c * h * w;
  const auto src = ds.images.values();
  std::vector<double> images(indices.size() * stride);
  std::vector<std::uint8_t> labels;
  labels.reserve(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::size_t idx = indices[b];
    if (idx >= ds.size()) throw std::out_of_range("gather: index out of range");
    labels.push_back(ds.labels[idx]);
    const double* img = src.data() + idx * stride;
    double* dst = images.data() + b * stride;
    const bool flip = augment.flip && key.uniform(3 * b) < 0.5;
    long dy = 0, dx = 0;
    if (augment.crop) {
      dy = static_cast<long>(key.bits(3 * b + 1) % 9) - 4;
      dx = static_cast<long>(key.bits(3 * b + 2) % 9) - 4;
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const long sy = static_cast<long>(y) + dy;
          long sx = static_cast<long>(x) + dx;
          if (flip) sx = static_cast<long>(w) - 1 - sx;
          const bool inside = sy >= 0 && sy < static_cast<long>(h) && sx >= 0 &&
                              sx < static_cast<long>(w);
          dst[(ch * h + y) * w + x] =
              inside ? img[(ch * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)]
                     : 0.0;
        }
      }
    }
  }
  Shape shape = ds.images.shape();
  shape[0] = indices.size();
  return Batch{Tensor(std::move(shape), std::move(images)), std::move(labels)};
}

Dataset synthetic_dataset(const SyntheticOptions& o) {
  if (o.classes == 0 || o.classes > 256 || o.samples < o.classes) {
    throw std::invalid_argument("synthetic_dataset: need 1 <= classes <= samples");
  }
  const std::size_t hw = o.image_size * o.image_size;
  const std::size_t stride = 3 * hw;
  // Templates depend only on (seed, classes); the split only changes noise.
  CounterRng template_rng(RandomKey{o.seed, 0, 0, 0x7e3a});
  std::vector<double> templates(o.classes * stride);
  for (std::size_t k = 0; k < o.classes; ++k) {
    // Coarse 4×4 blocks with per-channel means keep the signal spatially smooth.
    std::vector<double> blocks(3 * 16);
    for (auto& b : blocks) b = template_rng.normal();
    for (std::size_t ch = 0; ch < 3; ++ch) {
      for (std::size_t y = 0; y < o.image_size; ++y) {
        for (std::size_t x = 0; x < o.image_size; ++x) {
          const std::size_t by = y * 4 / o.image_size, bx = x * 4 / o.image_size;
          templates[k * stride + ch * hw + y * o.image_size + x] = blocks[ch * 16 + by * 4 + bx];
        }
      }
    }
  }
  CounterRng noise(RandomKey{o.seed, static_cast<std::uint64_t>(o.split) + 1, 0, 0x9015e});
  std::vector<double> images(o.samples * stride);
  std::vector<std::uint8_t> labels(o.samples);
  for (std::size_t n = 0; n < o.samples; ++n) {
    const std::size_t k = n % o.classes;
    labels[n] = static_cast<std::uint8_t>(k);
    for (std::size_t i = 0; i < stride; ++i) {
      images[n * stride + i] = o.snr * templates[k * stride + i] * 0.5 + noise.normal();
    }
  }
  return Dataset{Tensor({o.samples, 3, o.image_size, o.image_size}, std::move(images)),
                 std::move(labels), o.split};
}

}  // namespace pbnn
