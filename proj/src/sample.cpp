#include "iid/sample.hpp"

#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "iid/losses.hpp"

namespace iid {

void DecompositionSample::validate() const {
  if (input.channels != 3) throw std::invalid_argument("sample: input must be 3-channel");
  auto check = [&](const ImageTensor& t, const char* what) {
    if (t.empty()) return;
    if (t.height != input.height || t.width != input.width) {
      throw std::invalid_argument(std::string("sample: ") + what + " spatial shape mismatch");
    }
  };
  check(albedo_gt, "albedo ground truth");
  check(shading_gt, "shading ground truth");
  check(mask, "mask");
  if (!mask.empty()) {
    if (mask.channels != 1) throw std::invalid_argument("sample: mask must be 1-channel");
    for (float v : mask.data) {
      if (v != 0.0f && v != 1.0f) throw std::invalid_argument("sample: mask entries must be 0 or 1");
    }
  }
  if (judgements) judgements->validate();
}

namespace {

ImageTensor crop_tensor(const ImageTensor& t, int x0, int y0, int size) {
  if (t.empty()) return {};
  ImageTensor out(t.channels, size, size);
  for (int c = 0; c < t.channels; ++c) {
    for (int y = 0; y < size; ++y) {
      const float* src = t.row(c, y0 + y) + x0;
      std::copy(src, src + size, out.row(c, y));
    }
  }
  return out;
}

JudgementSet crop_judgements(const JudgementSet& set, int x0, int y0, int size, int height,
                             int width) {
  JudgementSet out;
  std::set<int64_t> kept;
  for (const auto& p : set.points) {
    const int px = static_cast<int>(std::lround(p.x * (width - 1)));
    const int py = static_cast<int>(std::lround(p.y * (height - 1)));
    if (px < x0 || px >= x0 + size || py < y0 || py >= y0 + size) continue;
    JudgementSet::Point np = p;
    np.x = size > 1 ? static_cast<double>(px - x0) / (size - 1) : 0.0;
    np.y = size > 1 ? static_cast<double>(py - y0) / (size - 1) : 0.0;
    out.points.push_back(np);
    kept.insert(p.id);
  }
  for (const auto& c : set.comparisons) {
    if (kept.count(c.point1) && kept.count(c.point2)) out.comparisons.push_back(c);
  }
  return out;
}

}  // namespace

std::vector<DecompositionSample> random_crops(const DecompositionSample& sample, int size,
                                              int count, Rng& rng,
                                              std::vector<CropRecord>* offsets) {
  const int h = sample.input.height, w = sample.input.width;
  if (size < 1 || size > h || size > w) {
    throw std::invalid_argument("random_crops: size must be in [1, min(H, W)]");
  }
  std::vector<DecompositionSample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const int x0 = static_cast<int>(rng.below(static_cast<uint64_t>(w - size + 1)));
    const int y0 = static_cast<int>(rng.below(static_cast<uint64_t>(h - size + 1)));
    if (offsets) offsets->push_back({x0, y0});
    DecompositionSample c;
    c.input = crop_tensor(sample.input, x0, y0, size);
    c.albedo_gt = crop_tensor(sample.albedo_gt, x0, y0, size);
    c.shading_gt = crop_tensor(sample.shading_gt, x0, y0, size);
    c.mask = crop_tensor(sample.mask, x0, y0, size);
    if (sample.judgements) {
      c.judgements = crop_judgements(*sample.judgements, x0, y0, size, h, w);
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace iid
