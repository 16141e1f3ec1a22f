#include "iid/losses.hpp"

#include <cmath>
#include <map>

namespace iid {

std::vector<PixelComparison> map_judgements_to_pixels(const JudgementSet& set, int height,
                                                      int width) {
  std::map<int64_t, int> pixel_of;
  for (const auto& p : set.points) {
    pixel_of[p.id] = judgement_pixel_index(p.x, p.y, height, width);
  }
  std::vector<PixelComparison> out;
  out.reserve(set.comparisons.size());
  for (const auto& c : set.comparisons) {
    PixelComparison pc;
    pc.idx1 = pixel_of.at(c.point1);
    pc.idx2 = pixel_of.at(c.point2);
    pc.darker = c.darker;
    pc.weight = c.weight;
    out.push_back(pc);
  }
  return out;
}

namespace {

// Channel mean sampled at a pixel, optionally averaged over a disk.
double sample_mean(const ImageTensor& albedo, int idx, int radius) {
  const int w = albedo.width, h = albedo.height;
  const int px = idx % w, py = idx / w;
  double acc = 0.0;
  int count = 0;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy > radius * radius) continue;
      const int x = px + dx, y = py + dy;
      if (x < 0 || x >= w || y < 0 || y >= h) continue;
      double ch = 0.0;
      for (int c = 0; c < albedo.channels; ++c) ch += albedo.at(c, y, x);
      acc += ch / albedo.channels;
      ++count;
    }
  }
  return count > 0 ? acc / count : 0.0;
}

}  // namespace

WhdrResult whdr(const ImageTensor& albedo, const JudgementSet& judgements, double delta,
                int radius) {
  const auto comparisons = map_judgements_to_pixels(judgements, albedo.height, albedo.width);
  double weight_sum = 0.0;
  double disagree = 0.0;
  for (const auto& c : comparisons) {
    const double r1 = std::max(sample_mean(albedo, c.idx1, radius), kRatioFloor);
    const double r2 = std::max(sample_mean(albedo, c.idx2, radius), kRatioFloor);
    const Darker predicted = classify_pair(r1, r2, delta);
    weight_sum += c.weight;
    if (predicted != c.darker) disagree += c.weight;
  }
  WhdrResult res;
  if (weight_sum <= 0.0) {
    res.value = 0.0;
    res.zero_weight_warning = !comparisons.empty();
    return res;
  }
  res.value = disagree / weight_sum;
  return res;
}

}  // namespace iid
