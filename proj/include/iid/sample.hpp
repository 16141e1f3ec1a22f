#ifndef IID_SAMPLE_HPP_
#define IID_SAMPLE_HPP_

#include <optional>
#include <vector>

#include "iid/judgements.hpp"
#include "iid/rng.hpp"
#include "iid/tensor.hpp"

namespace iid {

// One training/evaluation record. Optional tensors are empty when absent;
// all present layers share the input's H x W.
struct DecompositionSample {
  ImageTensor input;       // 3 x H x W in [0, 1]
  ImageTensor albedo_gt;   // optional dense ground truth
  ImageTensor shading_gt;  // optional
  ImageTensor mask;        // optional 1 x H x W with entries in {0, 1}
  std::optional<JudgementSet> judgements;

  void validate() const;
};

struct CropRecord {
  int x0 = 0;
  int y0 = 0;
};

// `count` axis-aligned square crops applied consistently to every layer.
// Judgement points are remapped into crop coordinates; comparisons with a
// point outside the crop are dropped. Offsets out[i] are reported for the
// reproducibility sidecar.
std::vector<DecompositionSample> random_crops(const DecompositionSample& sample, int size,
                                              int count, Rng& rng,
                                              std::vector<CropRecord>* offsets = nullptr);

}  // namespace iid

#endif  // IID_SAMPLE_HPP_
