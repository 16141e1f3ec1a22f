#ifndef IID_SYNTH_HPP_
#define IID_SYNTH_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "iid/sample.hpp"

namespace iid {

// Mondrian-world generator: piecewise-constant Voronoi albedo under smooth
// grayscale shading, with input = albedo * shading exactly and pairwise
// judgements labeled from the true albedo.
struct SynthConfig {
  int image_size = 64;
  int region_count = 8;        // Voronoi cells
  int shading_bumps = 3;
  double shading_amplitude = 0.5;  // in (0, 1)
  int judgement_pairs = 40;
  uint64_t seed = 0;

  void validate() const;
};

// Sample index selects a derived RNG stream, so generation is
// order-independent and reproducible per (seed, index).
DecompositionSample generate_sample(const SynthConfig& config, uint64_t sample_index);

std::vector<DecompositionSample> generate_dataset(const SynthConfig& config, int count);

// Writes per-sample input/albedo/shading PNGs (16-bit) and judgements.json
// plus a manifest.json listing files, seeds and the generating config.
// Returns the manifest path.
std::string export_dataset(const std::vector<DecompositionSample>& samples,
                           const SynthConfig& config, const std::string& dir);

// Reads a dataset directory written by export_dataset.
std::vector<DecompositionSample> load_dataset(const std::string& dir);

}  // namespace iid

#endif  // IID_SYNTH_HPP_
