#ifndef IID_TRAIN_HPP_
#define IID_TRAIN_HPP_

#include <cstdint>
#include <string>

#include "iid/adam.hpp"
#include "iid/losses.hpp"
#include "iid/net.hpp"
#include "iid/pipeline.hpp"
#include "iid/sample.hpp"

namespace iid {

enum class LossMode { kIiw, kDense, kJoint };

std::string loss_mode_name(LossMode mode);
LossMode loss_mode_from_name(const std::string& name);

struct PipelineConfig {
  NetConfig net;
  GuidanceConfig guidance;
  FilterParams filter;
};

std::string pipeline_config_to_json(const PipelineConfig& cfg, LossMode mode);
void pipeline_config_from_json(const std::string& json_text, PipelineConfig* cfg, LossMode* mode);

struct TrainOptions {
  std::string dataset_dir;
  std::string out_dir;
  std::string resume_checkpoint;  // empty = fresh start
  LossMode loss_mode = LossMode::kDense;
  PipelineConfig pipeline;
  LossWeights weights_iiw;    // lambda2 defaults to 0.1
  LossWeights weights_dense;  // lambda2 defaults to 0.2
  AdamConfig<float> adam;
  int steps = 100;
  uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 = final checkpoint only
  bool holdout_split = false;  // reserve every fifth sample (by index)
  int crop = 0;                // 0 = full images

  TrainOptions() {
    weights_iiw.lambda2 = 0.1;
    weights_dense.lambda2 = 0.2;
  }
};

struct TrainResult {
  std::string checkpoint_path;
  std::string csv_path;
  double first_total = 0.0;
  double last_total = 0.0;
  int steps_run = 0;
  double seconds = 0.0;
};

// End-to-end training per the selected supervision mode; writes
// checkpoint(s), a per-step loss CSV and the resolved pipeline config under
// out_dir. Deterministic given (dataset, options, seed).
TrainResult train_run(const TrainOptions& options);

// Deterministic held-out/train index split of a dataset of `count` samples.
struct IndexSplit {
  std::vector<int> train;
  std::vector<int> test;
};
IndexSplit split_dataset_indices(int count, bool holdout);

struct PipelineOutputs {
  ImageTensor scalar_r;  // scalar mode only
  ImageTensor albedo;
  ImageTensor shading;
  ImageTensor guidance;
  ImageTensor filtered_albedo;
};

// Forward pass of the full pipeline with fixed parameters.
PipelineOutputs run_inference(ParamStore& store, const PipelineConfig& cfg,
                              const ImageTensor& image);

// (Re)builds a parameter store from a checkpoint, restoring optimizer
// moments into `optimizer` when given.
void restore_from_checkpoint(const std::string& path, ParamStore& store,
                             AdamOptimizer<float>* optimizer, PipelineConfig* cfg,
                             LossMode* mode);

}  // namespace iid

#endif  // IID_TRAIN_HPP_
