#ifndef IID_PIPELINE_HPP_
#define IID_PIPELINE_HPP_

#include "iid/filter.hpp"
#include "iid/net.hpp"
#include "iid/tape.hpp"

namespace iid {

// Direct net -> (achromatic expansion) -> guidance net -> domain filter,
// assembled on one tape.
template <typename T>
struct PipelineNodes {
  int input = -1;
  int input_edges = -1;
  int scalar_r = -1;         // scalar mode only
  int albedo = -1;           // R'
  int shading = -1;          // S
  int guidance_pred = -1;    // E'
  int filtered_albedo = -1;  // R
};

template <typename T>
PipelineNodes<T> build_pipeline(ParamBinder<T>& pb, const NetConfig& net_cfg,
                                const GuidanceConfig& guidance_cfg,
                                const FilterParamsT<T>& filter_params, const TensorT<T>& image) {
  TapeT<T>& tape = pb.tape();
  PipelineNodes<T> out;
  out.input = tape.leaf(image);
  out.input_edges = tape.leaf(edge_map(image));
  const auto direct = direct_net_forward(pb, net_cfg, out.input);
  if (net_cfg.output_mode == OutputMode::kScalarReflectance) {
    out.scalar_r = direct.scalar_r;
    const auto [albedo, shading] = achromatic_reconstruct(tape, direct.scalar_r, out.input);
    out.albedo = albedo;
    out.shading = shading;
  } else {
    out.albedo = direct.albedo;
    out.shading = direct.shading;
  }
  out.guidance_pred = guidance_net_forward(pb, guidance_cfg, out.input, out.input_edges);
  out.filtered_albedo = domain_filter_node(tape, out.albedo, out.guidance_pred, filter_params);
  return out;
}

}  // namespace iid

#endif  // IID_PIPELINE_HPP_
