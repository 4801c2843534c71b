#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "extax/detector.hpp"
#include "extax/elicitation.hpp"
#include "extax/smoothing.hpp"
#include "extax/taxrep.hpp"

namespace extax {

// Run configuration. Keys (all optional):
//   alpha, n_ppt, n_att, d_h, d_ff, dropout, threshold, budget, cache_dir,
//   stage1 {lr, weight_decay, epochs, patience, batch_size},
//   stage2 {lr, weight_decay, epochs, patience, batch_size},
//   seeds [..], endpoints [{name, base_url, model_id, api_key_env,
//                           timeout_s, max_retries, temperature}]
struct RunConfig {
  double alpha = kDefaultAlpha;
  std::size_t n_ppt = 3;
  std::size_t n_att = 1;
  std::size_t d_ff = 64;
  double threshold = 0.5;
  std::size_t budget = 4;
  std::string cache_dir;
  Stage1Config stage1;
  Stage2Config stage2;
  std::vector<std::uint64_t> seeds{43, 434, 445};
  std::vector<AnnotatorEndpoint> endpoints;

  // Unknown keys are rejected.
  static RunConfig from_json(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);
  std::string to_json() const;

  DetectorShape detector_shape(std::size_t dim) const;
  void validate() const;
};

}  // namespace extax
