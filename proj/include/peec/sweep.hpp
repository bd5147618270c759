#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "peec/corpus.hpp"
#include "peec/eval.hpp"
#include "peec/privacy_model.hpp"

namespace peec {

struct SweepRow {
  size_t latent_dim = 0;
  double emotion_uar = 0.0;
  double gender_acc = 0.0;
  double member_acc = 0.0;
  double language_acc = 0.0;
};

/// Latent-dimension sweep: one adversarial model per requested L (seed
/// derived per dimension), each pushed through the full utility/attack
/// pipeline. The member/non-member speaker split is shared across dimensions
/// so rows are comparable.
inline std::vector<SweepRow> latent_sweep(const Corpus& corpus,
                                          std::span<const size_t> dims,
                                          const TrainConfig& base_cfg,
                                          const PipelineOptions& pipeline,
                                          double member_fraction = 0.5) {
  if (dims.empty()) throw ValueError("latent_sweep: empty dimension list");
  const SpeakerSplit split = split_speakers(
      corpus, member_fraction, derive_seed(pipeline.seed, 0x535054));

  std::vector<SweepRow> rows;
  rows.reserve(dims.size());
  for (size_t latent_dim : dims) {
    TrainConfig cfg = base_cfg;
    cfg.latent_dim = latent_dim;
    cfg.seed = derive_seed(base_cfg.seed, latent_dim);
    PipelineOptions run = pipeline;
    run.seed = derive_seed(pipeline.seed, 0x1000 + latent_dim);
    const MethodMetrics metrics = evaluate_method(
        corpus, make_encoder_representation(cfg, "proposed"), split, run);
    rows.push_back({latent_dim, metrics.emotion_uar, metrics.gender_acc,
                    metrics.member_acc, metrics.language_acc});
  }
  return rows;
}

inline std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "latent_dim,emotion_uar,gender_acc,member_acc,language_acc\n";
  for (const auto& r : rows) {
    out += std::to_string(r.latent_dim);
    for (double v :
         {r.emotion_uar, r.gender_acc, r.member_acc, r.language_acc}) {
      out += ',';
      out += detail::format_double(v);
    }
    out += '\n';
  }
  return out;
}

} // namespace peec
