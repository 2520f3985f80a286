#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "cgsta/config.hpp"
#include "cgsta/dataio.hpp"
#include "cgsta/density.hpp"
#include "cgsta/dlgc.hpp"
#include "cgsta/saa.hpp"
#include "cgsta/tensor.hpp"

namespace cgsta::model {

// Named parameter tensors with stable insertion order (the checkpoint
// manifest order).
class ParamStore {
  public:
    struct Entry {
        std::string name;
        Shape shape;
        std::vector<double> value;
    };

    void add(std::string name, Shape shape, std::vector<double> value);
    Entry& at(const std::string& name);
    const Entry& at(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t total_numel() const;

  private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Per-step binding of the store onto a tape.
struct BoundModel {
    dlgc::DlgcTensors dlgc;
    density::DensityTensors density;
    Tensor saa_w[saa::kScales], saa_b[saa::kScales];
    std::vector<Tensor> leaves;  // in store order
};

struct Model {
    config::Config cfg;
    ParamStore params;
    saa::StableGraphBank bank;
    dataio::Normalizer normalizer;
};

dlgc::DlgcConfig dlgc_config(const config::Config& cfg, std::size_t k);

// Deterministic initialization; parameter set depends on the variant
// (the single-scale variant owns no regional/global or SAA parameters).
ParamStore init_params(const config::Config& cfg, std::size_t k);

BoundModel bind(Tape* tape, const ParamStore& store, const config::Config& cfg,
                bool requires_grad);

// Forward pass from a window tensor to per-element NLL (graph encode, fuse,
// temporal encode, density head). Used for both training-time validation and
// scoring.
density::NllResult forward_nll(const BoundModel& b, const config::Config& cfg,
                               const Tensor& windows);

// Scores a raw series with the model's own normalizer. Windows at `stride`;
// per-step score is the mean over all scored contributions covering the step.
density::ScoreSeries score_series(const Model& m, const dataio::TimeSeries& series,
                                  std::size_t stride);

// Adjacency snapshot for one window: dynamic and stable graphs plus the
// per-sensor per-step score block, for the case-study export.
struct CaseSnapshot {
    std::vector<double> a_local_dyn, a_regional, a_global, a_local_stable, delta_local;  // K*K
    std::vector<double> sensor_scores;  // K x L per-variable NLL (col 0 unscored)
    std::size_t k = 0, l = 0;
};
CaseSnapshot case_snapshot(const Model& m, const dataio::TimeSeries& series,
                           std::size_t window_index, std::size_t stride);

// Checkpoint: ASCII magic + tensor manifest + flattened config, then raw
// little-endian 64-bit floats in manifest order. Bitwise round trip.
void save_checkpoint(const std::string& path, const Model& m);
Model load_checkpoint(const std::string& path);

}  // namespace cgsta::model
