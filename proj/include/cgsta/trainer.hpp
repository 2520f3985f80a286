#pragma once

#include <stdexcept>
#include <vector>

#include "cgsta/config.hpp"
#include "cgsta/dataio.hpp"
#include "cgsta/model.hpp"

namespace cgsta::train {

// Thrown when a step produces NaN; carries the failing step for diagnostics.
struct NumericError : std::runtime_error {
    std::size_t step;
    explicit NumericError(std::size_t s, const std::string& what)
        : std::runtime_error(what), step(s) {}
};

struct StepLog {
    std::size_t step = 0, epoch = 0;
    double l_det = 0, l_cds = 0, l_saa = 0, l_total = 0;
    double intra_local = 0, intra_regional = 0, intra_global = 0, inter = 0, fusion = 0;
    double consist = 0, contrast = 0;
    double fro_local = 0;  // ||batch-mean A_local - A_stable_local||_F before the EMA update
};

struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::size_t t = 0;
};

// Global-norm clipping, then the standard bias-corrected adaptive-moment
// update. Deterministic; throws NumericError on non-finite gradients.
void adam_step(model::ParamStore& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8, double clip_norm = 5.0, std::size_t step_index = 0);

// One step's loss assembly per the active variant. Exposed for tests.
struct LossBreakdown {
    Tensor total;
    StepLog values;
    // node-id range of stable-branch computations on this tape ([lo, hi))
    std::size_t stable_nodes_lo = 0, stable_nodes_hi = 0;
    std::array<std::vector<double>, saa::kScales> batch_mean_dyn;  // for the EMA update
};

LossBreakdown total_loss(Tape& tape, const model::BoundModel& bound, const Tensor& pos_windows,
                         const Tensor& neg_windows, const saa::StableGraphBank& bank,
                         const config::Config& cfg, bool saa_active);

struct TrainResult {
    model::Model model;
    std::vector<StepLog> history;
    std::vector<double> val_ldet;  // per epoch (empty when validation is impossible)
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
};

// Splits the series 0.6/0.2/0.2 chronologically, fits the normalizer on the
// train fraction, trains with post-step EMA updates, early-stops on
// validation detection loss, and restores the best-epoch parameters.
TrainResult train(const config::Config& cfg, const dataio::TimeSeries& series);

// Mean detection loss of a window batch under fixed parameters (no tape).
double detection_loss_eval(const model::Model& m, const dataio::WindowBatch& windows);

}  // namespace cgsta::train
