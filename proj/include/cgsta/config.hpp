#pragma once

#include <cstdint>
#include <string>

namespace cgsta::config {

enum class Variant { full, no_saa, no_cds, no_dlgc };

Variant variant_from_string(const std::string& s);
std::string variant_to_string(Variant v);

// Resolved configuration: INI sections [model], [train], [data]; every key
// has a default; unknown keys are rejected.
struct Config {
    // [model]
    std::size_t d_e = 16, d_u = 32, d_a = 16, f_in = 8, h = 32, h_t = 32, h_f = 32, d_g = 64;
    std::size_t r = 8, g = 3;
    double tau = 0.1, tau_assign = 0.5, lambda_soft = 0.1, logvar_clamp = 8.0;

    // [train]
    double alpha = 0.85, beta = 0.35, gamma = 0.85;
    double lr = 1e-3, clip_norm = 5.0;
    std::size_t batch = 32, epochs = 10, patience = 3;
    std::uint64_t seed = 1;
    Variant variant = Variant::full;
    double aug_point_magnitude = 3.0, aug_point_fraction = 0.02;
    double aug_replace_len_fraction = 0.25, aug_drift_magnitude = 1.5;
    double aug_w_point = 1.0 / 3, aug_w_context = 1.0 / 3, aug_w_drift = 1.0 / 3;

    // [data]
    std::size_t window = 60, stride = 10, stride_test = 1;
    std::string label_column = "label";
    bool has_header = true;

    void validate() const;
};

Config parse_file(const std::string& path);
Config parse_string(const std::string& text);

// Deterministic space-separated section.key=value form used in checkpoints.
std::string flatten(const Config& cfg);
Config from_flat(const std::string& flat);

}  // namespace cgsta::config
