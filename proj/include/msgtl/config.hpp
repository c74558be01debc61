#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace msgtl {

enum class OptimizerKind : std::uint8_t { adam = 0, sgd = 1 };

/// Everything that controls how one stage network is trained.
struct TrainConfig {
    double rho = 0.3;
    std::size_t gamma = 2;
    std::size_t omega = 6;

    OptimizerKind optimizer = OptimizerKind::adam;
    double eta0 = 0.003;
    double decay_omega = 10.0;
    double decay_phi = 0.75;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;

    std::size_t epochs = 60;
    std::size_t batch_size = 64;
    double dropout_p = 0.0;

    double da_lambda = 0.0;
    std::size_t da_hidden = 8;

    bool transfer = true;
    bool shared_mask = false;
    bool prev_score_feature = false;

    /// Early stopping on a held-out split of the training rows (0 disables).
    std::size_t patience = 20;
    double validation_fraction = 0.1;

    std::uint64_t seed = 1;

    /// Throws std::invalid_argument naming the first out-of-range field.
    void validate() const;

    /// Flat key=value view (values formatted for exact round-trip).
    std::map<std::string, std::string> to_map() const;
    static TrainConfig from_map(const std::map<std::string, std::string>& kv);

    bool operator==(const TrainConfig&) const = default;
};

/// Key-value text block, one `key = value` per line, keys sorted.
std::string to_kv_text(const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> parse_kv_text(const std::string& text);

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace msgtl
