#include "msgtl/config.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace msgtl {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("TrainConfig: ") + what);
}

double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
        throw std::invalid_argument("TrainConfig: bad number for " + key + ": '" + v + "'");
    }
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
        throw std::invalid_argument("TrainConfig: bad integer for " + key + ": '" + v + "'");
    }
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw std::invalid_argument("TrainConfig: bad boolean for " + key + ": '" + v + "'");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void TrainConfig::validate() const {
    require(rho >= 0.0 && rho <= 1.0, "rho must lie in [0, 1]");
    require(gamma >= 1, "gamma must be positive");
    require(omega >= 3, "omega must be at least 3");
    require(eta0 > 0.0 && std::isfinite(eta0), "eta0 must be positive");
    require(decay_omega > 0.0, "decay_omega must be positive");
    require(decay_phi > 0.0, "decay_phi must be positive");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1 must lie in [0, 1)");
    require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2 must lie in [0, 1)");
    require(adam_epsilon > 0.0, "adam_epsilon must be positive");
    require(batch_size >= 1, "batch_size must be positive");
    require(dropout_p >= 0.0 && dropout_p < 1.0, "dropout_p must lie in [0, 1)");
    require(da_lambda >= 0.0 && std::isfinite(da_lambda), "da_lambda must be non-negative");
    require(da_hidden >= 1, "da_hidden must be positive");
    require(validation_fraction > 0.0 && validation_fraction < 1.0, "validation_fraction must lie in (0, 1)");
}

std::map<std::string, std::string> TrainConfig::to_map() const {
    std::map<std::string, std::string> kv;
    kv["rho"] = format_double(rho);
    kv["gamma"] = std::to_string(gamma);
    kv["omega"] = std::to_string(omega);
    kv["optimizer"] = optimizer == OptimizerKind::adam ? "adam" : "sgd";
    kv["eta0"] = format_double(eta0);
    kv["decay_omega"] = format_double(decay_omega);
    kv["decay_phi"] = format_double(decay_phi);
    kv["adam_beta1"] = format_double(adam_beta1);
    kv["adam_beta2"] = format_double(adam_beta2);
    kv["adam_epsilon"] = format_double(adam_epsilon);
    kv["epochs"] = std::to_string(epochs);
    kv["batch_size"] = std::to_string(batch_size);
    kv["dropout_p"] = format_double(dropout_p);
    kv["da_lambda"] = format_double(da_lambda);
    kv["da_hidden"] = std::to_string(da_hidden);
    kv["transfer"] = transfer ? "true" : "false";
    kv["shared_mask"] = shared_mask ? "true" : "false";
    kv["prev_score_feature"] = prev_score_feature ? "true" : "false";
    kv["patience"] = std::to_string(patience);
    kv["validation_fraction"] = format_double(validation_fraction);
    kv["seed"] = std::to_string(seed);
    return kv;
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv) {
    TrainConfig c;
    for (const auto& [k, v] : kv) {
        if (k == "rho") c.rho = parse_double(k, v);
        else if (k == "gamma") c.gamma = parse_u64(k, v);
        else if (k == "omega") c.omega = parse_u64(k, v);
        else if (k == "optimizer") {
            if (v == "adam") c.optimizer = OptimizerKind::adam;
            else if (v == "sgd") c.optimizer = OptimizerKind::sgd;
            else throw std::invalid_argument("TrainConfig: unknown optimizer '" + v + "'");
        } else if (k == "eta0") c.eta0 = parse_double(k, v);
        else if (k == "decay_omega") c.decay_omega = parse_double(k, v);
        else if (k == "decay_phi") c.decay_phi = parse_double(k, v);
        else if (k == "adam_beta1") c.adam_beta1 = parse_double(k, v);
        else if (k == "adam_beta2") c.adam_beta2 = parse_double(k, v);
        else if (k == "adam_epsilon") c.adam_epsilon = parse_double(k, v);
        else if (k == "epochs") c.epochs = parse_u64(k, v);
        else if (k == "batch_size") c.batch_size = parse_u64(k, v);
        else if (k == "dropout_p") c.dropout_p = parse_double(k, v);
        else if (k == "da_lambda") c.da_lambda = parse_double(k, v);
        else if (k == "da_hidden") c.da_hidden = parse_u64(k, v);
        else if (k == "transfer") c.transfer = parse_bool(k, v);
        else if (k == "shared_mask") c.shared_mask = parse_bool(k, v);
        else if (k == "prev_score_feature") c.prev_score_feature = parse_bool(k, v);
        else if (k == "patience") c.patience = parse_u64(k, v);
        else if (k == "validation_fraction") c.validation_fraction = parse_double(k, v);
        else if (k == "seed") c.seed = parse_u64(k, v);
        else throw std::invalid_argument("TrainConfig: unknown key '" + k + "'");
    }
    return c;
}

std::string to_kv_text(const std::map<std::string, std::string>& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("key-value line without '=': " + line);
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

}  // namespace msgtl
