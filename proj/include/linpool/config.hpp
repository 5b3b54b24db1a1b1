#pragma once

// JSON run configurations for the command-line tool. Every object is
// checked against its list of allowed keys before use.

#include "linpool/portfolio.hpp"
#include "linpool/simulator.hpp"

#include <json.hpp>

#include <fstream>
#include <set>

namespace linpool::config {

using Json = nlohmann::json;

inline Json load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Config, "cannot open config " + path);
    try {
        return Json::parse(in, nullptr, true, true);
    } catch (const Json::exception& e) {
        fail(ErrorKind::Config, path + ": " + e.what());
    }
}

inline void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) fail(ErrorKind::Config, where + " must be an object");
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key)) fail(ErrorKind::Config, "unknown key '" + key + "' in " + where);
}

template <typename T>
T get(const Json& j, const std::string& key, const T& fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception&) {
        fail(ErrorKind::Config, "key '" + key + "' in " + where + " has the wrong type");
    }
}

inline std::string where_of(const std::string& path, const std::string& section) {
    return section.empty() ? path : path + " (" + section + ")";
}

// ---------------------------------------------------------------------------
// Models and laws

/// {"kind": "ar1"|"cs"|"banded1"|"explicit", "p", "sigma2", "rho", "rho_phase", "matrix"}
/// `rho_phase` is in turns: rho = rho * exp(j 2 pi rho_phase).
inline CovarianceModel parse_model(const Json& j, const std::string& where, std::optional<Index> p_override = {}) {
    check_keys(j, {"kind", "p", "sigma2", "rho", "rho_phase", "matrix"}, where);
    const std::string kind = get<std::string>(j, "kind", "", where);
    const Index p = p_override ? *p_override : get<Index>(j, "p", 0, where);
    const double sigma2 = get<double>(j, "sigma2", 1.0, where);
    const double rho = get<double>(j, "rho", 0.0, where);
    const double phase = get<double>(j, "rho_phase", 0.0, where);
    if (kind != "explicit" && p < 1) fail(ErrorKind::Config, where + ": model needs p >= 1");
    if (kind == "ar1") return CovarianceModel::ar1(p, sigma2, std::polar(rho, 2.0 * M_PI * phase));
    if (kind == "cs") return CovarianceModel::compound_symmetry(p, sigma2, rho);
    if (kind == "banded1") return CovarianceModel::banded1(p, sigma2, rho);
    if (kind == "explicit") {
        if (!j.contains("matrix")) fail(ErrorKind::Config, where + ": explicit model needs 'matrix'");
        const auto rows = get<std::vector<std::vector<double>>>(j, "matrix", {}, where);
        MatrixXd m(static_cast<Index>(rows.size()), static_cast<Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != rows.size()) fail(ErrorKind::Config, where + ": matrix must be square");
            for (std::size_t k = 0; k < rows.size(); ++k) m(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k];
        }
        return CovarianceModel::explicit_matrix(m);
    }
    fail(ErrorKind::Config, where + ": unknown model kind '" + kind + "'");
}

inline Family parse_family(const std::string& s, const std::string& where) {
    if (s == "gaussian") return Family::Gaussian;
    if (s == "t") return Family::StudentT;
    if (s == "complex-gaussian") return Family::ComplexGaussian;
    if (s == "complex-t") return Family::ComplexStudentT;
    fail(ErrorKind::Config, where + ": unknown family '" + s + "'");
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateConfig {
    std::vector<ExperimentSpec> experiments;
    std::string output = "nmse.csv";
    std::string long_output;
};

inline SimulateConfig parse_simulate(const Json& j, const std::string& path) {
    const std::string w = where_of(path, "");
    check_keys(j,
               {"preset", "sweep", "classes", "trials", "seed", "threads", "estimators", "mean_mode", "output",
                "long_output", "approximate_correction", "name"},
               w);
    SimulateConfig cfg;
    const Index trials = get<Index>(j, "trials", 200, w);
    const auto seed = get<std::uint64_t>(j, "seed", 1, w);
    const unsigned threads = get<unsigned>(j, "threads", 1, w);
    cfg.output = get<std::string>(j, "output", cfg.output, w);
    cfg.long_output = get<std::string>(j, "long_output", "", w);

    const std::string preset = get<std::string>(j, "preset", "", w);
    if (!preset.empty() && j.contains("classes")) fail(ErrorKind::Config, w + ": give either 'preset' or 'classes'");
    if (preset.empty() && j.contains("sweep")) fail(ErrorKind::Config, w + ": 'sweep' needs a preset");
    if (preset == "table1_ar1" || preset == "table1_cs" || preset == "table1_mixed") {
        cfg.experiments.push_back(setups::table1(preset.substr(7), trials, seed));
    } else if (preset == "complex_ar1") {
        for (Index n : get<std::vector<Index>>(j, "sweep", {10, 20, 40}, w))
            cfg.experiments.push_back(setups::complex_ar1(n, trials, seed));
    } else if (preset == "varying_k") {
        for (Index K : get<std::vector<Index>>(j, "sweep", {2, 4, 8, 16}, w))
            cfg.experiments.push_back(setups::varying_k(K, trials, seed));
    } else if (!preset.empty()) {
        fail(ErrorKind::Config, w + ": unknown preset '" + preset + "'");
    } else {
        if (!j.contains("classes") || !j.at("classes").is_array() || j.at("classes").empty())
            fail(ErrorKind::Config, w + ": 'classes' must be a non-empty array");
        ExperimentSpec spec;
        spec.name = get<std::string>(j, "name", "custom", w);
        spec.trials = trials;
        spec.seed = seed;
        std::size_t k = 0;
        for (const auto& c : j.at("classes")) {
            const std::string cw = w + " classes[" + std::to_string(k++) + "]";
            check_keys(c, {"family", "nu", "n", "model", "rho_range"}, cw);
            if (!c.contains("model")) fail(ErrorKind::Config, cw + ": missing 'model'");
            ClassSpec cs{EllipticalLaw(parse_family(get<std::string>(c, "family", "gaussian", cw), cw),
                                       parse_model(c.at("model"), cw + " model"), get<double>(c, "nu", 0.0, cw)),
                         get<Index>(c, "n", 0, cw), std::nullopt};
            if (c.contains("rho_range")) {
                const auto r = get<std::vector<double>>(c, "rho_range", {}, cw);
                if (r.size() != 2) fail(ErrorKind::Config, cw + ": rho_range needs two numbers");
                cs.rho_range = std::make_pair(r[0], r[1]);
            }
            spec.classes.push_back(std::move(cs));
        }
        cfg.experiments.push_back(std::move(spec));
    }

    const std::string mode = get<std::string>(j, "mean_mode", "", w);
    for (auto& e : cfg.experiments) {
        e.threads = threads;
        if (j.contains("estimators")) e.estimators = get<std::vector<std::string>>(j, "estimators", {}, w);
        if (mode == "fixed") e.mean_mode = MeanMode::FixedAcrossTrials;
        else if (mode == "resampled") e.mean_mode = MeanMode::ResampledPerTrial;
        else if (!mode.empty()) fail(ErrorKind::Config, w + ": mean_mode must be 'fixed' or 'resampled'");
        e.estimator_options.approximate_correction = get<bool>(j, "approximate_correction", false, w);
        validate(e);
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// pool

struct PoolConfig {
    PoolingConfig pooling;
    EstimatorOptions estimator;
};

inline PoolingConfig parse_pooling(const Json& j, const std::string& w, PoolingConfig cfg = {}) {
    const std::string variant = get<std::string>(j, "variant", "linpool", w);
    if (variant == "linpool") cfg.variant = PoolingVariant::NonnegQPWithIdentity;
    else if (variant == "linpool-c") cfg.variant = PoolingVariant::ConvexCombination;
    else if (variant == "nonneg") cfg.variant = PoolingVariant::NonnegQP;
    else if (variant == "unconstrained") cfg.variant = PoolingVariant::Unconstrained;
    else fail(ErrorKind::Config, w + ": unknown variant '" + variant + "'");
    cfg.unconstrained_with_identity = get<bool>(j, "identity", false, w);
    cfg.identity_lower_bound = get<double>(j, "identity_lower_bound", cfg.identity_lower_bound, w);
    cfg.identity_lower_bounds = get<std::vector<double>>(j, "identity_lower_bounds", {}, w);
    if (j.contains("identity_scale_alpha")) cfg.identity_scale_alpha = get<double>(j, "identity_scale_alpha", 0.0, w);
    if (!(cfg.identity_lower_bound > 0.0)) fail(ErrorKind::Config, w + ": identity_lower_bound must be positive");
    return cfg;
}

inline const std::set<std::string>& pooling_keys() {
    static const std::set<std::string> k{"variant", "identity", "identity_lower_bound", "identity_lower_bounds",
                                         "identity_scale_alpha"};
    return k;
}

inline EstimatorOptions parse_estimator_options(const Json& j, const std::string& w) {
    EstimatorOptions opt;
    opt.approximate_correction = get<bool>(j, "approximate_correction", false, w);
    opt.median.gradient_tolerance = get<double>(j, "median_tolerance", opt.median.gradient_tolerance, w);
    opt.median.max_iterations = get<int>(j, "median_max_iterations", opt.median.max_iterations, w);
    return opt;
}

inline PoolConfig parse_pool(const Json& j, const std::string& path) {
    const std::string w = where_of(path, "");
    auto keys = pooling_keys();
    keys.insert({"approximate_correction", "median_tolerance", "median_max_iterations"});
    check_keys(j, keys, w);
    return {parse_pooling(j, w), parse_estimator_options(j, w)};
}

// ---------------------------------------------------------------------------
// shrink

struct ShrinkConfig {
    MultiTargetConfig multitarget;
    std::vector<TargetSpec> targets;
    std::string method = "linpool";  // or "bartz"
    std::uint64_t seed = 1;
    std::optional<Index> target_window;
};

inline TargetKind parse_target_kind(const std::string& s, const std::string& w) {
    if (s == "constant-correlation") return TargetKind::ConstantCorrelation;
    if (s == "single-factor") return TargetKind::SingleFactorMarket;
    if (s == "identity") return TargetKind::Identity;
    fail(ErrorKind::Config, w + ": unknown target '" + s + "'");
}

inline ShrinkConfig parse_shrink(const Json& j, const std::string& path, const std::string& base_dir = "") {
    const std::string w = where_of(path, "");
    auto keys = pooling_keys();
    keys.insert({"targets", "surrogate_samples", "method", "seed", "target_window", "approximate_correction",
                 "median_tolerance", "median_max_iterations"});
    check_keys(j, keys, w);
    ShrinkConfig cfg;
    cfg.multitarget.pooling = parse_pooling(j, w);
    cfg.multitarget.estimator = parse_estimator_options(j, w);
    cfg.multitarget.surrogate_samples = get<Index>(j, "surrogate_samples", 1000, w);
    cfg.method = get<std::string>(j, "method", "linpool", w);
    if (cfg.method != "linpool" && cfg.method != "bartz") fail(ErrorKind::Config, w + ": method must be linpool or bartz");
    cfg.seed = get<std::uint64_t>(j, "seed", 1, w);
    if (j.contains("target_window")) cfg.target_window = get<Index>(j, "target_window", 0, w);
    if (!j.contains("targets") || !j.at("targets").is_array())
        fail(ErrorKind::Config, w + ": 'targets' must be an array");
    for (const auto& t : j.at("targets")) {
        if (t.is_string()) {
            cfg.targets.push_back({parse_target_kind(t.get<std::string>(), w), {}});
        } else {
            check_keys(t, {"explicit"}, w + " target");
            std::string file = get<std::string>(t, "explicit", "", w);
            if (!base_dir.empty() && !file.empty() && file.front() != '/') file = base_dir + "/" + file;
            cfg.targets.push_back(TargetSpec::explicit_matrix(io::read_matrix(file)));
        }
    }
    if (cfg.multitarget.surrogate_samples < 4) fail(ErrorKind::Config, w + ": surrogate_samples must be >= 4");
    return cfg;
}

// ---------------------------------------------------------------------------
// backtest

struct BacktestRunConfig {
    BacktestConfig base;
    std::vector<Index> windows;
    std::vector<std::string> estimators;
};

inline BacktestRunConfig parse_backtest(const Json& j, const std::string& path) {
    const std::string w = where_of(path, "");
    check_keys(j,
               {"window", "windows", "rebalance", "estimators", "constrained", "max_weight", "annualization",
                "target_window", "targets", "surrogate_samples", "seed", "threads"},
               w);
    BacktestRunConfig cfg;
    BacktestConfig& b = cfg.base;
    if (j.contains("window") && j.contains("windows")) fail(ErrorKind::Config, w + ": give 'window' or 'windows'");
    cfg.windows = j.contains("windows") ? get<std::vector<Index>>(j, "windows", {}, w)
                                        : std::vector<Index>{get<Index>(j, "window", 60, w)};
    if (cfg.windows.empty()) fail(ErrorKind::Config, w + ": 'windows' is empty");
    cfg.estimators = get<std::vector<std::string>>(j, "estimators", {"scm", "linpool"}, w);
    for (const auto& e : cfg.estimators)
        if (!estimator_registry().count(e)) fail(ErrorKind::Config, w + ": unknown estimator '" + e + "'");
    b.rebalance = get<Index>(j, "rebalance", b.rebalance, w);
    b.constrained = get<bool>(j, "constrained", b.constrained, w);
    b.max_weight = get<double>(j, "max_weight", b.max_weight, w);
    b.annualization = get<double>(j, "annualization", b.annualization, w);
    b.target_window = get<Index>(j, "target_window", b.target_window, w);
    b.surrogate_samples = get<Index>(j, "surrogate_samples", b.surrogate_samples, w);
    b.seed = get<std::uint64_t>(j, "seed", b.seed, w);
    b.threads = get<unsigned>(j, "threads", b.threads, w);
    if (j.contains("targets")) {
        b.targets.clear();
        for (const auto& t : get<std::vector<std::string>>(j, "targets", {}, w)) b.targets.push_back(parse_target_kind(t, w));
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// sscm-diag

struct SscmConfig {
    SscmAsymptoticsSpec spec;
    std::string output = "sscm.csv";
};

inline SscmConfig parse_sscm(const Json& j, const std::string& path) {
    const std::string w = where_of(path, "");
    check_keys(j, {"model", "dims", "bias_trials", "bias_samples", "distance_n", "distance_trials", "seed", "threads", "output"},
               w);
    SscmConfig cfg;
    SscmAsymptoticsSpec& s = cfg.spec;
    if (j.contains("model")) {
        const Json m = j.at("model");
        if (m.contains("p")) fail(ErrorKind::Config, w + " model: 'p' comes from 'dims'");
        parse_model(m, w + " model", 2);  // validate keys now
        s.model = [m, w](Index p) { return parse_model(m, w + " model", p); };
    }
    s.dims = get<std::vector<Index>>(j, "dims", s.dims, w);
    s.bias_trials = get<Index>(j, "bias_trials", s.bias_trials, w);
    s.bias_samples = get<Index>(j, "bias_samples", s.bias_samples, w);
    s.distance_n = get<std::vector<Index>>(j, "distance_n", s.distance_n, w);
    s.distance_trials = get<Index>(j, "distance_trials", s.distance_trials, w);
    s.seed = get<std::uint64_t>(j, "seed", s.seed, w);
    s.threads = get<unsigned>(j, "threads", s.threads, w);
    cfg.output = get<std::string>(j, "output", cfg.output, w);
    for (Index p : s.dims)
        if (p < 2) fail(ErrorKind::Config, w + ": dims must be >= 2");
    for (Index n : s.distance_n)
        if (n < 1) fail(ErrorKind::Config, w + ": distance_n must be >= 1");
    return cfg;
}

}  // namespace linpool::config
