// linpool command-line tool: simulate, pool, shrink, backtest, sscm-diag.
// Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numerical failure.

#include "linpool/config.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;
using namespace linpool;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

int exit_code(ErrorKind k) {
    switch (k) {
        case ErrorKind::Config:
        case ErrorKind::InvalidModel:
        case ErrorKind::UnsupportedClosedForm: return kExitConfig;
        case ErrorKind::Data:
        case ErrorKind::Shape:
        case ErrorKind::InsufficientData: return kExitData;
        case ErrorKind::NotStrictlyConvex:
        case ErrorKind::Infeasible:
        case ErrorKind::Conditioning: return kExitNumerical;
    }
    return kExitNumerical;
}

void write_text(const std::string& path, const std::string& text) {
    if (path == "-") {
        std::cout << text;
        return;
    }
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Data, "cannot write " + path);
    out << text;
}

std::string base_dir(const std::string& path) { return fs::path(path).parent_path().string(); }

template <typename Scalar>
std::vector<Dataset<Scalar>> as_datasets(const std::vector<io::LoadedData>& loaded) {
    std::vector<Dataset<Scalar>> out;
    for (const auto& d : loaded) {
        if constexpr (is_complex_v<Scalar>) out.emplace_back(d.complex);
        else out.emplace_back(d.real);
    }
    return out;
}

std::string coefficients_csv(const CoefficientSet& c, const std::vector<std::string>& names) {
    std::string out = "weight";
    for (Index k = 0; k < c.K(); ++k) out += ",class" + std::to_string(k + 1);
    out += "\n";
    for (Index r = 0; r < c.weights.rows(); ++r) {
        out += r < static_cast<Index>(names.size()) ? names[static_cast<std::size_t>(r)] : "identity";
        for (Index k = 0; k < c.K(); ++k) out += "," + io::format_number(c.weights(r, k));
        out += "\n";
    }
    out += "qp_fallback";
    for (bool b : c.used_qp_fallback) out += b ? ",1" : ",0";
    out += "\n";
    return out;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string config, out, long_out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<Index> trials;
};

int cmd_simulate(const SimulateArgs& a) {
    auto j = config::load(a.config);
    if (a.trials) j["trials"] = *a.trials;
    if (a.seed) j["seed"] = *a.seed;
    if (a.threads) j["threads"] = *a.threads;
    const auto cfg = config::parse_simulate(j, a.config);
    const std::string out = a.out.empty() ? cfg.output : a.out;
    const std::string long_out = a.long_out.empty() ? cfg.long_output : a.long_out;
    std::string wide, tall;
    for (std::size_t i = 0; i < cfg.experiments.size(); ++i) {
        const NmseTable t = run_nmse(cfg.experiments[i]);
        if (cfg.experiments.size() > 1) wide += "# " + t.name + "\n";
        wide += nmse_csv(t);
        tall += nmse_long_csv(t, i == 0);
        if (t.failed_trials > 0) std::cerr << t.name << ": " << t.failed_trials << " trial(s) aborted\n";
    }
    write_text(out, wide);
    if (!long_out.empty()) write_text(long_out, tall);
    if (out != "-") std::cout << wide;
    return 0;
}

struct PoolArgs {
    std::string config, prefix;
    std::vector<std::string> inputs;
};

int cmd_pool(const PoolArgs& a) {
    const auto cfg = config::parse_pool(config::load(a.config), a.config);
    std::vector<io::LoadedData> loaded;
    for (const auto& f : a.inputs) loaded.push_back(io::read_data(f));
    for (std::size_t k = 1; k < loaded.size(); ++k) {
        if (loaded[k].p() != loaded[0].p())
            fail(ErrorKind::Shape, a.inputs[k] + " has p = " + std::to_string(loaded[k].p()) + " but " + a.inputs[0] +
                                       " has p = " + std::to_string(loaded[0].p()));
        if (loaded[k].is_complex != loaded[0].is_complex)
            fail(ErrorKind::Data, a.inputs[k] + " and " + a.inputs[0] + " mix real and complex columns");
    }
    std::vector<std::string> names;
    for (const auto& f : a.inputs) names.push_back(fs::path(f).stem().string());

    CoefficientSet coef;
    if (loaded[0].is_complex) {
        const auto res = pool(as_datasets<cdouble>(loaded), cfg.pooling, cfg.estimator);
        for (std::size_t k = 0; k < res.estimates.size(); ++k)
            io::write_matrix(a.prefix + "_class" + std::to_string(k + 1) + ".csv", res.estimates[k]);
        coef = res.coefficients;
    } else {
        const auto res = pool(as_datasets<double>(loaded), cfg.pooling, cfg.estimator);
        for (std::size_t k = 0; k < res.estimates.size(); ++k)
            io::write_matrix(a.prefix + "_class" + std::to_string(k + 1) + ".csv", res.estimates[k]);
        coef = res.coefficients;
    }
    const std::string text = coefficients_csv(coef, names);
    write_text(a.prefix + "_coefficients.csv", text);
    std::cout << text;
    return 0;
}

struct ShrinkArgs {
    std::string config, input, out, target_data;
    std::optional<std::uint64_t> seed;
};

int cmd_shrink(const ShrinkArgs& a) {
    auto cfg = config::parse_shrink(config::load(a.config), a.config, base_dir(a.config));
    if (a.seed) cfg.seed = *a.seed;
    const io::LoadedData loaded = io::read_data(a.input);
    if (loaded.is_complex) fail(ErrorKind::Data, "shrink supports real data only");
    const RealDataset data(loaded.real);
    std::optional<RealDataset> target_data;
    if (!a.target_data.empty()) {
        target_data.emplace(io::read_matrix(a.target_data));
    } else if (cfg.target_window) {
        const Index tw = *cfg.target_window;
        if (tw < 2 || tw > data.n()) fail(ErrorKind::Config, "target_window must lie in [2, n]");
        target_data.emplace(data.X.bottomRows(tw));
    }
    const RealDataset& source = target_data ? *target_data : data;
    if (source.p() != data.p()) fail(ErrorKind::Shape, "target data dimension differs from the input");
    std::vector<MatrixXd> targets;
    for (const auto& t : cfg.targets) targets.push_back(build_target(source, t));

    std::string summary;
    if (cfg.method == "bartz") {
        const auto res = bartz_estimate(data, targets);
        io::write_matrix(a.out, res.estimate);
        summary = "scm_weight," + io::format_number(res.scm_weight) + "\n";
        for (Index k = 0; k < res.weights.size(); ++k)
            summary += "target" + std::to_string(k + 1) + "," + io::format_number(res.weights(k)) + "\n";
    } else {
        Rng rng(cfg.seed, 0);
        const auto res = multitarget_pool_matrices(data, targets, cfg.multitarget, rng);
        io::write_matrix(a.out, res.estimate);
        const VectorXd w = res.coefficients.weights.col(0);
        summary = "scm_weight," + io::format_number(w(0)) + "\n";
        for (Index k = 1; k + 1 < w.size(); ++k)
            summary += "target" + std::to_string(k) + "," + io::format_number(w(k)) + "\n";
        summary += "identity," + io::format_number(w(w.size() - 1)) + "\n";
    }
    std::cout << summary;
    return 0;
}

struct BacktestArgs {
    std::string config, prices, out, daily, diagnostics;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
};

int cmd_backtest(const BacktestArgs& a) {
    auto cfg = config::parse_backtest(config::load(a.config), a.config);
    if (a.seed) cfg.base.seed = *a.seed;
    if (a.threads) cfg.base.threads = *a.threads;
    const ReturnsPanel panel = ingest_prices(a.prices);
    std::vector<BacktestReport> reports;
    std::string daily, diag;
    for (Index n : cfg.windows) {
        for (const auto& e : cfg.estimators) {
            BacktestConfig b = cfg.base;
            b.window = n;
            b.estimator = e;
            reports.push_back(backtest(panel, b));
            const auto& r = reports.back();
            const std::string tag = "# " + e + ",n=" + std::to_string(n) + "\n";
            daily += tag + daily_returns_csv(r);
            diag += tag + diagnostics_csv(r);
        }
    }
    const std::string text = report_csv(reports);
    write_text(a.out, text);
    if (!a.daily.empty()) write_text(a.daily, daily);
    if (!a.diagnostics.empty()) write_text(a.diagnostics, diag);
    if (a.out != "-") std::cout << text;
    return 0;
}

struct SscmArgs {
    std::string config, out;
    std::optional<unsigned> threads;
};

int cmd_sscm(const SscmArgs& a) {
    auto cfg = config::parse_sscm(config::load(a.config), a.config);
    if (a.threads) cfg.spec.threads = *a.threads;
    const std::string text = sscm_csv(run_sscm_asymptotics(cfg.spec));
    const std::string out = a.out.empty() ? cfg.output : a.out;
    write_text(out, text);
    if (out != "-") std::cout << text;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Linear pooling of sample covariance matrices"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "Monte Carlo NMSE experiment");
    s->add_option("-c,--config", sim.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    s->add_option("-o,--out", sim.out, "Wide NMSE table CSV (overrides config; '-' for stdout)");
    s->add_option("--long-out", sim.long_out, "Long-format CSV (overrides config)");
    s->add_option("--seed", sim.seed, "Override the seed");
    s->add_option("--threads", sim.threads, "Worker threads (0 = all cores)");
    s->add_option("--trials", sim.trials, "Override the trial count");

    PoolArgs pl;
    auto* p = app.add_subcommand("pool", "Pool class SCMs from K data files");
    p->add_option("-c,--config", pl.config, "Pooling config (JSON)")->required()->check(CLI::ExistingFile);
    p->add_option("-o,--out-prefix", pl.prefix, "Output prefix for <prefix>_classK.csv and _coefficients.csv")
        ->required();
    p->add_option("inputs", pl.inputs, "One CSV per class (n_k x p; complex via _re/_im columns)")
        ->required()
        ->check(CLI::ExistingFile);

    ShrinkArgs sh;
    auto* m = app.add_subcommand("shrink", "Single-class multi-target shrinkage");
    m->add_option("-c,--config", sh.config, "Shrinkage config (JSON)")->required()->check(CLI::ExistingFile);
    m->add_option("-o,--out", sh.out, "Output covariance CSV")->required();
    m->add_option("--target-data", sh.target_data, "Separate data file for building targets")->check(CLI::ExistingFile);
    m->add_option("--seed", sh.seed, "Override the seed");
    m->add_option("input", sh.input, "Data CSV (n x p)")->required()->check(CLI::ExistingFile);

    BacktestArgs bt;
    auto* b = app.add_subcommand("backtest", "Sliding-window minimum-variance backtest");
    b->add_option("-c,--config", bt.config, "Backtest config (JSON)")->required()->check(CLI::ExistingFile);
    b->add_option("-p,--prices", bt.prices, "Prices CSV with header date,TICKER1,...")
        ->required()
        ->check(CLI::ExistingFile);
    b->add_option("-o,--out", bt.out, "Risk report CSV ('-' for stdout)")->required();
    b->add_option("--daily", bt.daily, "Per-day out-of-sample returns CSV");
    b->add_option("--diagnostics", bt.diagnostics, "Per-window weight diagnostics CSV");
    b->add_option("--seed", bt.seed, "Override the seed");
    b->add_option("--threads", bt.threads, "Worker threads (0 = all cores)");

    SscmArgs sc;
    auto* d = app.add_subcommand("sscm-diag", "SSCM bias and distance diagnostics");
    d->add_option("-c,--config", sc.config, "Diagnostics config (JSON)")->required()->check(CLI::ExistingFile);
    d->add_option("-o,--out", sc.out, "Output CSV (overrides config)");
    d->add_option("--threads", sc.threads, "Worker threads (0 = all cores)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*s) return cmd_simulate(sim);
        if (*p) return cmd_pool(pl);
        if (*m) return cmd_shrink(sh);
        if (*b) return cmd_backtest(bt);
        if (*d) return cmd_sscm(sc);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitConfig;
}
