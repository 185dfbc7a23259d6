// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any
// fails. Generators and oracles here are written independently of the
// library code they check.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mortfc/mortfc.hpp"

namespace fs = std::filesystem;
using namespace mortfc;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what)
    {
        if (!ok && pass) {
            pass = false;
            detail = what;
        }
    }
};

std::string fmt(double v, int digits = 3)
{
    std::ostringstream os;
    os.precision(digits);
    os << v;
    return os.str();
}

// --- SMAPE ------------------------------------------------------------------------

Outcome smape_oracle()
{
    Outcome o;
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> len(1, 20);
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
        const int n = len(rng);
        std::vector<double> a(static_cast<std::size_t>(n));
        std::vector<double> f(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double scale = std::pow(10.0, 4.0 * u(rng));
            a[i] = rep % 10 == 0 && i == 0 ? 0.0 : u(rng) * scale;
            f[i] = rep % 20 == 0 && i == 0 ? 0.0 : u(rng) * scale;
        }
        // 100/n * sum |F-A| / ((|A|+|F|)/2), in long double
        long double acc = 0.0L;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const long double half = (std::fabs(static_cast<long double>(a[i])) + std::fabs(static_cast<long double>(f[i]))) / 2.0L;
            if (half != 0.0L) {
                acc += std::fabs(static_cast<long double>(f[i]) - static_cast<long double>(a[i])) / half;
            }
        }
        const double oracle = static_cast<double>(100.0L * acc / static_cast<long double>(n));
        worst = std::max(worst, std::abs(smape(a, f) - oracle));
    }
    const double secs = since(t0);
    o.require(worst <= 1e-10, "max |delta| " + fmt(worst));
    o.require(secs < 1.0, "took " + fmt(secs) + " s");
    if (o.pass) {
        o.detail = "1000 pairs, max |delta| " + fmt(worst) + ", " + fmt(secs) + " s";
    }
    return o;
}

// --- Wilcoxon ---------------------------------------------------------------------

// Two-sided p from all 2^n sign patterns over average ranks of |d|, zeros dropped.
double wilcoxon_enumeration(const std::vector<double>& diffs)
{
    std::vector<double> d;
    for (double x : diffs) {
        if (x != 0.0) {
            d.push_back(x);
        }
    }
    const std::size_t n = d.size();
    if (n == 0) {
        return 1.0;
    }
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n; ++i) {
        double below = 0.0;
        double same = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            below += std::abs(d[j]) < std::abs(d[i]) ? 1.0 : 0.0;
            same += std::abs(d[j]) == std::abs(d[i]) ? 1.0 : 0.0;
        }
        rank[i] = below + (same + 1.0) / 2.0;
    }
    double observed = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        total += rank[i];
        observed += d[i] > 0.0 ? rank[i] : 0.0;
    }
    const double w = std::min(observed, total - observed);
    std::uint64_t at_most = 0;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
        double wp = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if ((mask >> i) & 1U) {
                wp += rank[i];
            }
        }
        if (wp <= w + 1e-9) {
            ++at_most;
        }
    }
    return std::min(1.0, 2.0 * static_cast<double>(at_most) / std::ldexp(1.0, static_cast<int>(n)));
}

Outcome wilcoxon_exactness()
{
    Outcome o;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(202);
    std::normal_distribution<double> z(0.25, 1.0);
    int checked = 0;
    for (int n = 1; n <= 10; ++n) {
        for (int rep = 0; rep < 200; ++rep) {
            std::vector<double> d(static_cast<std::size_t>(n));
            for (auto& v : d) {
                v = rep % 3 == 0 ? std::round(2.0 * z(rng)) / 2.0 : z(rng); // every third vector has ties and zeros
            }
            const double p = wilcoxon_signed_rank(d).p_value;
            const double e = wilcoxon_enumeration(d);
            o.require(p == e, "n=" + std::to_string(n) + " rep=" + std::to_string(rep) + ": " + fmt(p, 17) + " vs " + fmt(e, 17));
            ++checked;
        }
    }
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> d(20);
        for (auto& v : d) {
            v = z(rng);
        }
        const auto res = wilcoxon_signed_rank(d, 10);
        o.require(!res.exact, "n=20 did not use the normal approximation");
        worst = std::max(worst, std::abs(res.p_value - wilcoxon_enumeration(d)));
    }
    o.require(worst <= 0.01, "normal approximation off by " + fmt(worst));
    const double secs = since(t0);
    o.require(secs < 30.0, "took " + fmt(secs) + " s");
    if (o.pass) {
        o.detail = std::to_string(checked) + " exact p-values equal, n=20 approximation within " + fmt(worst) + ", " + fmt(secs) + " s";
    }
    return o;
}

// --- Lee-Carter -------------------------------------------------------------------

struct Generators {
    std::vector<double> a, b, k;
};

Generators lc_generators(int years, bool linear_k)
{
    Generators g;
    double sb = 0.0;
    for (int x = 0; x <= kMaxAge; ++x) {
        g.a.push_back(-9.5 + 0.085 * x + (x == 0 ? 4.0 : 0.0));
        g.b.push_back(1.2 + std::cos(x / 18.0));
        sb += g.b.back();
    }
    for (double& v : g.b) {
        v /= sb;
    }
    double sk = 0.0;
    for (int t = 0; t < years; ++t) {
        g.k.push_back(linear_k ? -2.0 * t : -1.1 * t + 6.0 * std::sin(0.4 * t));
        sk += g.k.back();
    }
    for (double& v : g.k) {
        v -= sk / years;
    }
    return g;
}

Eigen::MatrixXd lc_surface(const Generators& g)
{
    Eigen::MatrixXd m(static_cast<Eigen::Index>(g.k.size()), kMaxAge + 1);
    for (Eigen::Index t = 0; t < m.rows(); ++t) {
        for (Eigen::Index x = 0; x < m.cols(); ++x) {
            const auto xi = static_cast<std::size_t>(x);
            m(t, x) = std::exp(g.a[xi] + g.b[xi] * g.k[static_cast<std::size_t>(t)]);
        }
    }
    return m;
}

Outcome lee_carter_recovery()
{
    Outcome o;
    const auto t0 = Clock::now();
    auto g = lc_generators(60, false);
    auto fit = fit_lee_carter(lc_surface(g), 1961, "GEN");
    double worst = 0.0;
    for (std::size_t x = 0; x < g.b.size(); ++x) {
        worst = std::max(worst, std::abs(fit.components[0].b[x] - g.b[x]));
    }
    for (std::size_t t = 0; t < g.k.size(); ++t) {
        worst = std::max(worst, std::abs(fit.components[0].k[t] - g.k[t]));
    }
    o.require(worst <= 1e-8, "generator mismatch " + fmt(worst));

    auto lin = lc_generators(80, true);
    const Eigen::MatrixXd all = lc_surface(lin);
    auto lfit = fit_lee_carter(all.topRows(60), 1961, "LIN");
    const Eigen::MatrixXd f = forecast_lee_carter(lfit, 20);
    std::vector<double> truth;
    std::vector<double> pred;
    for (Eigen::Index j = 0; j < 20; ++j) {
        for (Eigen::Index x = 0; x < all.cols(); ++x) {
            truth.push_back(all(60 + j, x));
            pred.push_back(f(j, x));
        }
    }
    const double s = smape(truth, pred);
    o.require(s < 0.1, "linear-k 20-year SMAPE " + fmt(s));
    const double secs = since(t0);
    o.require(secs < 5.0, "took " + fmt(secs) + " s");
    if (o.pass) {
        o.detail = "b,k within " + fmt(worst) + ", 20-year SMAPE " + fmt(s) + ", " + fmt(secs) + " s";
    }
    return o;
}

// --- AutoARIMA --------------------------------------------------------------------

std::vector<double> normals(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<double> e(n);
    for (auto& v : e) {
        v = z(rng);
    }
    return e;
}

double best_aicc(const std::vector<double>& y, int d, bool constant)
{
    double best = std::numeric_limits<double>::infinity();
    for (int p = 0; p <= 2; ++p) {
        for (int q = 0; q <= 2; ++q) {
            try {
                best = std::min(best, fit_arima(y, {p, d, q, constant}).aicc);
            } catch (const FitError&) {
            }
        }
    }
    return best;
}

Outcome auto_arima_sanity()
{
    Outcome o;
    const auto t0 = Clock::now();
    const auto wn = normals(300, 31);
    const auto fw = auto_arima(wn);
    o.require(fw.order.d == 0, "white noise chose " + fw.order.to_string());
    o.require(fw.aicc <= best_aicc(wn, 0, true) + 2.0, "white noise AICc above exhaustive search");

    auto e = normals(300, 32);
    std::vector<double> rw;
    double acc = 0.0;
    for (double v : e) {
        acc += 0.4 + v;
        rw.push_back(acc);
    }
    const auto fr = auto_arima(rw);
    o.require(fr.order.d == 1, "random walk chose " + fr.order.to_string());
    o.require(fr.aicc <= best_aicc(rw, 1, true) + 2.0, "random walk AICc above exhaustive search");

    auto e2 = normals(500, 33);
    std::vector<double> ar;
    double x = 0.0;
    for (std::size_t i = 0; i < e2.size(); ++i) {
        x = 0.7 * x + e2[i];
        if (i >= 200) {
            ar.push_back(x);
        }
    }
    const auto fa = auto_arima(ar);
    o.require(fa.order.d == 0 && fa.order.p == 1 && fa.order.q == 0, "AR(1) chose " + fa.order.to_string());
    const double phi = fa.ar.empty() ? 0.0 : fa.ar[0];
    o.require(std::abs(phi - 0.7) <= 0.1, "AR(1) phi " + fmt(phi));
    const double gap = fa.aicc - best_aicc(ar, 0, true);
    o.require(gap <= 2.0, "AR(1) AICc " + fmt(gap) + " above exhaustive search");
    const double secs = since(t0);
    o.require(secs < 60.0, "took " + fmt(secs) + " s");
    if (o.pass) {
        o.detail = "white noise " + fw.order.to_string() + ", random walk " + fr.order.to_string() + ", AR(1) " + fa.order.to_string() + " phi " +
                   fmt(phi) + ", " + fmt(secs) + " s";
    }
    return o;
}

// --- Holt -------------------------------------------------------------------------

Outcome holt_exactness()
{
    Outcome o;
    double worst = 0.0;
    for (auto [c, slope] : {std::pair{3.0, 0.5}, std::pair{-0.004, -0.0001}, std::pair{120.0, 0.0}}) {
        std::vector<double> y;
        for (int t = 0; t < 40; ++t) {
            y.push_back(c + slope * t);
        }
        auto f = forecast_holt(fit_holt(y), 20);
        o.require(f.size() == 20, "wrong forecast length");
        for (std::size_t h = 0; h < f.size(); ++h) {
            worst = std::max(worst, std::abs(f[h] - (c + slope * static_cast<double>(40 + h))));
        }
    }
    o.require(worst <= 1e-6, "max error " + fmt(worst));
    if (o.pass) {
        o.detail = "3 lines, 20 steps, max error " + fmt(worst);
    }
    return o;
}

// --- Random forest ----------------------------------------------------------------

GlobalTrainingSet uniform_windows(std::size_t n, std::uint64_t seed, bool identity)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GlobalTrainingSet d;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> w(16);
        for (auto& v : w) {
            v = u(rng);
        }
        const double target = identity ? w.back() : u(rng);
        d.add(w, target, {"W", static_cast<int>(i % 111)}, 2000);
    }
    return d;
}

Outcome random_forest()
{
    Outcome o;
    ForestConfig one;
    one.n_trees = 1;
    one.bootstrap = false;
    one.threads = 1;
    auto mem = uniform_windows(500, 41, false);
    auto tree = train_forest(mem, one);
    for (std::size_t i = 0; i < mem.size(); ++i) {
        o.require(tree.predict(mem.input(i)) == mem.targets[i], "unbagged tree missed window " + std::to_string(i));
    }

    auto id = uniform_windows(5000, 42, true);
    ForestConfig cfg;
    cfg.n_trees = 100;
    cfg.threads = 1;
    const auto t0 = Clock::now();
    auto model = train_forest(id, cfg);
    const double secs = since(t0);
    double mean = 0.0;
    for (double t : id.targets) {
        mean += t;
    }
    mean /= static_cast<double>(id.size());
    double var = 0.0;
    double sse = 0.0;
    for (std::size_t i = 0; i < id.size(); ++i) {
        var += (id.targets[i] - mean) * (id.targets[i] - mean);
        const double r = model.predict(id.input(i)) - id.targets[i];
        sse += r * r;
    }
    const double ratio = std::sqrt(sse / var);
    o.require(ratio < 0.01, "identity RMSE is " + fmt(100.0 * ratio) + "% of std");
    o.require(secs < 60.0, "training took " + fmt(secs) + " s");

    auto again = train_forest(id, cfg);
    cfg.threads = 4;
    auto threaded = train_forest(id, cfg);
    o.require(again.trees == model.trees && threaded.trees == model.trees, "same seed gave a different forest");

    const auto [lo, hi] = std::minmax_element(mem.targets.begin(), mem.targets.end());
    ForestConfig small;
    small.n_trees = 20;
    small.threads = 1;
    auto bounded = train_forest(mem, small);
    std::mt19937_64 rng(43);
    std::normal_distribution<double> z(0.0, 5.0);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> h(24);
        for (auto& v : h) {
            v = z(rng);
        }
        for (double v : forecast_forest(bounded, h, 20)) {
            o.require(v >= *lo && v <= *hi, "forecast " + fmt(v) + " outside the target range");
        }
    }
    if (o.pass) {
        o.detail = "memorized 500 windows, identity RMSE " + fmt(100.0 * ratio) + "% of std, 5000 windows in " + fmt(secs) + " s, deterministic, bounded";
    }
    return o;
}

// --- Engine and CLI ---------------------------------------------------------------

std::vector<MortalitySurface> bundled_corpus()
{
    return load_corpus(fs::path(MORTFC_SOURCE_DIR) / "data" / "synthetic");
}

fs::path scratch_dir(const std::string& name)
{
    auto p = fs::temp_directory_path() / ("mortfc_acceptance_" + std::to_string(::getpid()) + "_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_registry(const fs::path& file, const std::string& name)
{
    std::ofstream(file) << nlohmann::json{{"adapters", {{{"name", name}, {"command", MORTFC_CONSTANT_ADAPTER}, {"timeout_seconds", 60}}}}}.dump();
}

Outcome leakage_sentinel()
{
    Outcome o;
    const auto dir = scratch_dir("leak");
    write_registry(dir / "registry.json", "Constant");
    RunConfig cfg;
    cfg.rf_trees = 20;
    cfg.threads = 1;
    cfg.adapters = (dir / "registry.json").string();
    cfg.work_dir = dir.string();
    const std::vector<std::string> names{"ARIMA", "ExponentialSmoothing", "LeeCarter", "LeeCarterAUTO", "LeeCarterMULTI", "RandomForest", "Constant"};
    cfg.methods = names;

    auto clean = bundled_corpus();
    AdapterPool pool_a(read_adapter_registry(cfg.adapters));
    auto ma = make_forecasters(names, cfg, &pool_a);
    auto base = run_backtest(clean, ma, cfg);

    // every year of the shortest validation period gets an absurd rate at every age
    auto poisoned = clean;
    std::mt19937_64 rng(51);
    std::uniform_real_distribution<double> u(0.5, 4.0);
    std::size_t cells = 0;
    for (auto& s : poisoned) {
        for (int y = s.last_year() - 4; y <= s.last_year(); ++y) {
            for (int age = 0; age <= kMaxAge; ++age) {
                s.set_rate(y, age, u(rng));
                ++cells;
            }
        }
    }
    AdapterPool pool_b(read_adapter_registry(cfg.adapters));
    auto mb = make_forecasters(names, cfg, &pool_b);
    auto res = run_backtest(poisoned, mb, cfg);

    o.require(base.failures.empty() && res.failures.empty(), "backtest had failed cells");
    o.require(base.records.size() == res.records.size() && !base.records.empty(), "record counts differ");
    std::size_t changed = 0;
    for (std::size_t i = 0; i < std::min(base.records.size(), res.records.size()); ++i) {
        const auto& a = base.records[i];
        const auto& b = res.records[i];
        if (a.method != b.method || a.key.country != b.key.country || a.key.age != b.key.age || a.horizon != b.horizon || a.predicted != b.predicted) {
            ++changed;
        }
    }
    o.require(changed == 0, std::to_string(changed) + " forecasts changed");
    fs::remove_all(dir);
    if (o.pass) {
        o.detail = std::to_string(cells) + " validation cells poisoned, " + std::to_string(base.records.size()) + " records bit-identical across 7 methods";
    }
    return o;
}

int run_cli(const std::string& args, const fs::path& log)
{
    const std::string cmd = std::string("env -u MORTFC_ADAPTERS '") + MORTFC_CLI + "' " + args + " > '" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome end_to_end()
{
    Outcome o;
    const auto dir = scratch_dir("e2e");
    write_registry(dir / "registry.json", "Constant");
    const std::string corpus = fs::path(MORTFC_SOURCE_DIR) / "data" / "synthetic";
    const std::string income = fs::path(MORTFC_SOURCE_DIR) / "config" / "income_groups.csv";
    const auto t0 = Clock::now();
    const int bt = run_cli("backtest --corpus '" + corpus + "' --methods ARIMA,ExponentialSmoothing,LeeCarter,LeeCarterMULTI,RandomForest,Constant " +
                               "--horizons 5,10,20 --adapters '" + (dir / "registry.json").string() + "' --out '" + (dir / "bt").string() + "'",
                           dir / "backtest.log");
    o.require(bt == 0, "backtest exited with " + std::to_string(bt));
    const int fu = run_cli("future --corpus '" + corpus + "' --methods LeeCarter,Constant --horizons 20 --adapters '" + (dir / "registry.json").string() +
                               "' --out '" + (dir / "fut").string() + "'",
                           dir / "future.log");
    o.require(fu == 0, "future exited with " + std::to_string(fu));
    const int rp = run_cli("report --records '" + (dir / "bt" / "records.csv").string() + "' --future-records '" + (dir / "fut" / "records.csv").string() +
                               "' --by method,age,income,length --income-map '" + income + "' --corpus '" + corpus +
                               "' --significance --plots boxplot,heatmap,trajectories --country SYA --ages 25,50,75 --out '" + (dir / "rp").string() + "'",
                           dir / "report.log");
    o.require(rp == 0, "report exited with " + std::to_string(rp));
    const double secs = since(t0);
    o.require(secs < 600.0, "took " + fmt(secs) + " s");

    std::vector<std::string> expected{"evaluation.csv", "summary.csv", "pairwise_tests.csv", "significance.csv", "significance.txt", "boxplot.csv",
                                      "trajectories_SYA_h20.csv", "trajectories_SYA_h20.svg", "manifest.json"};
    for (const char* g : {"method", "age", "income", "length"}) {
        expected.push_back("grouped_" + std::string(g) + ".csv");
    }
    for (int h : {5, 10, 20}) {
        expected.push_back("boxplot_h" + std::to_string(h) + ".svg");
        for (const char* g : {"method", "age", "income", "length"}) {
            expected.push_back("heatmap_" + std::string(g) + "_h" + std::to_string(h) + ".svg");
        }
    }
    for (const auto& f : expected) {
        o.require(fs::exists(dir / "rp" / f) && fs::file_size(dir / "rp" / f) > 0, "missing artifact " + f);
    }

    // median SMAPE per (horizon, method) from summary.csv
    std::map<std::pair<int, std::string>, double> med;
    std::ifstream in(dir / "rp" / "summary.csv");
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("horizon,", 0) == 0) {
            continue;
        }
        auto f = split(line, ',');
        if (f.size() >= 4) {
            med[{std::stoi(std::string(f[0])), std::string(f[1])}] = std::stod(std::string(f[3]));
        }
    }
    std::string margins;
    for (int h : {5, 10, 20}) {
        const auto lc = med.find({h, "LeeCarter"});
        const auto cst = med.find({h, "Constant"});
        if (lc == med.end() || cst == med.end()) {
            o.require(false, "summary lacks LeeCarter or Constant at h=" + std::to_string(h));
            continue;
        }
        o.require(lc->second < cst->second, "h=" + std::to_string(h) + ": LeeCarter " + fmt(lc->second) + " vs Constant " + fmt(cst->second));
        margins += " h" + std::to_string(h) + " " + fmt(lc->second) + "<" + fmt(cst->second);
    }
    if (o.pass) {
        o.detail = std::to_string(expected.size()) + " artifacts in " + fmt(secs) + " s; median SMAPE LeeCarter<Constant:" + margins;
        fs::remove_all(dir);
    } else {
        o.detail += " (logs in " + dir.string() + ")";
    }
    return o;
}

// --- Protocol ---------------------------------------------------------------------

AdapterSpec adapter(const std::string& command, std::vector<std::string> args, double timeout = 10.0)
{
    AdapterSpec s;
    s.name = "acceptance";
    s.command = command;
    s.args = std::move(args);
    s.timeout_seconds = timeout;
    return s;
}

Outcome protocol_conformance()
{
    Outcome o;
    const std::vector<ForecastRequest> batch{{"a", 1990, {0.1, 0.2, 0.3}, 4}, {"b", 1995, {0.5, 0.42}, 2}, {"c", 2000, {0.7, 0.8, 0.9, 0.11}, 3}};
    auto expect_persistence = [&](const std::vector<ForecastOutcome>& out, const std::string& what) {
        o.require(out.size() == batch.size(), what + ": wrong reply count");
        for (std::size_t i = 0; i < std::min(out.size(), batch.size()); ++i) {
            const bool ok = out[i].ok() && out[i].id == batch[i].id &&
                            *out[i].values == std::vector<double>(static_cast<std::size_t>(batch[i].horizon), batch[i].values.back());
            o.require(ok, what + ": bad reply for " + batch[i].id + (out[i].error.empty() ? "" : " (" + out[i].error + ")"));
        }
    };

    {
        auto spec = adapter(MORTFC_CONSTANT_ADAPTER, {});
        spec.batch_size = 2;
        AdapterHandle h(spec);
        o.require(h.adapter_name() == "constant", "handshake name " + h.adapter_name());
        expect_persistence(h.request_forecast(batch), "constant adapter batch");
    }
    {
        AdapterHandle h(adapter(MORTFC_FIXTURE_ADAPTER, {"reverse-order"}));
        expect_persistence(h.request_forecast(batch), "out-of-order replies");
    }
    {
        AdapterHandle h(adapter(MORTFC_FIXTURE_ADAPTER, {"slow", "5"}, 1.0));
        const auto t0 = Clock::now();
        auto out = h.request_forecast(batch);
        const double secs = since(t0);
        o.require(secs <= 2.0, "timeout took " + fmt(secs) + " s");
        for (const auto& r : out) {
            o.require(!r.ok() && r.error.find("timed out") != std::string::npos, "slow adapter reply was not a timeout");
        }
    }
    {
        const auto dir = scratch_dir("crash");
        AdapterHandle h(adapter(MORTFC_FIXTURE_ADAPTER, {"crash-once", (dir / "marker").string()}));
        auto first = h.request_forecast(batch);
        for (const auto& r : first) {
            o.require(!r.ok(), "crash was not reported");
        }
        expect_persistence(h.request_forecast(batch), "after restart");
        o.require(h.restarts() == 1, "restarts " + std::to_string(h.restarts()));
        fs::remove_all(dir);
    }

    std::mt19937_64 rng(61);
    std::bernoulli_distribution coin(0.5);
    std::uniform_int_distribution<int> small(-3000, 3000);
    std::uniform_int_distribution<int> chr(0x20, 0x7e);
    const std::vector<std::string> awkward{"\n", "\t", "\"", "\\", "\xc3\xa9", "\xe2\x82\xac", "\xf0\x9f\x93\x88", std::string(1, '\0')};
    auto text = [&] {
        std::string s;
        for (int n = std::uniform_int_distribution<int>(0, 10)(rng); n > 0; --n) {
            if (coin(rng)) {
                s += static_cast<char>(chr(rng));
            } else {
                s += awkward[std::uniform_int_distribution<std::size_t>(0, awkward.size() - 1)(rng)];
            }
        }
        return s;
    };
    int round_trips = 0;
    for (int i = 0; i < 1000; ++i) {
        wire::WireMessage m;
        m.type = static_cast<wire::MessageType>(std::uniform_int_distribution<int>(0, 6)(rng));
        m.id = std::to_string(i);
        if (coin(rng)) {
            m.name = text();
        }
        if (coin(rng)) {
            m.start_year = small(rng);
        }
        if (coin(rng)) {
            std::vector<double> v(static_cast<std::size_t>(std::uniform_int_distribution<int>(0, 25)(rng)));
            for (auto& x : v) {
                x = std::ldexp(std::uniform_real_distribution<double>(-1.0, 1.0)(rng), small(rng) / 3);
            }
            m.values = v;
        }
        if (coin(rng)) {
            m.horizon = small(rng);
        }
        if (coin(rng)) {
            m.tag = text();
        }
        if (coin(rng)) {
            m.message = text();
        }
        const auto line = wire::encode(m);
        if (line.find('\n') != std::string::npos) {
            o.require(false, "encoded message spans lines");
            continue;
        }
        const auto back = wire::decode(line);
        if (back == m && wire::encode(back) == line) {
            ++round_trips;
        }
    }
    o.require(round_trips == 1000, std::to_string(1000 - round_trips) + " fuzzed messages did not round-trip");
    if (o.pass) {
        o.detail = "handshake, batching, reordering, timeout and restart conform; 1000 fuzzed messages round-trip";
    }
    return o;
}

} // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"SMAPE oracle equivalence", smape_oracle},
        {"Wilcoxon exactness", wilcoxon_exactness},
        {"Lee-Carter recovery", lee_carter_recovery},
        {"AutoARIMA sanity", auto_arima_sanity},
        {"Holt exactness", holt_exactness},
        {"Random forest", random_forest},
        {"Leakage sentinel", leakage_sentinel},
        {"End-to-end synthetic run", end_to_end},
        {"Protocol conformance", protocol_conformance},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    }
    std::cout << criteria.size() - static_cast<std::size_t>(failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
