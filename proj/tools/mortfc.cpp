// mortfc command-line tool: ingest, backtest, future, report, synth.
//
// Exit codes: 0 success, 2 usage or data error, 3 some cells or methods failed.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "mortfc/mortfc.hpp"

namespace fs = std::filesystem;
using namespace mortfc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitPartial = 3;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string utc_timestamp()
{
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

template <typename Fn>
void write_file(const fs::path& path, Fn&& fn)
{
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    fn(out);
    if (!out) {
        throw DataError("error writing " + path.string());
    }
}

std::vector<int> parse_int_list(const std::string& s, const char* what)
{
    std::vector<int> out;
    for (const auto& f : split(s, ',')) {
        auto v = parse_int(trim(f));
        if (!v) {
            throw UsageError(std::string("invalid ") + what + " '" + f + "'");
        }
        out.push_back(static_cast<int>(*v));
    }
    return out;
}

std::vector<std::string> parse_name_list(const std::string& s)
{
    std::vector<std::string> out;
    for (const auto& f : split(s, ',')) {
        auto t = std::string(trim(f));
        if (!t.empty()) {
            out.push_back(t);
        }
    }
    return out;
}

void write_manifest(const fs::path& dir, const RunManifest& m)
{
    write_file(dir / "manifest.json", [&](std::ostream& out) { out << m.to_json().dump(2) << '\n'; });
}

// --- ingest ---------------------------------------------------------------------

struct IngestOptions {
    std::string hmd_dir;
    std::string out;
    bool deterministic = false;
};

int cmd_ingest(const IngestOptions& o)
{
    auto corpus = load_corpus(o.hmd_dir);
    fs::create_directories(o.out);
    RunManifest m;
    m.command = "ingest";
    m.corpus_fingerprint = hex64(corpus_fingerprint(corpus));
    m.created = o.deterministic ? "" : utc_timestamp();
    const auto hash = m.hash();
    write_file(fs::path(o.out) / "corpus.csv", [&](std::ostream& out) {
        out << "# manifest=" << hash << '\n';
        write_corpus_csv(out, corpus);
    });
    write_file(fs::path(o.out) / "countries.csv", [&](std::ostream& out) {
        out << "# manifest=" << hash << '\n' << "country,first_year,last_year,years\n";
        for (const auto& s : corpus) {
            out << s.country() << ',' << s.first_year() << ',' << s.last_year() << ',' << s.n_years() << '\n';
        }
    });
    write_manifest(o.out, m);
    std::cout << "country  first  last  years\n";
    for (const auto& s : corpus) {
        std::cout << std::left << std::setw(9) << s.country() << std::setw(7) << s.first_year() << std::setw(6) << s.last_year() << s.n_years() << '\n';
    }
    std::cout << corpus.size() << " countries written to " << o.out << '\n';
    return kExitOk;
}

// --- backtest / future ----------------------------------------------------------

struct RunOptions {
    std::string corpus;
    std::string methods;
    std::string horizons;
    std::string adapters;
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    bool deterministic = false;
};

int cmd_run(const RunOptions& o, bool backtest)
{
    RunConfig cfg;
    if (!o.config.empty()) {
        cfg = read_run_config(o.config);
    }
    if (!o.methods.empty()) {
        cfg.methods = parse_name_list(o.methods);
    }
    if (!o.horizons.empty()) {
        cfg.horizons = parse_int_list(o.horizons, "horizon");
    }
    if (o.seed) {
        cfg.seed = *o.seed;
    }
    if (o.threads) {
        cfg.threads = *o.threads;
    }
    if (!o.adapters.empty()) {
        cfg.adapters = o.adapters;
    } else if (cfg.adapters.empty()) {
        if (const char* env = std::getenv("MORTFC_ADAPTERS"); env != nullptr && *env != '\0') {
            cfg.adapters = env;
        }
    }
    cfg.work_dir = o.out;
    cfg.validate();

    std::unique_ptr<AdapterPool> pool;
    if (!cfg.adapters.empty()) {
        pool = std::make_unique<AdapterPool>(read_adapter_registry(cfg.adapters));
    }
    auto methods = make_forecasters(cfg.methods, cfg, pool.get());
    auto corpus = load_corpus_any(o.corpus);

    fs::create_directories(o.out);
    RunManifest m;
    m.command = backtest ? "backtest" : "future";
    m.config = cfg.to_json();
    m.corpus_fingerprint = hex64(corpus_fingerprint(corpus));
    m.methods = cfg.methods;
    m.seed = cfg.seed;
    m.created = o.deterministic ? "" : utc_timestamp();
    const auto hash = m.hash();

    auto res = backtest ? run_backtest(corpus, methods, cfg) : run_future(corpus, methods, cfg);

    write_file(fs::path(o.out) / "records.csv", [&](std::ostream& out) { write_records_csv(out, res.records, hash); });
    write_file(fs::path(o.out) / "failures.csv", [&](std::ostream& out) {
        out << "# manifest=" << hash << '\n';
        write_failures_csv(out, res.failures);
    });
    write_file(fs::path(o.out) / "skipped.csv", [&](std::ostream& out) {
        out << "# manifest=" << hash << '\n' << "country,age,horizon,reason\n";
        for (const auto& s : res.skipped) {
            out << s.key.country << ',' << s.key.age << ',' << s.horizon << ',' << s.reason << '\n';
        }
    });
    write_manifest(o.out, m);

    for (const auto& w : res.warnings) {
        std::cerr << "warning: " << w << '\n';
    }
    for (const auto& [name, msg] : res.method_errors) {
        std::cerr << "method " << name << ": " << msg << '\n';
    }
    std::cout << res.records.size() << " records, " << res.failures.size() << " failed cells, " << res.skipped.size() << " skipped series -> " << o.out
              << '\n';
    return res.partial() ? kExitPartial : kExitOk;
}

// --- report -------------------------------------------------------------------------

struct ReportOptions {
    std::string records;
    std::string future_records;
    std::string by = "method";
    bool significance = false;
    std::string plots;
    std::string country;
    std::string ages = "25,50,75";
    std::optional<int> horizon;
    std::string income_map;
    std::string corpus;
    std::string config;
    std::string out;
    double alpha = 0.05;
    double threshold = 5.0;
    bool deterministic = false;
};

Grouping parse_grouping(const std::string& s)
{
    if (s == "method") {
        return Grouping::Method;
    }
    if (s == "age") {
        return Grouping::Age;
    }
    if (s == "income") {
        return Grouping::Income;
    }
    if (s == "length") {
        return Grouping::Length;
    }
    throw UsageError("unknown grouping '" + s + "' (method|age|income|length)");
}

std::vector<ForecastRecord> load_records(const std::string& path, std::string* manifest_hash)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open records " + path);
    }
    auto h = read_manifest_hash(in);
    if (manifest_hash != nullptr) {
        *manifest_hash = h;
    }
    return read_records_csv(in);
}

int cmd_report(const ReportOptions& o)
{
    double smape_factor = 200.0;
    if (!o.config.empty()) {
        smape_factor = read_run_config(o.config).smape_factor;
    }
    std::string source_hash;
    auto records = load_records(o.records, &source_hash);
    if (records.empty()) {
        throw DataError("no records in " + o.records);
    }
    std::vector<ForecastRecord> future;
    if (!o.future_records.empty()) {
        future = load_records(o.future_records, nullptr);
    }
    std::vector<Grouping> groupings;
    std::vector<std::string> grouping_names = parse_name_list(o.by);
    for (const auto& g : grouping_names) {
        groupings.push_back(parse_grouping(g));
    }
    std::vector<std::string> plots = parse_name_list(o.plots);
    for (const auto& p : plots) {
        if (p != "boxplot" && p != "heatmap" && p != "trajectories") {
            throw UsageError("unknown plot '" + p + "' (boxplot|heatmap|trajectories)");
        }
    }
    auto wants = [&](const char* p) { return std::find(plots.begin(), plots.end(), p) != plots.end(); };

    GroupingConfig gc;
    std::map<std::string, int> lengths;
    if (!o.corpus.empty()) {
        for (const auto& s : load_corpus_any(o.corpus)) {
            lengths[s.country()] = s.n_years();
        }
    }
    std::map<std::string, std::string> income;
    if (!o.income_map.empty()) {
        std::ifstream in(o.income_map);
        if (!in) {
            throw DataError("cannot open income map " + o.income_map);
        }
        income = read_income_map(in);
    }
    for (auto g : groupings) {
        if (g == Grouping::Income && income.empty()) {
            throw DataError("--by income needs --income-map");
        }
        if (g == Grouping::Length && lengths.empty()) {
            throw DataError("--by length needs --corpus for per-country history lengths");
        }
    }
    gc = GroupingConfig::from_lengths(lengths, income);

    RunManifest m;
    m.command = "report";
    m.config = {{"source_manifest", source_hash}, {"by", grouping_names}, {"significance", o.significance}, {"plots", plots},
                {"smape_factor", smape_factor}, {"alpha", o.alpha}, {"practical_threshold", o.threshold}};
    m.created = o.deterministic ? "" : utc_timestamp();
    const auto hash = m.hash();
    const std::string stamp = m.created;
    const fs::path out_dir(o.out);
    fs::create_directories(out_dir);

    auto evals = evaluate_records(records, smape_factor);
    if (evals.empty()) {
        throw DataError("records carry no actuals to score");
    }
    write_file(out_dir / "evaluation.csv", [&](std::ostream& out) { write_eval_csv(out, evals, hash); });
    auto summary = summary_table(evals);
    write_file(out_dir / "summary.csv", [&](std::ostream& out) { write_summary_csv(out, summary, hash); });

    std::map<std::string, std::vector<GroupedRow>> grouped;
    for (std::size_t i = 0; i < groupings.size(); ++i) {
        auto rows = grouped_medians(evals, groupings[i], gc);
        std::string comment;
        if (groupings[i] == Grouping::Length) {
            const auto& b = gc.length_bounds;
            comment = "length_bounds=Q1<" + std::to_string(b[0]) + ",Q2<" + std::to_string(b[1]) + ",Q3<" + std::to_string(b[2]) + ",Q4>=" +
                      std::to_string(b[2]);
            std::cout << "length quartiles: " << comment.substr(14) << '\n';
        }
        write_file(out_dir / ("grouped_" + grouping_names[i] + ".csv"), [&](std::ostream& out) { write_grouped_csv(out, rows, hash, comment); });
        grouped[grouping_names[i]] = std::move(rows);
    }

    if (o.significance) {
        std::set<std::string> methods;
        for (const auto& e : evals) {
            methods.insert(e.method);
        }
        if (methods.size() < 2) {
            std::cerr << "warning: significance needs at least two methods; table is empty\n";
        }
        auto tests = pairwise_tests(evals);
        auto table = significance_table(tests, {o.alpha, o.threshold});
        write_file(out_dir / "pairwise_tests.csv", [&](std::ostream& out) { write_significance_csv(out, tests, hash); });
        write_file(out_dir / "significance.csv", [&](std::ostream& out) { write_significance_csv(out, table, hash); });
        write_file(out_dir / "significance.txt", [&](std::ostream& out) { out << "# manifest=" << hash << '\n' << format_significance_text(table); });
    }

    if (wants("boxplot")) {
        auto data = boxplot_data(evals);
        write_file(out_dir / "boxplot.csv", [&](std::ostream& out) { write_boxplot_csv(out, data, hash); });
        for (const auto& [h, boxes] : data) {
            write_file(out_dir / ("boxplot_h" + std::to_string(h) + ".svg"), [&](std::ostream& out) { write_boxplot_svg(out, h, boxes, hash, stamp); });
        }
    }
    if (wants("heatmap")) {
        if (grouped.empty()) {
            throw UsageError("heatmap needs --by");
        }
        std::set<int> horizons;
        for (const auto& e : evals) {
            horizons.insert(e.horizon);
        }
        for (std::size_t i = 0; i < groupings.size(); ++i) {
            for (int h : horizons) {
                write_file(out_dir / ("heatmap_" + grouping_names[i] + "_h" + std::to_string(h) + ".svg"), [&](std::ostream& out) {
                    write_heatmap_svg(out, h, grouping_names[i], grouped[grouping_names[i]], GroupingConfig::group_order(groupings[i]), hash, stamp);
                });
            }
        }
    }
    if (wants("trajectories")) {
        if (o.country.empty()) {
            throw UsageError("trajectories need --country");
        }
        int h = o.horizon.value_or(0);
        if (h == 0) {
            for (const auto& r : records) {
                h = std::max(h, r.horizon);
            }
        }
        auto panels = trajectory_data(records, future, o.country, parse_int_list(o.ages, "age"), h);
        const auto stem = "trajectories_" + o.country + "_h" + std::to_string(h);
        write_file(out_dir / (stem + ".csv"), [&](std::ostream& out) { write_trajectory_csv(out, o.country, panels, hash); });
        write_file(out_dir / (stem + ".svg"), [&](std::ostream& out) { write_trajectory_svg(out, o.country, h, panels, hash, stamp); });
    }
    write_manifest(out_dir, m);

    std::cout << "horizon  method                     mean   median      std      n\n";
    for (const auto& r : summary) {
        std::cout << std::left << std::setw(9) << r.horizon << std::setw(22) << r.method << std::right << std::setw(9) << format_fixed(r.mean, 2)
                  << std::setw(9) << format_fixed(r.median, 2) << std::setw(9) << format_fixed(r.std, 2) << std::setw(7) << r.n << '\n';
    }
    return kExitOk;
}

// --- synth --------------------------------------------------------------------------

int cmd_synth(const std::string& out_dir)
{
    fs::create_directories(out_dir);
    for (const auto& spec : bundled_synthetic_specs()) {
        auto s = synthetic_surface(spec);
        write_file(fs::path(out_dir) / (spec.country + ".bltper_1x1.txt"), [&](std::ostream& out) { write_life_table(out, s); });
    }
    std::cout << "wrote " << bundled_synthetic_specs().size() << " synthetic life tables to " << out_dir << '\n';
    return kExitOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Mortality forecasting benchmark"};
    app.require_subcommand(1);
    app.footer("Exit codes: 0 success, 2 usage or data error, 3 partial failure.\n"
               "Adapter registry: --adapters or the MORTFC_ADAPTERS environment variable.\n"
               "records.csv columns: method,country,age,horizon,step,year,predicted,actual");

    IngestOptions io;
    auto* ingest = app.add_subcommand("ingest", "Parse HMD 1x1 life tables into corpus.csv");
    ingest->add_option("--hmd-dir", io.hmd_dir, "Directory of life-table files")->required();
    ingest->add_option("--out", io.out, "Output directory")->required();
    ingest->add_flag("--deterministic", io.deterministic, "Omit timestamps");

    RunOptions ro;
    auto add_run = [&](CLI::App* c) {
        c->add_option("--corpus", ro.corpus, "Corpus CSV or directory of life tables")->required();
        c->add_option("--methods", ro.methods, "Comma-separated method names");
        c->add_option("--horizons", ro.horizons, "Comma-separated horizons (default 5,10,20)");
        c->add_option("--adapters", ro.adapters, "Adapter registry JSON");
        c->add_option("--config", ro.config, "Run config JSON");
        c->add_option("--seed", ro.seed, "Random seed");
        c->add_option("--threads", ro.threads, "Worker threads (0: all cores)");
        c->add_option("--out", ro.out, "Output directory")->required();
        c->add_flag("--deterministic", ro.deterministic, "Omit timestamps");
    };
    auto* backtest = app.add_subcommand("backtest", "Forecast the held-out last years of every series");
    add_run(backtest);
    auto* future = app.add_subcommand("future", "Forecast past the end of every series");
    add_run(future);

    ReportOptions rp;
    auto* report = app.add_subcommand("report", "Score records and write tables and figures");
    report->add_option("--records", rp.records, "Backtest records.csv")->required();
    report->add_option("--future-records", rp.future_records, "Future records.csv for trajectory plots");
    report->add_option("--by", rp.by, "Groupings: method,age,income,length");
    report->add_flag("--significance", rp.significance, "Pairwise Wilcoxon tests");
    report->add_option("--plots", rp.plots, "boxplot,heatmap,trajectories");
    report->add_option("--country", rp.country, "Country for trajectory plots");
    report->add_option("--ages", rp.ages, "Ages for trajectory plots");
    report->add_option("--horizon", rp.horizon, "Horizon for trajectory plots (default: largest)");
    report->add_option("--income-map", rp.income_map, "CSV country,income");
    report->add_option("--corpus", rp.corpus, "Corpus for history-length quartiles");
    report->add_option("--config", rp.config, "Run config JSON (smape_factor)");
    report->add_option("--alpha", rp.alpha, "Significance level");
    report->add_option("--threshold", rp.threshold, "Practical threshold in SMAPE points");
    report->add_option("--out", rp.out, "Output directory")->required();
    report->add_flag("--deterministic", rp.deterministic, "Omit timestamps");

    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "Write the bundled synthetic life tables");
    synth->add_option("--out", synth_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (ingest->parsed()) {
            return cmd_ingest(io);
        }
        if (backtest->parsed()) {
            return cmd_run(ro, true);
        }
        if (future->parsed()) {
            return cmd_run(ro, false);
        }
        if (report->parsed()) {
            return cmd_report(rp);
        }
        if (synth->parsed()) {
            return cmd_synth(synth_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
