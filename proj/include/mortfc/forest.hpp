#pragma once

// Global autoregressive random forest: CART regression trees grown on
// bootstrap resamples of pooled lag windows, forecast recursively.

#include <algorithm>
#include <atomic>
#include <compare>
#include <cstdint>
#include <limits>
#include <optional>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mortfc/common.hpp"
#include "mortfc/hmd.hpp"

namespace mortfc {

/// Pooled training windows: `window` consecutive inputs and the next value as
/// target. Inputs are stored flat, row-major.
struct GlobalTrainingSet {
    int window = 16;
    std::vector<double> inputs;
    std::vector<double> targets;
    std::vector<SeriesKey> keys;
    std::vector<int> end_years; // calendar year of the target

    [[nodiscard]] std::size_t size() const { return targets.size(); }
    [[nodiscard]] std::span<const double> input(std::size_t i) const
    {
        return {inputs.data() + i * static_cast<std::size_t>(window), static_cast<std::size_t>(window)};
    }
    void add(std::span<const double> in, double target, SeriesKey key, int end_year)
    {
        inputs.insert(inputs.end(), in.begin(), in.end());
        targets.push_back(target);
        keys.push_back(std::move(key));
        end_years.push_back(end_year);
    }
};

struct ForestConfig {
    int n_trees = 100;
    int window = 16;
    double max_features = 1.0;
    int min_samples_leaf = 1;
    bool bootstrap = true;
    std::uint64_t seed = 42;
    unsigned threads = 0; // 0: hardware concurrency
};

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0; // leaf mean

    [[nodiscard]] bool is_leaf() const { return feature < 0; }
    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;

    [[nodiscard]] double predict(std::span<const double> x) const
    {
        int i = 0;
        while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
            const auto& n = nodes[static_cast<std::size_t>(i)];
            i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(i)].value;
    }
    friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

struct ForestModel {
    ForestConfig config;
    std::vector<RegressionTree> trees;
    std::uint64_t training_fingerprint = 0;

    /// Arithmetic mean of the tree predictions.
    [[nodiscard]] double predict(std::span<const double> x) const
    {
        double s = 0.0;
        for (const auto& t : trees) {
            s += t.predict(x);
        }
        return s / static_cast<double>(trees.size());
    }
};

namespace forest_detail {

/// Indices of the training windows in canonical (lexicographic) order, so a
/// permutation of the input yields the same forest.
inline std::vector<std::size_t> canonical_order(const GlobalTrainingSet& data)
{
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        auto xa = data.input(a);
        auto xb = data.input(b);
        auto c = std::lexicographical_compare_three_way(xa.begin(), xa.end(), xb.begin(), xb.end());
        if (c != 0) {
            return c < 0;
        }
        return data.targets[a] < data.targets[b];
    });
    return idx;
}

class TreeBuilder {
public:
    TreeBuilder(const GlobalTrainingSet& data, std::vector<std::size_t> rows, const ForestConfig& cfg, std::mt19937_64& rng)
        : data_(data), rows_(std::move(rows)), cfg_(cfg), rng_(rng), n_features_(data.window)
    {
        const std::size_t m = rows_.size();
        sorted_.resize(static_cast<std::size_t>(n_features_));
        for (int f = 0; f < n_features_; ++f) {
            auto& s = sorted_[static_cast<std::size_t>(f)];
            s.resize(m);
            std::iota(s.begin(), s.end(), std::uint32_t{0});
            std::stable_sort(s.begin(), s.end(), [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
        }
        goes_left_.assign(m, 0);
        scratch_.resize(m);
    }

    RegressionTree build()
    {
        RegressionTree tree;
        struct Task {
            std::size_t begin;
            std::size_t end;
            int node;
        };
        tree.nodes.emplace_back();
        std::vector<Task> stack{{0, rows_.size(), 0}};
        while (!stack.empty()) {
            Task t = stack.back();
            stack.pop_back();
            auto split = find_split(t.begin, t.end);
            if (!split) {
                tree.nodes[static_cast<std::size_t>(t.node)].value = node_mean(t.begin, t.end);
                continue;
            }
            std::size_t mid = partition(t.begin, t.end, split->feature, split->threshold);
            int left = static_cast<int>(tree.nodes.size());
            tree.nodes.emplace_back();
            int right = static_cast<int>(tree.nodes.size());
            tree.nodes.emplace_back();
            auto& n = tree.nodes[static_cast<std::size_t>(t.node)];
            n.feature = split->feature;
            n.threshold = split->threshold;
            n.left = left;
            n.right = right;
            stack.push_back({mid, t.end, right});
            stack.push_back({t.begin, mid, left});
        }
        return tree;
    }

private:
    struct Split {
        int feature;
        double threshold;
    };

    [[nodiscard]] double x(std::uint32_t row, int f) const { return data_.input(rows_[row])[static_cast<std::size_t>(f)]; }
    [[nodiscard]] double y(std::uint32_t row) const { return data_.targets[rows_[row]]; }

    [[nodiscard]] double node_mean(std::size_t b, std::size_t e) const
    {
        const auto& s = sorted_[0];
        double acc = 0.0;
        for (std::size_t i = b; i < e; ++i) {
            acc += y(s[i]);
        }
        return acc / static_cast<double>(e - b);
    }

    std::optional<Split> find_split(std::size_t b, std::size_t e)
    {
        const std::size_t n = e - b;
        const auto min_leaf = static_cast<std::size_t>(std::max(1, cfg_.min_samples_leaf));
        if (n < 2 || n < 2 * min_leaf) {
            return std::nullopt;
        }
        const auto& s0 = sorted_[0];
        double total = 0.0;
        bool pure = true;
        const double y0 = y(s0[b]);
        for (std::size_t i = b; i < e; ++i) {
            double v = y(s0[i]);
            total += v;
            pure = pure && v == y0;
        }
        if (pure) {
            return std::nullopt;
        }

        std::vector<int> features(static_cast<std::size_t>(n_features_));
        std::iota(features.begin(), features.end(), 0);
        if (cfg_.max_features < 1.0) {
            auto k = static_cast<std::size_t>(std::max(1, static_cast<int>(cfg_.max_features * n_features_)));
            for (std::size_t i = 0; i < k; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, features.size() - 1);
                std::swap(features[i], features[pick(rng_)]);
            }
            features.resize(k);
            std::sort(features.begin(), features.end());
        }

        const double parent = total * total / static_cast<double>(n);
        double best_gain = 0.0;
        std::optional<Split> best;
        for (int f : features) {
            const auto& s = sorted_[static_cast<std::size_t>(f)];
            double left_sum = 0.0;
            for (std::size_t i = b; i + 1 < e; ++i) {
                left_sum += y(s[i]);
                const std::size_t n_left = i - b + 1;
                const std::size_t n_right = n - n_left;
                if (n_left < min_leaf) {
                    continue;
                }
                if (n_right < min_leaf) {
                    break;
                }
                const double xv = x(s[i], f);
                const double xn = x(s[i + 1], f);
                if (!(xv < xn)) {
                    continue;
                }
                const double right_sum = total - left_sum;
                const double gain = left_sum * left_sum / static_cast<double>(n_left) + right_sum * right_sum / static_cast<double>(n_right) - parent;
                if (gain > best_gain) {
                    double thr = xv + (xn - xv) / 2.0;
                    if (!(thr < xn)) {
                        thr = xv;
                    }
                    best_gain = gain;
                    best = Split{f, thr};
                }
            }
        }
        return best;
    }

    /// Stable partition of every per-feature ordering; returns the boundary.
    std::size_t partition(std::size_t b, std::size_t e, int feature, double threshold)
    {
        const auto& sf = sorted_[static_cast<std::size_t>(feature)];
        std::size_t n_left = 0;
        for (std::size_t i = b; i < e; ++i) {
            bool left = x(sf[i], feature) <= threshold;
            goes_left_[sf[i]] = left ? 1 : 0;
            n_left += left ? 1 : 0;
        }
        for (auto& s : sorted_) {
            std::size_t li = b;
            std::size_t ri = 0;
            for (std::size_t i = b; i < e; ++i) {
                if (goes_left_[s[i]]) {
                    s[li++] = s[i];
                } else {
                    scratch_[ri++] = s[i];
                }
            }
            std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(ri), s.begin() + static_cast<std::ptrdiff_t>(li));
        }
        return b + n_left;
    }

    const GlobalTrainingSet& data_;
    std::vector<std::size_t> rows_;
    const ForestConfig& cfg_;
    std::mt19937_64& rng_;
    int n_features_;
    std::vector<std::vector<std::uint32_t>> sorted_;
    std::vector<char> goes_left_;
    std::vector<std::uint32_t> scratch_;
};

inline std::mt19937_64 tree_rng(std::uint64_t seed, int tree_index)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(tree_index)};
    return std::mt19937_64(seq);
}

} // namespace forest_detail

/// Order-independent hash of a training set.
inline std::uint64_t training_fingerprint(const GlobalTrainingSet& data)
{
    Fnv1a h;
    h.update(static_cast<std::int64_t>(data.window));
    for (std::size_t i : forest_detail::canonical_order(data)) {
        for (double v : data.input(i)) {
            h.update(v);
        }
        h.update(data.targets[i]);
    }
    return h.digest();
}

inline ForestModel train_forest(const GlobalTrainingSet& data, const ForestConfig& cfg)
{
    if (data.size() == 0) {
        throw PreconditionError("train_forest: empty training set");
    }
    if (cfg.n_trees < 1 || !(cfg.max_features > 0.0 && cfg.max_features <= 1.0) || cfg.window != data.window) {
        throw PreconditionError("train_forest: invalid forest configuration");
    }
    if (data.inputs.size() != data.size() * static_cast<std::size_t>(data.window)) {
        throw PreconditionError("train_forest: inconsistent window storage");
    }
    if (data.size() > std::numeric_limits<std::uint32_t>::max()) {
        throw PreconditionError("train_forest: too many windows");
    }

    const auto order = forest_detail::canonical_order(data);
    ForestModel model;
    model.config = cfg;
    model.training_fingerprint = training_fingerprint(data);
    model.trees.resize(static_cast<std::size_t>(cfg.n_trees));

    auto grow = [&](int t) {
        auto rng = forest_detail::tree_rng(cfg.seed, t);
        std::vector<std::size_t> rows(order.size());
        if (cfg.bootstrap) {
            std::uniform_int_distribution<std::size_t> pick(0, order.size() - 1);
            for (auto& r : rows) {
                r = order[pick(rng)];
            }
        } else {
            rows = order;
        }
        forest_detail::TreeBuilder builder(data, std::move(rows), cfg, rng);
        model.trees[static_cast<std::size_t>(t)] = builder.build();
    };

    unsigned threads = cfg.threads != 0 ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(cfg.n_trees));
    if (threads <= 1) {
        for (int t = 0; t < cfg.n_trees; ++t) {
            grow(t);
        }
    } else {
        std::atomic<int> next{0};
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < threads; ++w) {
            pool.emplace_back([&] {
                for (int t = next++; t < cfg.n_trees; t = next++) {
                    grow(t);
                }
            });
        }
    }
    return model;
}

/// Recursive multi-step forecast from the last `window` observations.
inline std::vector<double> forecast_forest(const ForestModel& model, std::span<const double> history, int horizon)
{
    const auto w = static_cast<std::size_t>(model.config.window);
    if (history.size() < w) {
        throw PreconditionError("forecast_forest: series shorter than the lag window");
    }
    std::vector<double> buf(history.end() - static_cast<std::ptrdiff_t>(w), history.end());
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(std::max(horizon, 0)));
    for (int h = 0; h < horizon; ++h) {
        double next = model.predict(std::span<const double>(buf.data() + buf.size() - w, w));
        out.push_back(next);
        buf.push_back(next);
    }
    return out;
}

inline std::uint64_t model_fingerprint(const ForestModel& m)
{
    Fnv1a h;
    h.update(static_cast<std::int64_t>(m.config.n_trees));
    h.update(static_cast<std::int64_t>(m.config.window));
    h.update(m.config.max_features);
    h.update(static_cast<std::int64_t>(m.config.min_samples_leaf));
    h.update(static_cast<std::int64_t>(m.config.bootstrap));
    h.update(static_cast<std::int64_t>(m.config.seed));
    h.update(static_cast<std::int64_t>(m.training_fingerprint));
    for (const auto& t : m.trees) {
        for (const auto& n : t.nodes) {
            h.update(static_cast<std::int64_t>(n.feature));
            h.update(n.threshold);
            h.update(static_cast<std::int64_t>(n.left));
            h.update(static_cast<std::int64_t>(n.right));
            h.update(n.value);
        }
    }
    return h.digest();
}

inline constexpr int kForestFormatVersion = 1;

inline void save_forest(std::ostream& out, const ForestModel& m)
{
    nlohmann::json j;
    j["format"] = "mortfc-forest";
    j["version"] = kForestFormatVersion;
    j["config"] = {{"n_trees", m.config.n_trees},
                   {"window", m.config.window},
                   {"max_features", m.config.max_features},
                   {"min_samples_leaf", m.config.min_samples_leaf},
                   {"bootstrap", m.config.bootstrap},
                   {"seed", m.config.seed}};
    j["training_fingerprint"] = hex64(m.training_fingerprint);
    auto& trees = j["trees"] = nlohmann::json::array();
    for (const auto& t : m.trees) {
        nlohmann::json jt;
        for (const auto& n : t.nodes) {
            jt["feature"].push_back(n.feature);
            jt["threshold"].push_back(n.threshold);
            jt["left"].push_back(n.left);
            jt["right"].push_back(n.right);
            jt["value"].push_back(n.value);
        }
        trees.push_back(std::move(jt));
    }
    out << j.dump() << '\n';
}

inline ForestModel load_forest(std::istream& in)
{
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("forest model: ") + e.what());
    }
    if (j.value("format", "") != "mortfc-forest" || j.value("version", 0) != kForestFormatVersion) {
        throw FormatError("forest model: unsupported format or version");
    }
    ForestModel m;
    const auto& c = j.at("config");
    m.config.n_trees = c.at("n_trees").get<int>();
    m.config.window = c.at("window").get<int>();
    m.config.max_features = c.at("max_features").get<double>();
    m.config.min_samples_leaf = c.at("min_samples_leaf").get<int>();
    m.config.bootstrap = c.at("bootstrap").get<bool>();
    m.config.seed = c.at("seed").get<std::uint64_t>();
    m.training_fingerprint = std::stoull(j.at("training_fingerprint").get<std::string>(), nullptr, 16);
    for (const auto& jt : j.at("trees")) {
        RegressionTree t;
        const auto& f = jt.at("feature");
        for (std::size_t i = 0; i < f.size(); ++i) {
            TreeNode n;
            n.feature = f[i].get<int>();
            n.threshold = jt.at("threshold")[i].get<double>();
            n.left = jt.at("left")[i].get<int>();
            n.right = jt.at("right")[i].get<int>();
            n.value = jt.at("value")[i].get<double>();
            t.nodes.push_back(n);
        }
        m.trees.push_back(std::move(t));
    }
    if (static_cast<int>(m.trees.size()) != m.config.n_trees) {
        throw FormatError("forest model: tree count does not match configuration");
    }
    return m;
}

} // namespace mortfc
