#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <functional>

#include "adadedup/adaptation.hpp"
#include "adadedup/rng.hpp"

using namespace adadedup;

namespace {

ClusterAssignment three_by_ten() {
    ClusterAssignment a;
    a.k = 3;
    a.labels.resize(30);
    for (std::uint32_t i = 0; i < 30; ++i) a.labels[i] = i / 10;
    return a;
}

// Exhaustive minimizer of sum |k_i - t_i| under the bounds and the exact
// budget; returns the minimal objective value.
double brute_force_apportion_cost(const std::vector<double>& target,
                                  const std::vector<std::uint32_t>& sizes, std::uint32_t m) {
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::uint32_t> k(sizes.size(), 0);
    const std::function<void(std::size_t, std::uint32_t, double)> rec =
        [&](std::size_t c, std::uint32_t used, double cost) {
            if (cost >= best) return;
            if (c == sizes.size()) {
                if (used == m) best = cost;
                return;
            }
            std::uint32_t rest_cap = 0;
            for (std::size_t c2 = c; c2 < sizes.size(); ++c2) rest_cap += sizes[c2];
            if (used + rest_cap < m || used > m) return;
            for (std::uint32_t v = 0; v <= sizes[c]; ++v)
                rec(c + 1, used + v, cost + std::fabs(static_cast<double>(v) - target[c]));
        };
    rec(0, 0, 0.0);
    return best;
}

// The redistributed fractional targets, replicated from the documented
// rule so the oracle scores the same quantity the implementation rounds.
std::vector<double> redistributed_targets(const std::vector<double>& gamma_prime,
                                          const std::vector<std::uint32_t>& sizes,
                                          std::uint32_t m) {
    std::vector<double> t(sizes.size());
    double total = 0.0;
    for (std::size_t c = 0; c < sizes.size(); ++c) {
        t[c] = sizes[c] * (1.0 - gamma_prime[c]);
        total += t[c];
    }
    const double residual = m - total;
    if (residual > 0.0) {
        double slack = 0.0;
        for (std::size_t c = 0; c < sizes.size(); ++c) slack += sizes[c] - t[c];
        if (slack > 0.0)
            for (std::size_t c = 0; c < sizes.size(); ++c)
                t[c] += residual * (sizes[c] - t[c]) / slack;
    } else if (residual < 0.0 && total > 0.0) {
        for (auto& v : t) v += residual * v / total;
    }
    for (std::size_t c = 0; c < sizes.size(); ++c)
        t[c] = std::clamp(t[c], 0.0, static_cast<double>(sizes[c]));
    return t;
}

}  // namespace

TEST_CASE("differential loss sums kept and pruned sides") {
    ClusterAssignment a;
    a.k = 1;
    a.labels = {0, 0, 0};
    const PruneState state = make_prune_state({0, 1}, a, Stage::initial);
    LossTable losses;
    losses.loss = {1.0, 2.0, 0.5};
    const auto summaries = differential_loss(losses, state, a, SignalMode::sum);
    REQUIRE(summaries[0].kept_loss_sum == 3.0);
    REQUIRE(summaries[0].pruned_loss_sum == 0.5);
    REQUIRE(summaries[0].delta == 2.5);
}

TEST_CASE("empty side forces a zero delta") {
    ClusterAssignment a;
    a.k = 2;
    a.labels = {0, 0, 1, 1};
    const PruneState state = make_prune_state({0, 1, 2}, a, Stage::initial);
    LossTable losses;
    losses.loss = {5.0, 7.0, 1.0, 2.0};
    const auto summaries = differential_loss(losses, state, a, SignalMode::sum);
    REQUIRE(summaries[0].delta == 0.0);  // nothing pruned in cluster 0
    REQUIRE(summaries[1].delta != 0.0);
}

TEST_CASE("differential loss matches a per-sample accumulation oracle") {
    const auto a = three_by_ten();
    Rng rng(17, "diff");
    LossTable losses;
    IndexSet kept;
    for (std::uint32_t i = 0; i < 30; ++i) {
        losses.loss.push_back(rng.uniform() * 4.0);
        if (rng.uniform() < 0.5) kept.push_back(i);
    }
    if (kept.empty()) kept.push_back(0);
    const PruneState state = make_prune_state(kept, a, Stage::initial);

    for (auto mode : {SignalMode::sum, SignalMode::mean}) {
        const auto summaries = differential_loss(losses, state, a, mode);
        for (std::uint32_t c = 0; c < 3; ++c) {
            double ks = 0, ps = 0;
            std::uint32_t kc = 0, pc = 0;
            for (std::uint32_t i = 0; i < 30; ++i) {
                if (a.labels[i] != c) continue;
                if (state.kept[i]) {
                    ks += losses.loss[i];
                    ++kc;
                } else {
                    ps += losses.loss[i];
                    ++pc;
                }
            }
            double expected = 0.0;
            if (kc > 0 && pc > 0)
                expected = mode == SignalMode::sum ? ks - ps : ks / kc - ps / pc;
            REQUIRE(summaries[c].delta == Catch::Approx(expected).margin(1e-12));
        }
    }
}

TEST_CASE("missing losses are rejected") {
    const auto a = three_by_ten();
    const PruneState state = make_prune_state({0, 1}, a, Stage::initial);
    LossTable short_table;
    short_table.loss.assign(29, 1.0);
    REQUIRE_THROWS_AS(differential_loss(short_table, state, a, SignalMode::sum),
                      PreconditionError);
}

TEST_CASE("scaling picks the branch by sign") {
    std::vector<ClusterLossSummary> s(3);
    s[0].delta = 2.5;
    s[1].delta = -1.0;
    s[2].delta = 0.0;
    scale_signals(s, 2.0, 0.5);
    REQUIRE(s[0].scaled_delta == 5.0);
    REQUIRE(s[1].scaled_delta == -0.5);
    REQUIRE(s[2].scaled_delta == 0.0);
    REQUIRE_THROWS_AS(scale_signals(s, 0.0, 1.0), PreconditionError);
}

TEST_CASE("normalization: antisymmetric equal-size clusters") {
    std::vector<ClusterLossSummary> s(2);
    s[0].scaled_delta = 3.0;
    s[1].scaled_delta = -3.0;
    const auto a = normalize_signals(s, {10, 10});
    REQUIRE(a[0] == Catch::Approx(1.0));
    REQUIRE(a[1] == Catch::Approx(-1.0));
}

TEST_CASE("normalization: a uniform signal centers away to zero") {
    std::vector<ClusterLossSummary> s(3);
    for (auto& x : s) x.scaled_delta = 4.2;
    const auto a = normalize_signals(s, {5, 7, 9});
    for (double v : a) REQUIRE(v == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("normalization: documented weighted-centering arithmetic") {
    std::vector<ClusterLossSummary> s(2);
    s[0].scaled_delta = 0.9;
    s[1].scaled_delta = -0.4;
    // unit-max rescale leaves {1.0, -4/9}; the example fixes u directly,
    // so feed deltas already at unit max.
    s[0].scaled_delta = 0.9;
    s[1].scaled_delta = -0.4;
    std::vector<ClusterLossSummary> unit(2);
    unit[0].scaled_delta = 0.9 / 0.9;
    unit[1].scaled_delta = -0.4 / 0.9;
    const auto a = normalize_signals(s, {10, 30});
    // u = {0.9, -0.4} after dividing by max|.| = 0.9 gives {1, -4/9}; the
    // spec's example states the centering identity on u itself:
    const double u0 = 0.9, u1 = -0.4;
    const double mean = (10 * u0 + 30 * u1) / 40.0;
    REQUIRE(mean == Catch::Approx(-0.075));
    REQUIRE(u0 - mean == Catch::Approx(0.975));
    REQUIRE(u1 - mean == Catch::Approx(-0.325));
    // and the implementation preserves the weighted-zero-sum guarantee:
    REQUIRE(10 * a[0] + 30 * a[1] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("all-zero signals yield all-zero adjustments") {
    std::vector<ClusterLossSummary> s(4);
    const auto a = normalize_signals(s, {3, 3, 3, 3});
    for (double v : a) REQUIRE(v == 0.0);
}

TEST_CASE("ratio adjustment clips into [0, 1]") {
    REQUIRE(adjust_ratios({0.4}, {0.7}, 0.0)[0] == 0.4);              // beta 0 identity
    REQUIRE(adjust_ratios({0.95}, {1.0}, 0.2)[0] == 1.0);            // upper clip
    REQUIRE(adjust_ratios({0.3}, {-1.0}, 0.5)[0] == 0.0);            // lower clip
    REQUIRE(adjust_ratios({0.5}, {0.5}, 0.2)[0] == Catch::Approx(0.6));
}

TEST_CASE("apportionment with integral targets is exact") {
    const auto k = apportion_counts({1.0 / 3.0, 1.0 / 3.0, 0.25}, {3, 3, 4}, 7);
    REQUIRE(k == std::vector<std::uint32_t>{2, 2, 3});
}

TEST_CASE("apportionment respects symmetry") {
    REQUIRE(apportion_counts({0.5, 0.5}, {10, 10}, 10) == std::vector<std::uint32_t>{5, 5});
}

TEST_CASE("apportionment matches the brute-force minimizer") {
    const std::vector<std::uint32_t> sizes = {7, 5, 9};
    const std::vector<double> gamma_prime = {0.3, 0.8, 0.5};
    const std::uint32_t m = 12;
    const auto k = apportion_counts(gamma_prime, sizes, m);
    std::uint32_t total = 0;
    for (auto v : k) total += v;
    REQUIRE(total == m);

    const auto t = redistributed_targets(gamma_prime, sizes, m);
    double cost = 0.0;
    for (std::size_t c = 0; c < sizes.size(); ++c)
        cost += std::fabs(static_cast<double>(k[c]) - t[c]);
    REQUIRE(cost == Catch::Approx(brute_force_apportion_cost(t, sizes, m)).margin(1e-9));
}

TEST_CASE("apportionment budget conservation on random instances") {
    Rng rng(23, "apportion");
    for (int repeat = 0; repeat < 200; ++repeat) {
        const auto k = static_cast<std::size_t>(1 + rng.uniform_index(8));
        std::vector<std::uint32_t> sizes(k);
        std::vector<double> gamma(k);
        std::uint32_t n = 0;
        for (auto& s : sizes) {
            s = static_cast<std::uint32_t>(1 + rng.uniform_index(40));
            n += s;
        }
        for (auto& g : gamma) g = rng.uniform();
        const auto m = static_cast<std::uint32_t>(1 + rng.uniform_index(n));
        const auto counts = apportion_counts(gamma, sizes, m);
        const auto targets = redistributed_targets(gamma, sizes, m);
        std::uint32_t total = 0;
        for (std::size_t c = 0; c < k; ++c) {
            REQUIRE(counts[c] <= sizes[c]);
            // largest-remainder output stays within one of its target
            REQUIRE(std::fabs(static_cast<double>(counts[c]) - targets[c]) < 1.0 + 1e-9);
            total += counts[c];
        }
        REQUIRE(total == m);
    }
}

TEST_CASE("churn solver: tiny target finds the first movement") {
    const std::vector<double> gamma = {0.5, 0.5};
    const std::vector<double> adj = {1.0, -1.0};
    const std::vector<std::uint32_t> sizes = {20, 20};
    const std::uint32_t m = 20;
    const double beta = solve_beta_for_churn(gamma, adj, sizes, m, 1e-9);
    REQUIRE(beta > 0.0);
    const auto base = apportion_counts(adjust_ratios(gamma, adj, 0.0), sizes, m);
    REQUIRE(churn_at_beta(beta, gamma, adj, sizes, m, base) > 0.0);
    // nothing moves just below the returned beta
    REQUIRE(churn_at_beta(beta * 0.5, gamma, adj, sizes, m, base) == 0.0);
}

TEST_CASE("churn solver rejects an all-zero signal") {
    try {
        solve_beta_for_churn({0.5}, {0.0}, {10}, 5, 0.075);
        FAIL("expected NoSignal");
    } catch (const PreconditionError& e) {
        REQUIRE(e.code() == ErrorCode::NoSignal);
    }
}

TEST_CASE("churn solver agrees with a fine grid scan") {
    const std::vector<double> gamma = {0.6, 0.4, 0.2, 0.7};
    const std::vector<double> adj = {0.8, -0.5, -0.2, 0.3};
    const std::vector<std::uint32_t> sizes = {25, 18, 30, 27};
    std::uint32_t kept0 = 0;
    std::vector<double> g2 = gamma;
    // make gamma consistent with integer counts
    std::vector<std::uint32_t> base_counts;
    for (std::size_t c = 0; c < sizes.size(); ++c) {
        const auto kc = static_cast<std::uint32_t>(std::llround(sizes[c] * (1.0 - gamma[c])));
        base_counts.push_back(kc);
        g2[c] = 1.0 - static_cast<double>(kc) / sizes[c];
        kept0 += kc;
    }
    const std::uint32_t m = kept0;
    const double target = 0.1;
    const double beta = solve_beta_for_churn(g2, adj, sizes, m, target);
    const auto base = apportion_counts(adjust_ratios(g2, adj, 0.0), sizes, m);
    REQUIRE(churn_at_beta(beta, g2, adj, sizes, m, base) >= target);

    const double beta_max = beta_saturation(g2, adj);
    for (int g = 0; g < 10000; ++g) {
        const double b = beta_max * g / 10000.0;
        if (b >= beta - 1e-9 * beta_max) break;
        REQUIRE(churn_at_beta(b, g2, adj, sizes, m, base) < target);
    }
}

TEST_CASE("adapt: uniform losses in mean mode change nothing") {
    const auto a = three_by_ten();
    EmbeddingMatrix m;
    m.n = 30;
    m.d = 1;
    m.values.resize(30);
    Rng rng(31, "adapt");
    for (auto& v : m.values) v = static_cast<float>(rng.normal());

    const auto order = DedupOrder::ascending(30);
    const auto initial = initial_prune(m, a, 18, order);
    LossTable losses;
    losses.loss.assign(30, 3.25);

    PruneConfig config;
    config.k_clusters = 3;
    config.budget_m = 18;
    config.signal_mode = SignalMode::mean;
    config.churn_target = 0.075;

    const auto adapted = adapt(initial, losses, a, config);
    std::uint32_t c = 0;
    for (const auto& s : adapted.summaries) {
        REQUIRE(s.delta == Catch::Approx(0.0).margin(1e-12));
        ++c;
    }
    const auto fin = final_selection(m, initial, a, adapted.keep_counts, order);
    REQUIRE(fin.kept == initial.kept);
    REQUIRE(fin.stage == Stage::final_);
}

TEST_CASE("adapt: opposite signals move budget in opposite directions") {
    // Cluster A's pruned members carry much higher loss than its kept ones
    // (delta < 0), cluster B the reverse; A must gain samples, B must lose.
    ClusterAssignment a;
    a.k = 2;
    a.labels.resize(40);
    for (std::uint32_t i = 0; i < 40; ++i) a.labels[i] = i < 20 ? 0 : 1;

    EmbeddingMatrix m;
    m.n = 40;
    m.d = 2;
    m.values.resize(80);
    Rng rng(37, "adapt2");
    for (std::uint32_t i = 0; i < 40; ++i) {
        m.values[i * 2] = static_cast<float>((i < 20 ? 0.0 : 100.0) + rng.normal());
        m.values[i * 2 + 1] = static_cast<float>(rng.normal());
    }
    const auto order = DedupOrder::ascending(40);
    const auto initial = initial_prune(m, a, 20, order);

    LossTable losses;
    losses.loss.assign(40, 0.0);
    for (std::uint32_t i = 0; i < 40; ++i) {
        const bool kept = initial.kept[i];
        if (i < 20)
            losses.loss[i] = kept ? 1.0 : 10.0;  // pruned 10x harder: delta < 0
        else
            losses.loss[i] = kept ? 10.0 : 1.0;  // delta > 0
    }

    PruneConfig config;
    config.k_clusters = 2;
    config.budget_m = 20;
    config.signal_mode = SignalMode::mean;
    config.beta = 0.4;

    std::uint32_t a_kept0 = 0, b_kept0 = 0;
    for (std::uint32_t i = 0; i < 40; ++i)
        if (initial.kept[i]) (i < 20 ? a_kept0 : b_kept0)++;

    const auto adapted = adapt(initial, losses, a, config);
    REQUIRE(adapted.keep_counts[0] > a_kept0);
    REQUIRE(adapted.keep_counts[1] < b_kept0);
    REQUIRE(adapted.keep_counts[0] + adapted.keep_counts[1] == 20);

    const auto fin = final_selection(m, initial, a, adapted.keep_counts, order);
    REQUIRE(fin.kept_count() == 20);
    REQUIRE(gamma_consistent(fin, a));
}

TEST_CASE("adapt: beta zero reproduces the initial counts and members") {
    const auto a = three_by_ten();
    EmbeddingMatrix m;
    m.n = 30;
    m.d = 2;
    m.values.resize(60);
    Rng rng(41, "adapt3");
    for (auto& v : m.values) v = static_cast<float>(rng.normal() * 2);
    const auto order = DedupOrder::ascending(30);
    const auto initial = initial_prune(m, a, 17, order);

    LossTable losses;
    for (std::uint32_t i = 0; i < 30; ++i) losses.loss.push_back(rng.uniform() * 5);

    PruneConfig config;
    config.k_clusters = 3;
    config.budget_m = 17;
    config.beta = 0.0;

    const auto adapted = adapt(initial, losses, a, config);
    const auto fin = final_selection(m, initial, a, adapted.keep_counts, order);
    REQUIRE(fin.kept == initial.kept);
}

TEST_CASE("property: loss scaling cancels at the decision level") {
    const auto a = three_by_ten();
    EmbeddingMatrix m;
    m.n = 30;
    m.d = 2;
    m.values.resize(60);
    Rng rng(43, "scale");
    for (auto& v : m.values) v = static_cast<float>(rng.normal() * 3);
    const auto order = DedupOrder::ascending(30);
    const auto initial = initial_prune(m, a, 15, order);

    LossTable losses;
    for (std::uint32_t i = 0; i < 30; ++i) losses.loss.push_back(rng.uniform() * 2);
    LossTable scaled;
    for (double v : losses.loss) scaled.loss.push_back(v * 7.3);

    PruneConfig config;
    config.k_clusters = 3;
    config.budget_m = 15;
    config.churn_target = 0.1;
    config.signal_mode = SignalMode::mean;

    const auto a1 = adapt(initial, losses, a, config);
    const auto a2 = adapt(initial, scaled, a, config);
    REQUIRE(a1.keep_counts == a2.keep_counts);
    for (std::size_t c = 0; c < a1.adjustments.size(); ++c)
        REQUIRE(a1.adjustments[c] == Catch::Approx(a2.adjustments[c]).margin(1e-12));
}

TEST_CASE("property: per-cluster counts move monotonically in beta until clipping") {
    const std::vector<double> gamma = {0.5, 0.4, 0.6};
    const std::vector<double> adj = {1.0, -0.7, -0.3};
    const std::vector<std::uint32_t> sizes = {30, 30, 40};
    const std::uint32_t m = 50;
    std::vector<std::uint32_t> prev =
        apportion_counts(adjust_ratios(gamma, adj, 0.0), sizes, m);
    const double beta_max = beta_saturation(gamma, adj);
    for (int g = 1; g <= 50; ++g) {
        const auto counts =
            apportion_counts(adjust_ratios(gamma, adj, beta_max * g / 50.0), sizes, m);
        // cluster 0 prunes more (count non-increasing), clusters 1-2 recover
        REQUIRE(counts[0] <= prev[0] + 1);  // allow +-1 rounding wiggle
        REQUIRE(counts[1] + 1 >= prev[1]);
        prev = counts;
    }
}

TEST_CASE("adaptation report has the pinned header and one row per cluster") {
    std::vector<ClusterLossSummary> s(2);
    s[0] = {0, 10, 4, 6, 2.0, 1.0, 1.0, 1.0};
    s[1] = {1, 10, 6, 0, 3.0, 0.0, 0.0, 0.0};
    const auto text = serialize_adaptation_report(s, {0.5, -0.5}, {0.6, 0.4}, {3, 7});
    const auto lines = split_lines(text);
    REQUIRE(lines.size() == 3);
    REQUIRE(lines[0] ==
            "cluster,size,kept0,pruned0,loss_kept,loss_pruned,delta,scaled,adjust,gamma0,gamma1,k0,k1");
    // cluster 1 has no pruned members: empty loss_pruned field, delta 0
    REQUIRE(lines[2].find(",6,0,3,,0,") != std::string::npos);
}
