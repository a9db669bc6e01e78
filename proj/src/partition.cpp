#include "fracspec/partition.hpp"

#include "fracspec/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

namespace fracspec::partition {

using counting::CountResult;

SpectrumBounds estimate_spectral_radius(const linalg::ShiftedFactorizer& factorizer, double tol,
                                        int max_iters, std::uint64_t seed) {
    const auto& pencil = factorizer.pencil();
    const std::size_t n = pencil.n();
    if (n == 0)
        throw InvalidArgument("empty pencil");
    const auto mass = factorizer.factor_mass();

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.5, 1.5);
    linalg::Vector x(n), kx(n), mx(n);
    for (double& v : x)
        v = unif(rng);

    SpectrumBounds out;
    double previous = 0.0;
    for (int it = 1; it <= max_iters; ++it) {
        pencil.stiffness().multiply(x, kx);
        pencil.mass().multiply(x, mx);
        const double theta = linalg::dot(x, kx) / linalg::dot(x, mx);
        out.estimate = theta;
        out.iterations = it;
        if (it > 1 && std::abs(theta - previous) < tol * std::abs(theta)) {
            out.converged = true;
            break;
        }
        out.converged = false;
        previous = theta;
        mass.solve_in_place(kx);
        pencil.mass().multiply(kx, mx);
        const double nrm = std::sqrt(std::abs(linalg::dot(kx, mx)));
        if (!(nrm > 0.0))
            break;
        for (std::size_t i = 0; i < n; ++i)
            x[i] = kx[i] / nrm;
    }
    out.margin = out.converged ? 1.1 : 1.5;
    out.lo = 0.0;
    out.hi = out.estimate > 0.0 ? out.estimate * out.margin : 1.0;
    return out;
}

std::size_t PartitionPlan::max_load() const {
    return counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
}

std::size_t PartitionPlan::min_load() const {
    return counts.empty() ? 0 : *std::min_element(counts.begin(), counts.end());
}

double PartitionPlan::ideal_load() const {
    return counts.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(counts.size());
}

void RefinementParams::validate() const {
    if (n_a < 0 || n_b < 0 || n_c < 1)
        throw InvalidArgument("refinement iteration counts must be nonnegative (n_c >= 1)");
    if (!(imbalance_threshold > 0.0 && imbalance_threshold < 1.0))
        throw InvalidArgument("imbalance threshold must lie in (0, 1)");
}

namespace {

// Cumulative counts G_i = #{theta >= splits[i]}.
std::vector<std::size_t> geq_counts(const PartitionPlan& plan) {
    std::vector<std::size_t> g(plan.splits.size());
    g.back() = plan.above;
    for (std::size_t i = plan.counts.size(); i-- > 0;)
        g[i] = g[i + 1] + plan.counts[i];
    return g;
}

void add_stats(RoundStats& into, const RoundStats& before, const RoundStats& after) {
    into.rounds += after.rounds - before.rounds;
    into.factorizations += after.factorizations - before.factorizations;
}

struct Search {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t geq_lo = 0;
    std::size_t target = 0;
    // Current bracket.
    double a = 0.0;
    double b = 0.0;
    // Best visited split.
    double best = 0.0;
    std::size_t best_left = 0;
    int steps = 0;
    bool done = false;

    void consider(double split, std::size_t left) {
        const auto dist = [&](std::size_t v) { return v > target ? v - target : target - v; };
        if (dist(left) < dist(best_left)) {
            best = split;
            best_left = left;
        }
        if (left == target)
            done = true;
    }
};

Search make_search(double lo, double hi, std::size_t geq_lo, std::size_t geq_hi,
                   std::size_t target) {
    Search s;
    s.lo = s.a = lo;
    s.hi = s.b = hi;
    s.geq_lo = geq_lo;
    const std::size_t total = geq_lo - geq_hi;
    s.target = std::min(target, total);
    s.best = lo;
    s.best_left = 0;
    s.done = s.target == 0;
    s.consider(hi, total);
    return s;
}

// Advances all searches in lockstep: one concurrent counting round per step.
void run_searches(std::vector<Search>& searches, int n_c, InertiaCounter& counter) {
    for (int step = 0; step < n_c; ++step) {
        std::vector<std::size_t> active;
        std::vector<double> mids;
        for (std::size_t i = 0; i < searches.size(); ++i) {
            if (searches[i].done)
                continue;
            active.push_back(i);
            mids.push_back(0.5 * (searches[i].a + searches[i].b));
        }
        if (active.empty())
            return;
        const auto results = counter.count_round(mids);
        for (std::size_t j = 0; j < active.size(); ++j) {
            Search& s = searches[active[j]];
            const CountResult& r = results[j];
            const double x = r.shift;
            const std::size_t left = s.geq_lo >= r.count ? s.geq_lo - r.count : 0;
            ++s.steps;
            if (x > s.lo && x < s.hi)
                s.consider(x, left);
            if (s.done)
                continue;
            if (left < s.target)
                s.a = x;
            else
                s.b = x;
            if (!(s.b > s.a))
                s.done = true;
        }
    }
}

PartitionPlan from_geq(std::vector<double> splits, const std::vector<std::size_t>& geq) {
    PartitionPlan plan;
    plan.splits = std::move(splits);
    plan.counts.resize(plan.splits.size() - 1);
    for (std::size_t i = 0; i + 1 < plan.splits.size(); ++i) {
        if (geq[i] < geq[i + 1])
            throw Error("inertia counts are not monotone in the shift");
        plan.counts[i] = geq[i] - geq[i + 1];
    }
    plan.total = geq.front() - geq.back();
    plan.above = geq.back();
    return plan;
}

double edge_padding(const SpectrumBounds& bounds) {
    return 1e-8 * std::max(std::abs(bounds.hi), std::abs(bounds.lo));
}

void check_slices(std::size_t slices) {
    if (slices < 1)
        throw InvalidArgument("number of slices must be at least 1");
}

} // namespace

PartitionPlan partition_uniform(const SpectrumBounds& bounds, std::size_t slices,
                                InertiaCounter& counter) {
    check_slices(slices);
    if (!(bounds.hi > bounds.lo))
        throw InvalidArgument("spectrum bounds must satisfy lo < hi");
    const RoundStats before = counter.stats();
    const double eps = edge_padding(bounds);
    std::vector<double> shifts(slices + 1);
    shifts.front() = bounds.lo - eps;
    shifts.back() = bounds.hi + eps;
    for (std::size_t k = 1; k < slices; ++k)
        shifts[k] = bounds.lo + (bounds.hi - bounds.lo) * static_cast<double>(k) / static_cast<double>(slices);
    const auto results = counter.count_round(shifts);
    std::vector<std::size_t> geq(results.size());
    for (std::size_t i = 0; i < results.size(); ++i) {
        shifts[i] = results[i].shift;
        geq[i] = results[i].count;
    }
    PartitionPlan plan = from_geq(std::move(shifts), geq);
    add_stats(plan.stats, before, counter.stats());
    return plan;
}

SplitResult binary_search_split(InertiaCounter& counter, double lo, double hi,
                                std::size_t target_left, int n_c) {
    if (!(lo < hi))
        throw InvalidArgument("binary_search_split requires lo < hi");
    const double ends[2] = {lo, hi};
    const auto r = counter.count_round(ends);
    if (target_left > r[0].count - r[1].count)
        throw InvalidArgument("target exceeds the number of eigenvalues in the interval");
    std::vector<Search> s{make_search(r[0].shift, r[1].shift, r[0].count, r[1].count, target_left)};
    run_searches(s, n_c, counter);
    return {s[0].best, s[0].best_left, s[0].steps};
}

PartitionPlan partition_tree(const SpectrumBounds& bounds, std::size_t slices, int n_c,
                             InertiaCounter& counter) {
    check_slices(slices);
    const RoundStats before = counter.stats();
    const double eps = edge_padding(bounds);
    const double ends[2] = {bounds.lo - eps, bounds.hi + eps};
    const auto r = counter.count_round(ends);

    struct Node {
        double lo, hi;
        std::size_t geq_lo, geq_hi, parts;
    };
    std::vector<Node> nodes{{r[0].shift, r[1].shift, r[0].count, r[1].count, slices}};
    for (;;) {
        std::vector<std::size_t> split_nodes;
        std::vector<Search> searches;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const Node& nd = nodes[i];
            if (nd.parts < 2)
                continue;
            const std::size_t total = nd.geq_lo - nd.geq_hi;
            const std::size_t left_parts = nd.parts / 2;
            const std::size_t target = static_cast<std::size_t>(std::llround(
                static_cast<double>(total) * static_cast<double>(left_parts) / static_cast<double>(nd.parts)));
            split_nodes.push_back(i);
            searches.push_back(make_search(nd.lo, nd.hi, nd.geq_lo, nd.geq_hi, target));
        }
        if (searches.empty())
            break;
        run_searches(searches, n_c, counter);
        std::vector<Node> next;
        std::size_t k = 0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const Node& nd = nodes[i];
            if (k < split_nodes.size() && split_nodes[k] == i) {
                const Search& s = searches[k++];
                const std::size_t geq_mid = nd.geq_lo - s.best_left;
                const std::size_t left_parts = nd.parts / 2;
                next.push_back({nd.lo, s.best, nd.geq_lo, geq_mid, left_parts});
                next.push_back({s.best, nd.hi, geq_mid, nd.geq_hi, nd.parts - left_parts});
            } else {
                next.push_back(nd);
            }
        }
        nodes = std::move(next);
    }

    std::vector<double> splits{nodes.front().lo};
    std::vector<std::size_t> geq{nodes.front().geq_lo};
    for (const Node& nd : nodes) {
        splits.push_back(nd.hi);
        geq.push_back(nd.geq_hi);
    }
    PartitionPlan plan = from_geq(std::move(splits), geq);
    add_stats(plan.stats, before, counter.stats());
    return plan;
}

PartitionPlan refine_global(const PartitionPlan& plan, int n_a, InertiaCounter& counter) {
    PartitionPlan best = plan;
    PartitionPlan current = plan;
    const std::size_t p = plan.slices();
    if (p < 2 || plan.total == 0)
        return best;
    const RoundStats before = counter.stats();
    const auto geq0 = geq_counts(plan);
    for (int it = 0; it < n_a; ++it) {
        // Piecewise-constant density over the current slices; invert its CDF.
        std::vector<double> proposal(p - 1);
        std::size_t slice = 0;
        double cumulative = 0.0;
        for (std::size_t k = 1; k < p; ++k) {
            const double q = static_cast<double>(current.total) * static_cast<double>(k) / static_cast<double>(p);
            while (slice + 1 < p && cumulative + static_cast<double>(current.counts[slice]) < q) {
                cumulative += static_cast<double>(current.counts[slice]);
                ++slice;
            }
            const double c = static_cast<double>(current.counts[slice]);
            const double frac = c > 0.0 ? std::clamp((q - cumulative) / c, 0.0, 1.0) : 0.0;
            proposal[k - 1] = current.splits[slice] + frac * (current.splits[slice + 1] - current.splits[slice]);
        }
        if (std::equal(proposal.begin(), proposal.end(), current.splits.begin() + 1))
            break;
        const auto results = counter.count_round(proposal);
        std::vector<double> splits{plan.splits.front()};
        std::vector<std::size_t> geq{geq0.front()};
        for (const auto& r : results) {
            splits.push_back(r.shift);
            geq.push_back(r.count);
        }
        splits.push_back(plan.splits.back());
        geq.push_back(geq0.back());
        if (!std::is_sorted(splits.begin(), splits.end()))
            break;
        current = from_geq(std::move(splits), geq);
        if (current.max_load() < best.max_load())
            best = current;
    }
    best.stats = plan.stats;
    add_stats(best.stats, before, counter.stats());
    best.merged = plan.merged;
    return best;
}

PartitionPlan refine_local(const PartitionPlan& plan, int n_b, int n_c, double threshold,
                           InertiaCounter& counter) {
    PartitionPlan out = plan;
    const std::size_t p = plan.slices();
    if (p < 2)
        return out;
    const RoundStats before = counter.stats();
    for (int pass = 0; pass < n_b; ++pass) {
        bool touched = false;
        for (std::size_t parity = 0; parity < 2; ++parity) {
            const auto geq = geq_counts(out);
            std::vector<std::size_t> pairs;
            std::vector<Search> searches;
            for (std::size_t i = parity; i + 1 < p; i += 2) {
                const double ci = static_cast<double>(out.counts[i]);
                const double cj = static_cast<double>(out.counts[i + 1]);
                if (!(std::abs(ci - cj) > threshold * (ci + cj)))
                    continue;
                Search s = make_search(out.splits[i], out.splits[i + 2], geq[i], geq[i + 2],
                                       (out.counts[i] + out.counts[i + 1]) / 2);
                s.consider(out.splits[i + 1], out.counts[i]);
                pairs.push_back(i);
                searches.push_back(s);
            }
            if (searches.empty())
                continue;
            touched = true;
            run_searches(searches, n_c, counter);
            for (std::size_t k = 0; k < pairs.size(); ++k) {
                const std::size_t i = pairs[k];
                const Search& s = searches[k];
                const std::size_t pair_total = out.counts[i] + out.counts[i + 1];
                // Endpoints of the pair would collapse a slice; keep the old split then.
                if (!(s.best > out.splits[i] && s.best < out.splits[i + 2]))
                    continue;
                out.splits[i + 1] = s.best;
                out.counts[i] = s.best_left;
                out.counts[i + 1] = pair_total - s.best_left;
            }
        }
        if (!touched)
            break;
    }
    add_stats(out.stats, before, counter.stats());
    return out;
}

PartitionPlan merge_empty_slices(PartitionPlan plan) {
    PartitionPlan out;
    out.total = plan.total;
    out.above = plan.above;
    out.stats = plan.stats;
    out.merged = plan.merged;
    out.splits.push_back(plan.splits.front());
    for (std::size_t i = 0; i < plan.counts.size(); ++i) {
        if (plan.counts[i] > 0) {
            out.splits.push_back(plan.splits[i + 1]);
            out.counts.push_back(plan.counts[i]);
        } else {
            out.merged = true;
            if (!out.counts.empty())
                out.splits.back() = plan.splits[i + 1];
        }
    }
    if (out.counts.empty()) {
        // Nothing to merge into: keep a single empty slice over the whole range.
        out.splits = {plan.splits.front(), plan.splits.back()};
        out.counts = {0};
    }
    return out;
}

PartitionPlan partition(const SpectrumBounds& bounds, std::size_t slices,
                        const RefinementParams& params, InertiaCounter& counter) {
    params.validate();
    check_slices(slices);
    const RoundStats before = counter.stats();
    SpectrumBounds b = bounds;
    PartitionPlan plan = partition_uniform(b, slices, counter);
    // An underestimated radius leaves eigenvalues above the last split.
    for (int widen = 0; plan.above > 0 && widen < 8; ++widen) {
        b.hi *= 2.0;
        plan = partition_uniform(b, slices, counter);
    }
    if (plan.above > 0)
        throw Error("spectral bounds do not enclose the spectrum");
    if (plan.total == 0)
        throw EmptySpectrum();
    if (params.n_a > 0)
        plan = refine_global(plan, params.n_a - 1, counter);
    plan = refine_local(plan, params.n_b, params.n_c, params.imbalance_threshold, counter);

    std::size_t sum = 0;
    for (std::size_t c : plan.counts)
        sum += c;
    if (sum != plan.total)
        throw Error("partition counts do not add up to the total");
    for (std::size_t i = 0; i + 1 < plan.splits.size(); ++i)
        if (!(plan.splits[i] < plan.splits[i + 1]))
            throw Error("partition splits are not strictly increasing");
    plan = merge_empty_slices(std::move(plan));
    plan.stats = {};
    add_stats(plan.stats, before, counter.stats());
    return plan;
}

void write_plan(std::ostream& out, const PartitionPlan& plan) {
    char buf[96];
    for (std::size_t i = 0; i < plan.counts.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g %zu\n", plan.splits[i], plan.splits[i + 1],
                      plan.counts[i]);
        out << buf;
    }
}

PartitionPlan read_plan(std::istream& in) {
    PartitionPlan plan;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#')
            continue;
        std::istringstream ls(line);
        double lo = 0.0, hi = 0.0;
        long long count = -1;
        if (!(ls >> lo >> hi >> count) || count < 0 || !(lo < hi))
            throw InvalidArgument("malformed plan line: '" + line + "'");
        if (plan.splits.empty())
            plan.splits.push_back(lo);
        else if (plan.splits.back() != lo)
            throw InvalidArgument("plan slices are not contiguous");
        plan.splits.push_back(hi);
        plan.counts.push_back(static_cast<std::size_t>(count));
        plan.total += static_cast<std::size_t>(count);
    }
    if (plan.counts.empty())
        throw InvalidArgument("plan has no slices");
    return plan;
}

void save_plan(const std::string& path, const PartitionPlan& plan) {
    std::ofstream out(path);
    if (!out)
        throw InvalidArgument("cannot write plan file '" + path + "'");
    write_plan(out, plan);
}

PartitionPlan load_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw InvalidArgument("cannot open plan file '" + path + "'");
    return read_plan(in);
}

} // namespace fracspec::partition
