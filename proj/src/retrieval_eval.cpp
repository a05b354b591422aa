#include "cr/retrieval_eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "cr/error.hpp"
#include "cr/vecmath.hpp"

namespace cr {

CandidateIndex::CandidateIndex(std::vector<std::string> ids,
                               const std::vector<Vector>& embeddings)
    : ids_(std::move(ids)) {
    if (ids_.empty() || ids_.size() != embeddings.size())
        throw ShapeError("candidate index: need equally many ids and embeddings, at least 1");
    const Index d = embeddings.front().size();
    unit_rows_.resize(static_cast<Index>(ids_.size()), d);
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (embeddings[i].size() != d)
            throw ShapeError("candidate index: embedding " + std::to_string(i) +
                             " has length " + std::to_string(embeddings[i].size()) +
                             ", expected " + std::to_string(d));
        unit_rows_.row(static_cast<Index>(i)) = l2_normalize(embeddings[i]).transpose();
        if (!positions_.emplace(ids_[i], static_cast<Index>(i)).second)
            throw ValidationError("candidate index: duplicate id '" + ids_[i] + "'");
    }
}

bool CandidateIndex::contains(const std::string& id) const {
    return positions_.count(id) != 0;
}

Index CandidateIndex::position_of(const std::string& id) const {
    auto it = positions_.find(id);
    if (it == positions_.end())
        throw ValidationError("candidate index: unknown id '" + id + "'");
    return it->second;
}

Vector CandidateIndex::score_all(const Vector& q) const {
    if (q.size() != dim())
        throw ShapeError("score_all: query length " + std::to_string(q.size()) +
                         " against index dim " + std::to_string(dim()));
    return unit_rows_ * l2_normalize(q);
}

std::int64_t rank_of(const Vector& q, const CandidateIndex& index,
                     const std::string& target_id) {
    const Index t = index.position_of(target_id);
    const Vector scores = index.score_all(q);
    const double target_score = scores(t);
    return 1 + (scores.array() > target_score).count();
}

RankResult rank_with_top_k(const Vector& q, const CandidateIndex& index,
                           const std::string& target_id, std::size_t k,
                           const std::string& query_id) {
    const Index t = index.position_of(target_id);
    const Vector scores = index.score_all(q);
    RankResult result;
    result.query_id = query_id;
    result.rank = 1 + (scores.array() > scores(t)).count();
    std::vector<Index> order(static_cast<std::size_t>(index.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        if (scores(a) != scores(b)) return scores(a) > scores(b);
        if ((a == t) != (b == t)) return a == t;
        return a < b;
    });
    const std::size_t take = std::min(k, order.size());
    result.top_k.reserve(take);
    for (std::size_t i = 0; i < take; ++i)
        result.top_k.push_back({index.ids()[static_cast<std::size_t>(order[i])],
                                scores(order[i])});
    return result;
}

double recall_at_k(std::span<const std::int64_t> ranks, std::int64_t K) {
    if (ranks.empty()) throw ValidationError("recall_at_k: no ranks");
    if (K < 1) throw ValidationError("recall_at_k: K must be at least 1");
    std::int64_t hits = 0;
    for (std::int64_t r : ranks)
        if (r <= K) ++hits;
    return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double rmean(std::span<const double> values) {
    if (values.empty()) throw ValidationError("rmean: no values");
    double total = 0.0;
    for (double v : values) total += v;
    return total / static_cast<double>(values.size());
}

std::string format_metric(double percent) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", percent);
    return buf;
}

std::string MetricsReport::to_text() const {
    std::ostringstream out;
    out << "# metrics v1 ties=count-strictly-greater\n";
    for (const MetricRow& row : rows)
        out << row.split << "\tR@" << row.k << '\t' << format_metric(row.percent) << "\n";
    out << "Rmean\t" << format_metric(rmean_percent) << "\n";
    return std::move(out).str();
}

std::string MetricsReport::to_kv() const {
    std::ostringstream out;
    out << "# metrics_kv v1\n";
    out << "ties = count-strictly-greater\n";
    for (const MetricRow& row : rows)
        out << row.split << ".R@" << row.k << " = " << format_metric(row.percent) << "\n";
    out << "Rmean = " << format_metric(rmean_percent) << "\n";
    return std::move(out).str();
}

MetricsReport make_metrics_report(const std::string& split,
                                  std::span<const std::int64_t> ranks,
                                  std::span<const std::int64_t> ks) {
    if (ks.empty()) throw ValidationError("metrics report: no K values");
    MetricsReport report;
    std::vector<double> percents;
    for (std::int64_t k : ks) {
        const double percent = 100.0 * recall_at_k(ranks, k);
        report.rows.push_back({split, k, percent});
        percents.push_back(percent);
    }
    report.rmean_percent = rmean(percents);
    return report;
}

}  // namespace cr
