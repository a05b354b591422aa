#ifndef CR_RETRIEVAL_EVAL_HPP
#define CR_RETRIEVAL_EVAL_HPP

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cr/types.hpp"

namespace cr {

/**
 * Immutable pool of candidate embeddings scored exhaustively by cosine
 * similarity. Rows are stored unit-norm so scoring one query is a single
 * matrix-vector product.
 */
class CandidateIndex {
public:
    CandidateIndex(std::vector<std::string> ids, const std::vector<Vector>& embeddings);

    Index size() const { return unit_rows_.rows(); }
    Index dim() const { return unit_rows_.cols(); }
    const std::vector<std::string>& ids() const { return ids_; }
    bool contains(const std::string& id) const;
    Index position_of(const std::string& id) const;

    // score[i] = cosine similarity of q against candidate i.
    Vector score_all(const Vector& q) const;

private:
    std::vector<std::string> ids_;
    std::unordered_map<std::string, Index> positions_;
    Matrix unit_rows_;
};

struct ScoredCandidate {
    std::string id;
    double score;
};

struct RankResult {
    std::string query_id;
    std::int64_t rank = 0;
    std::vector<ScoredCandidate> top_k;
};

// 1 + number of candidates scoring strictly above the target; exact ties
// never penalize the target.
std::int64_t rank_of(const Vector& q, const CandidateIndex& index,
                     const std::string& target_id);

// Rank plus the k best candidates in descending score order; the target
// sorts above equal-scored candidates, remaining ties break by index order.
RankResult rank_with_top_k(const Vector& q, const CandidateIndex& index,
                           const std::string& target_id, std::size_t k,
                           const std::string& query_id);

// Fraction of ranks <= K.
double recall_at_k(std::span<const std::int64_t> ranks, std::int64_t K);

// Arithmetic mean; operates on the already-percent-scaled recall values.
double rmean(std::span<const double> values);

// Two-decimal fixed formatting used by every metric report.
std::string format_metric(double percent);

struct MetricRow {
    std::string split;
    std::int64_t k = 0;
    double percent = 0.0;
};

struct MetricsReport {
    std::vector<MetricRow> rows;
    double rmean_percent = 0.0;

    // "# metrics v1 ..." header, one "split<TAB>R@K<TAB>value" line per row,
    // final "Rmean<TAB>value" line.
    std::string to_text() const;
    // The same content as a key = value document.
    std::string to_kv() const;
};

MetricsReport make_metrics_report(const std::string& split,
                                  std::span<const std::int64_t> ranks,
                                  std::span<const std::int64_t> ks);

}  // namespace cr

#endif
