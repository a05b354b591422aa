#ifndef CR_PSEUDO_WEIGHTS_HPP
#define CR_PSEUDO_WEIGHTS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "cr/types.hpp"

namespace cr {

// Two-component distribution over {image, text} importance. Serves both the
// rank-derived labels and the predicted weights.
struct PseudoWeight {
    double w_image = 0.5;
    double w_text = 0.5;
};

// 1-based ranks of the ground-truth target under the image-only, text-only,
// and fusion baseline models, over a pool of N candidates.
struct RankTriple {
    std::int64_t r_image = 1;
    std::int64_t r_text = 1;
    std::int64_t r_fuse = 1;
    std::int64_t N = 1;

    void validate() const;
};

// (r/N)^-1 = N/r. Best rank gives the largest score.
double inverse_norm_rank(std::int64_t r, std::int64_t N);

// softmax(tau3 * [s_image/s_fuse, s_text/s_fuse]) with the s values from
// inverse_norm_rank.
PseudoWeight pseudo_weight(const RankTriple& ranks, double tau3);

struct PseudoLabelRecord {
    std::string triplet_id;
    PseudoWeight w;
};

struct PseudoLabelTable {
    double tau3 = 4.0;
    std::int64_t N = 1;
    std::vector<PseudoLabelRecord> records;

    // Returns nullptr when the id is absent.
    const PseudoWeight* find(const std::string& triplet_id) const;
};

// Tab-separated text: header "# pseudo_labels v1 tau3=<v> N=<v>", then one
// "id<TAB>w_image<TAB>w_text" line per record with 9-significant-digit
// values. write -> read -> write is byte-identical.
void write_pseudo_labels(const std::string& path, const PseudoLabelTable& table);
PseudoLabelTable read_pseudo_labels(const std::string& path);

// printf "%.9g"; the one formatter used for label values and config reals.
std::string format_sig9(double x);

}  // namespace cr

#endif
