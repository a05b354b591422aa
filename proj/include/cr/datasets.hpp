#ifndef CR_DATASETS_HPP
#define CR_DATASETS_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cr/types.hpp"

namespace cr {

/**
 * Binary feature table: magic "CREMB001", count and dim as unsigned 32-bit
 * little-endian, then row-major 64-bit little-endian reals. Ids live in a
 * sidecar text file, one per line after a "# ids v1" header, same order.
 */
struct EmbeddingTable {
    std::vector<std::string> ids;
    Matrix values;

    Index count() const { return values.rows(); }
    Index dim() const { return values.cols(); }
    // -1 when absent.
    Index find(const std::string& id) const;
    Vector row_by_id(const std::string& id) const;
    void validate() const;
};

void write_embedding_table(const std::string& bin_path, const std::string& ids_path,
                           const EmbeddingTable& table);
EmbeddingTable read_embedding_table(const std::string& bin_path,
                                    const std::string& ids_path);

// Records keep ids only; feature vectors resolve through the tables.
struct PairRecord {
    std::string id, image_id, text_id;
};
struct AttributeRecord {
    std::string id, image_id;
    std::vector<Index> attributes;
};
struct TripletRecord {
    std::string id, reference_id, text_id, target_id;
};
struct SplitSpec {
    std::string name;
    std::vector<std::string> ids;
};

// Fully resolved views.
struct PairExample {
    std::string id;
    Vector image_features, text_features;
};
struct AttributeExample {
    std::string id;
    Vector image_features;
    std::vector<Index> attributes;
};
struct TripletExample {
    std::string id;
    Vector reference_features, text_features;
    std::string target_id;
};

// Tab-separated text formats, one "# <kind> v1 ..." header line each.
// Malformed records reject the whole load with a line number.
void write_pairs(const std::string& path, const std::vector<PairRecord>& pairs);
std::vector<PairRecord> read_pairs(const std::string& path);
void write_attributes(const std::string& path, const std::vector<AttributeRecord>& records,
                      Index num_attributes);
std::pair<std::vector<AttributeRecord>, Index> read_attributes(const std::string& path);
void write_triplets(const std::string& path, const std::vector<TripletRecord>& triplets);
std::vector<TripletRecord> read_triplets(const std::string& path);
void write_split(const std::string& path, const SplitSpec& split);
SplitSpec read_split(const std::string& path);
void write_cases(const std::string& path, const std::map<std::string, std::string>& cases);
std::map<std::string, std::string> read_cases(const std::string& path);

/**
 * One corpus directory:
 *   images.bin/images.ids   raw image features per item
 *   texts.bin/texts.ids     raw text features per text id
 *   pairs.tsv               image-text pairs
 *   attributes.tsv          attribute examples
 *   triplets_train.tsv      training triplets
 *   triplets_eval.tsv       held-out triplets
 *   split.tsv               full candidate pool
 *   split_val.tsv           smaller evaluation pool
 *   cases.tsv               triplet id -> modality-balance tag (optional)
 */
struct Corpus {
    EmbeddingTable images;
    EmbeddingTable texts;
    Index num_attributes = 0;
    std::vector<PairRecord> pairs;
    std::vector<AttributeRecord> attributes;
    std::vector<TripletRecord> triplets_train;
    std::vector<TripletRecord> triplets_eval;
    SplitSpec split_full;
    SplitSpec split_val;
    // delta | full_text | no_text per triplet id; empty when cases.tsv absent.
    std::map<std::string, std::string> triplet_case;

    PairExample resolve(const PairRecord& rec) const;
    AttributeExample resolve(const AttributeRecord& rec) const;
    TripletExample resolve(const TripletRecord& rec) const;
};

void write_corpus(const std::string& dir, const Corpus& corpus);
// Cross-validates every id reference and every attribute index; any failure
// rejects the load.
Corpus load_corpus(const std::string& dir);

struct SynthConfig {
    Index d_attr = 12;
    Index clusters = 100;
    Index flips = 2;
    Index num_pairs = 400;
    Index num_attr_examples = 400;
    Index num_triplets_train = 500;
    Index num_triplets_eval = 100;
    double eval_cluster_fraction = 0.2;
    double noise_sigma = 0.05;
    double text_noise_sigma = 0.02;
    // Text modes: delta carries only the reference-to-target change,
    // full_text carries the whole target attribute vector, no_text carries
    // noise alone.
    double mix_delta = 0.6;
    double mix_full = 0.2;
    double mix_zero = 0.2;
    std::uint64_t seed = 1;

    void validate() const;
};

// Case tags used in cases.tsv.
inline constexpr const char* kCaseDelta = "delta";
inline constexpr const char* kCaseFullText = "full_text";
inline constexpr const char* kCaseNoText = "no_text";

/**
 * Seeded synthetic corpus built from attribute clusters. Each cluster holds
 * a base item, a target at `flips` attribute flips from the base, and (for
 * flips >= 2) a one-flip confounder, so image-only similarity cannot
 * separate target from confounder and delta-only text requires composition.
 */
Corpus synth_generate(const SynthConfig& config);

}  // namespace cr

#endif
