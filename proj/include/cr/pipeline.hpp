#ifndef CR_PIPELINE_HPP
#define CR_PIPELINE_HPP

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cr/composers.hpp"
#include "cr/datasets.hpp"
#include "cr/encoders.hpp"
#include "cr/losses.hpp"
#include "cr/pseudo_weights.hpp"
#include "cr/retrieval_eval.hpp"

namespace cr {

struct Provenance {
    // In application order, e.g. "stage1:pairs", "stage2", "stage3:adaptive".
    std::vector<std::string> stages;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> config_digests;
    // Component tags whose parameters have been trained; tensors in these
    // components step at the pretrained learning rate in later stages.
    std::set<std::string> pretrained;
};

// Component tags used in Provenance::pretrained.
inline constexpr const char* kTagImageEncoder = "image_encoder";
inline constexpr const char* kTagTextEncoder = "text_encoder";
inline constexpr const char* kTagAttrHead = "attr_head";
inline constexpr const char* kTagComposer = "composer";
inline constexpr const char* kTagTau1 = "loss.tau1_log";
inline constexpr const char* kTagTau2 = "loss.tau2_log";

struct TrainedModel {
    EncoderParams image_encoder;
    EncoderParams text_encoder;
    std::optional<AttributeHead> attr_head;
    Composer composer;
    double tau1_log = 0.0;
    double tau2_log = 0.0;
    Provenance provenance;
};

// <prefix>.ckpt holds the tensors, <prefix>.meta the shapes-independent
// metadata (composer kind, activations, provenance). load(save(m)) followed
// by another save writes bit-identical files.
void save_model(const std::string& prefix, const TrainedModel& model);
TrainedModel load_model(const std::string& prefix);

struct Stage1Config {
    // random | pairs | checkpoint
    std::string source = "pairs";
    std::string checkpoint_prefix;
    Index hidden_dim = 128;
    Index joint_dim = 64;
    Index iterations = 300;
    int batch_size = 32;
    double lr = 1e-4;
    double tau_init = 0.07;
    std::uint64_t seed = 1;
    std::string config_digest = "none";
};

struct Stage2Config {
    Index iterations = 2000;
    int batch_size = 32;
    double lr_pretrained = 1e-6;
    double lr_scratch = 1e-4;
    // Alternation ratio pair-alignment : attribute batches.
    int mix_pair = 1;
    int mix_attr = 1;
    Reduction bce_reduction = Reduction::sum;
    std::uint64_t seed = 2;
    std::string config_digest = "none";
};

struct Stage3Config {
    ComposerKind composer = ComposerKind::mean;
    Index iterations = 500;
    int batch_size = 32;
    double lr_pretrained = 1e-6;
    double lr_scratch = 1e-4;
    double lambda = 0.5;
    Reduction kl_reduction = Reduction::mean;
    bool freeze_encoders = false;
    std::uint64_t seed = 3;
    std::string config_digest = "none";
};

/**
 * Builds the starting model. Sources: "random" draws fresh encoders,
 * "pairs" additionally aligns them contrastively on the corpus pair data,
 * "checkpoint" loads a saved model unchanged. The corpus supplies feature
 * dimensions and is required unless the source is "checkpoint".
 */
TrainedModel init_stage1(const Corpus* corpus, const Stage1Config& config,
                         std::string* log);

// Alternating pair-alignment and attribute-prediction training. Creates the
// attribute head on entry when absent. Zero iterations returns the model
// bit-for-bit unchanged.
TrainedModel run_stage2(TrainedModel model, const Corpus& corpus,
                        const Stage2Config& config, std::string* log);

// Composed-retrieval fine-tuning on triplets. Installs a freshly
// initialized composer of the configured kind, then trains it (plus the
// encoders unless frozen, plus the second temperature) contrastively; the
// adaptive composer with lambda > 0 additionally distills the pseudo-label
// table, which must cover every training triplet.
TrainedModel run_stage3(TrainedModel model, const Corpus& corpus,
                        const PseudoLabelTable* labels, const Stage3Config& config,
                        std::string* log);

struct BaselineModels {
    TrainedModel image_only;
    TrainedModel text_only;
    TrainedModel fusion;
};

// Three identically scheduled stage-3 runs from the same starting model,
// differing only in composer (image_only / text_only / mean).
BaselineModels train_baselines(const TrainedModel& base, const Corpus& corpus,
                               const Stage3Config& config, std::string* log);

struct PseudoLabelGenResult {
    PseudoLabelTable table;
    // Triplet ids whose target is absent from the pool, skipped and reported.
    std::vector<std::string> skipped;
};

// Ranks every triplet's target under the three baseline models over one
// shared candidate pool and converts the rank triples into pseudo labels.
// The fusion model must use mean pooling. Output is sorted by triplet id.
PseudoLabelGenResult generate_pseudo_labels(const Corpus& corpus,
                                            std::span<const TripletRecord> triplets,
                                            const TrainedModel& image_model,
                                            const TrainedModel& text_model,
                                            const TrainedModel& fusion_model,
                                            const SplitSpec& pool, double tau3);

// Encodes the split once, composes each query triplet, and reports R@K for
// every K plus Rmean.
MetricsReport evaluate(const TrainedModel& model, const Corpus& corpus,
                       std::span<const TripletRecord> queries, const SplitSpec& split,
                       std::span<const std::int64_t> ks);

// Predicted importance weights for one triplet (adaptive composer only).
PseudoWeight predict_weights(const TrainedModel& model, const TripletExample& triplet);

}  // namespace cr

#endif
