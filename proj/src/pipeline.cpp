#include "cr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "cr/checkpoint.hpp"
#include "cr/config.hpp"
#include "cr/error.hpp"
#include "cr/io.hpp"
#include "cr/optimizer.hpp"
#include "cr/rng.hpp"
#include "cr/tape.hpp"

namespace cr {
namespace {

void append_log(std::string* log, const std::string& line) {
    if (log == nullptr) return;
    log->append(line);
    log->push_back('\n');
}

// One flattened parameter tensor scheduled for optimizer updates this step.
// data/size alias the model's own storage; leaf is the tape node whose
// gradient drives the update.
struct Binding {
    std::string name;
    double* data;
    Index size;
    NodeId leaf;
    bool pretrained;
};

BoundEncoder bind_encoder_tracked(Tape& tape, EncoderParams& enc, const std::string& prefix,
                                  bool pretrained, bool track, std::vector<Binding>& out) {
    BoundEncoder bound;
    bound.layers.reserve(enc.layers.size());
    for (std::size_t i = 0; i < enc.layers.size(); ++i) {
        Layer& layer = enc.layers[i];
        BoundLayer bl{tape.leaf(layer.W), tape.leaf(layer.b), layer.act};
        if (track) {
            const std::string base = prefix + ".layer" + std::to_string(i) + ".";
            out.push_back({base + "W", layer.W.data(), layer.W.size(), bl.W, pretrained});
            out.push_back({base + "b", layer.b.data(), layer.b.size(), bl.b, pretrained});
        }
        bound.layers.push_back(bl);
    }
    return bound;
}

BoundAttributeHead bind_attr_head_tracked(Tape& tape, AttributeHead& head, bool pretrained,
                                          std::vector<Binding>& out) {
    BoundAttributeHead bound{tape.leaf(head.W), tape.leaf(head.b)};
    out.push_back({"attr_head.W", head.W.data(), head.W.size(), bound.W, pretrained});
    out.push_back({"attr_head.b", head.b.data(), head.b.size(), bound.b, pretrained});
    return bound;
}

NodeId bind_scalar_tracked(Tape& tape, double* value, const std::string& name, bool pretrained,
                           std::vector<Binding>& out) {
    const NodeId id = tape.leaf(Vector{Vector::Constant(1, *value)});
    out.push_back({name, value, 1, id, pretrained});
    return id;
}

BoundComposer bind_composer_tracked(Tape& tape, Composer& composer, bool pretrained,
                                    std::vector<Binding>& out) {
    composer.validate();
    BoundComposer bound;
    bound.kind = composer.kind;
    switch (composer.kind) {
        case ComposerKind::image_only:
        case ComposerKind::text_only:
        case ComposerKind::mean:
            break;
        case ComposerKind::concat_mlp:
            bound.mlp = bind_encoder_tracked(tape, *composer.mlp, "composer.mlp", pretrained,
                                             true, out);
            break;
        case ComposerKind::residual_gating: {
            ResidualGatingParams& g = *composer.gating;
            bound.gate_W = tape.leaf(g.gate_W);
            bound.gate_b = tape.leaf(g.gate_b);
            bound.res_W = tape.leaf(g.res_W);
            bound.res_b = tape.leaf(g.res_b);
            out.push_back({"composer.gate.W", g.gate_W.data(), g.gate_W.size(), *bound.gate_W,
                           pretrained});
            out.push_back({"composer.gate.b", g.gate_b.data(), g.gate_b.size(), *bound.gate_b,
                           pretrained});
            out.push_back({"composer.res.W", g.res_W.data(), g.res_W.size(), *bound.res_W,
                           pretrained});
            out.push_back({"composer.res.b", g.res_b.data(), g.res_b.size(), *bound.res_b,
                           pretrained});
            break;
        }
        case ComposerKind::adaptive: {
            AdaptiveComposerParams& a = *composer.adaptive;
            bound.adaptive_W = tape.leaf(a.W);
            bound.adaptive_b = tape.leaf(a.b);
            out.push_back({"composer.adaptive.W", a.W.data(), a.W.size(), *bound.adaptive_W,
                           pretrained});
            out.push_back({"composer.adaptive.b", a.b.data(), a.b.size(), *bound.adaptive_b,
                           pretrained});
            break;
        }
    }
    return bound;
}

void apply_steps(AdamOptimizer& adam, const Tape& tape, const std::vector<Binding>& binds,
                 double lr_pretrained, double lr_scratch) {
    for (const Binding& b : binds) {
        Eigen::Map<Vector> param(b.data, b.size);
        adam.step(b.name, b.pretrained ? lr_pretrained : lr_scratch, tape.grad(b.leaf), param);
    }
}

bool tagged(const Provenance& prov, const char* tag) {
    return prov.pretrained.count(tag) != 0;
}

std::vector<std::size_t> sample_batch(Rng& rng, std::size_t n, int batch_size) {
    const std::size_t want = static_cast<std::size_t>(batch_size);
    return rng.sample_without_replacement(n, std::min(n, want));
}

void check_encoder_dims(const TrainedModel& model, const Corpus& corpus, const char* stage) {
    model.image_encoder.validate();
    model.text_encoder.validate();
    if (model.image_encoder.input_dim() != corpus.images.dim())
        throw ShapeError(std::string(stage) + ": image encoder expects dim " +
                         std::to_string(model.image_encoder.input_dim()) + ", corpus has " +
                         std::to_string(corpus.images.dim()));
    if (model.text_encoder.input_dim() != corpus.texts.dim())
        throw ShapeError(std::string(stage) + ": text encoder expects dim " +
                         std::to_string(model.text_encoder.input_dim()) + ", corpus has " +
                         std::to_string(corpus.texts.dim()));
    if (model.image_encoder.output_dim() != model.text_encoder.output_dim())
        throw ShapeError(std::string(stage) + ": encoder output dims differ");
}

std::string join_csv(const std::vector<std::string>& parts) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out.push_back(',');
        out += parts[i];
    }
    return out;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    if (s.empty()) return out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = s.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, comma - start));
        start = comma + 1;
    }
}

std::string activation_name(Activation act) {
    return act == Activation::relu ? "relu" : "identity";
}

Activation activation_from(const std::string& name, const std::string& where) {
    if (name == "relu") return Activation::relu;
    if (name == "identity") return Activation::identity;
    throw ValidationError(where + ": unknown activation '" + name + "'");
}

std::string activations_csv(const EncoderParams& enc) {
    std::vector<std::string> names;
    names.reserve(enc.layers.size());
    for (const Layer& layer : enc.layers) names.push_back(activation_name(layer.act));
    return join_csv(names);
}

void add_encoder(Checkpoint& ck, const std::string& prefix, const EncoderParams& enc) {
    for (std::size_t i = 0; i < enc.layers.size(); ++i) {
        const std::string base = prefix + ".layer" + std::to_string(i) + ".";
        ck.add_matrix(base + "W", enc.layers[i].W);
        ck.add_vector(base + "b", enc.layers[i].b);
    }
}

EncoderParams encoder_from_checkpoint(const Checkpoint& ck, const std::string& prefix,
                                      const std::string& acts_csv, const std::string& where) {
    const std::vector<std::string> acts = split_csv(acts_csv);
    EncoderParams enc;
    for (std::size_t i = 0;; ++i) {
        const std::string base = prefix + ".layer" + std::to_string(i) + ".";
        if (ck.find(base + "W") == nullptr) break;
        if (i >= acts.size())
            throw ValidationError(where + ": activation list for " + prefix +
                                  " shorter than stored layer count");
        Layer layer;
        layer.W = ck.get_matrix(base + "W");
        layer.b = ck.get_vector(base + "b");
        layer.act = activation_from(acts[i], where);
        enc.layers.push_back(std::move(layer));
    }
    if (enc.layers.empty())
        throw ValidationError(where + ": no layers stored under " + prefix);
    if (enc.layers.size() != acts.size())
        throw ValidationError(where + ": activation list for " + prefix +
                              " longer than stored layer count");
    enc.validate();
    return enc;
}

constexpr std::string_view kMetaKeys[] = {
    "composer",       "image_activations", "text_activations", "composer_mlp_activations",
    "has_attr_head",  "stages",            "seeds",            "config_digests",
    "pretrained",
};

}  // namespace

void save_model(const std::string& prefix, const TrainedModel& model) {
    model.image_encoder.validate();
    model.text_encoder.validate();
    model.composer.validate();

    Checkpoint ck;
    add_encoder(ck, "image_encoder", model.image_encoder);
    add_encoder(ck, "text_encoder", model.text_encoder);
    if (model.attr_head.has_value()) {
        ck.add_matrix("attr_head.W", model.attr_head->W);
        ck.add_vector("attr_head.b", model.attr_head->b);
    }
    switch (model.composer.kind) {
        case ComposerKind::image_only:
        case ComposerKind::text_only:
        case ComposerKind::mean:
            break;
        case ComposerKind::concat_mlp:
            add_encoder(ck, "composer.mlp", *model.composer.mlp);
            break;
        case ComposerKind::residual_gating: {
            const ResidualGatingParams& g = *model.composer.gating;
            ck.add_matrix("composer.gate.W", g.gate_W);
            ck.add_vector("composer.gate.b", g.gate_b);
            ck.add_matrix("composer.res.W", g.res_W);
            ck.add_vector("composer.res.b", g.res_b);
            break;
        }
        case ComposerKind::adaptive:
            ck.add_matrix("composer.adaptive.W", model.composer.adaptive->W);
            ck.add_vector("composer.adaptive.b", model.composer.adaptive->b);
            break;
    }
    ck.add_scalar("loss.tau1_log", model.tau1_log);
    ck.add_scalar("loss.tau2_log", model.tau2_log);
    write_checkpoint(prefix + ".ckpt", ck);

    Config meta;
    meta.set("composer", to_string(model.composer.kind));
    meta.set("image_activations", activations_csv(model.image_encoder));
    meta.set("text_activations", activations_csv(model.text_encoder));
    if (model.composer.kind == ComposerKind::concat_mlp)
        meta.set("composer_mlp_activations", activations_csv(*model.composer.mlp));
    meta.set("has_attr_head", model.attr_head.has_value() ? "true" : "false");
    meta.set("stages", join_csv(model.provenance.stages));
    std::vector<std::string> seeds;
    seeds.reserve(model.provenance.seeds.size());
    for (std::uint64_t s : model.provenance.seeds) seeds.push_back(std::to_string(s));
    meta.set("seeds", join_csv(seeds));
    meta.set("config_digests", join_csv(model.provenance.config_digests));
    meta.set("pretrained", join_csv({model.provenance.pretrained.begin(),
                                     model.provenance.pretrained.end()}));
    write_file_atomic(prefix + ".meta", "# model_meta v1\n" + meta.serialize());
}

TrainedModel load_model(const std::string& prefix) {
    const std::string meta_path = prefix + ".meta";
    const Checkpoint ck = read_checkpoint(prefix + ".ckpt");
    const Config meta = Config::parse(read_file(meta_path), meta_path);
    meta.require_known_keys(kMetaKeys);

    TrainedModel model;
    model.image_encoder = encoder_from_checkpoint(ck, "image_encoder",
                                                  meta.get_string("image_activations"), meta_path);
    model.text_encoder = encoder_from_checkpoint(ck, "text_encoder",
                                                 meta.get_string("text_activations"), meta_path);
    if (meta.get_bool_or("has_attr_head", false)) {
        AttributeHead head;
        head.W = ck.get_matrix("attr_head.W");
        head.b = ck.get_vector("attr_head.b");
        model.attr_head = std::move(head);
    }
    model.composer.kind = composer_kind_from_string(meta.get_string("composer"));
    switch (model.composer.kind) {
        case ComposerKind::image_only:
        case ComposerKind::text_only:
        case ComposerKind::mean:
            break;
        case ComposerKind::concat_mlp:
            model.composer.mlp = encoder_from_checkpoint(
                ck, "composer.mlp", meta.get_string("composer_mlp_activations"), meta_path);
            break;
        case ComposerKind::residual_gating: {
            ResidualGatingParams g;
            g.gate_W = ck.get_matrix("composer.gate.W");
            g.gate_b = ck.get_vector("composer.gate.b");
            g.res_W = ck.get_matrix("composer.res.W");
            g.res_b = ck.get_vector("composer.res.b");
            model.composer.gating = std::move(g);
            break;
        }
        case ComposerKind::adaptive: {
            AdaptiveComposerParams a;
            a.W = ck.get_matrix("composer.adaptive.W");
            a.b = ck.get_vector("composer.adaptive.b");
            model.composer.adaptive = std::move(a);
            break;
        }
    }
    model.composer.validate();
    model.tau1_log = ck.get_scalar("loss.tau1_log");
    model.tau2_log = ck.get_scalar("loss.tau2_log");
    model.provenance.stages = split_csv(meta.get_string_or("stages", ""));
    for (const std::string& s : split_csv(meta.get_string_or("seeds", "")))
        model.provenance.seeds.push_back(
            static_cast<std::uint64_t>(parse_int(s, meta_path + " seeds")));
    model.provenance.config_digests = split_csv(meta.get_string_or("config_digests", ""));
    for (const std::string& tag : split_csv(meta.get_string_or("pretrained", "")))
        model.provenance.pretrained.insert(tag);
    return model;
}

TrainedModel init_stage1(const Corpus* corpus, const Stage1Config& config, std::string* log) {
    if (config.source == "checkpoint") {
        if (config.checkpoint_prefix.empty())
            throw ConfigError("init: source 'checkpoint' requires checkpoint_prefix");
        TrainedModel model = load_model(config.checkpoint_prefix);
        append_log(log, "init source=checkpoint prefix=" + config.checkpoint_prefix);
        return model;
    }
    if (config.source != "random" && config.source != "pairs")
        throw ConfigError("init: unknown source '" + config.source + "'");
    if (corpus == nullptr)
        throw ValidationError("init: source '" + config.source + "' requires a corpus");
    if (config.hidden_dim < 1 || config.joint_dim < 1)
        throw ValidationError("init: hidden_dim and joint_dim must be positive");
    if (!(config.tau_init > 0.0) || !std::isfinite(config.tau_init))
        throw ValidationError("init: tau_init must be a positive real");
    if (!(config.lr > 0.0) || !std::isfinite(config.lr))
        throw ValidationError("init: lr must be a positive real");
    if (config.iterations < 0) throw ValidationError("init: iterations must be >= 0");
    if (config.batch_size < 1) throw ValidationError("init: batch_size must be >= 1");

    Rng rng(config.seed);
    Rng image_rng = rng.fork("image_encoder");
    Rng text_rng = rng.fork("text_encoder");
    TrainedModel model;
    model.image_encoder =
        make_mlp(corpus->images.dim(), config.hidden_dim, config.joint_dim, image_rng);
    model.text_encoder =
        make_mlp(corpus->texts.dim(), config.hidden_dim, config.joint_dim, text_rng);
    model.tau1_log = std::log(config.tau_init);
    model.tau2_log = std::log(config.tau_init);
    model.provenance.stages.push_back("stage1:" + config.source);
    model.provenance.seeds.push_back(config.seed);
    model.provenance.config_digests.push_back(config.config_digest);
    append_log(log, "init source=" + config.source +
                        " image_dim=" + std::to_string(corpus->images.dim()) +
                        " text_dim=" + std::to_string(corpus->texts.dim()) +
                        " joint_dim=" + std::to_string(config.joint_dim));
    if (config.source == "random") return model;

    if (corpus->pairs.empty())
        throw ValidationError("init: source 'pairs' needs pair data in the corpus");
    std::vector<PairExample> pair_data;
    pair_data.reserve(corpus->pairs.size());
    for (const PairRecord& rec : corpus->pairs) pair_data.push_back(corpus->resolve(rec));

    AdamOptimizer adam;
    Rng batch_rng = rng.fork("batches");
    for (Index t = 0; t < config.iterations; ++t) {
        const double lr = linear_decay_lr(config.lr, t, config.iterations);
        const std::vector<std::size_t> batch =
            sample_batch(batch_rng, pair_data.size(), config.batch_size);
        Tape tape;
        std::vector<Binding> binds;
        const BoundEncoder image_enc =
            bind_encoder_tracked(tape, model.image_encoder, "image_encoder", false, true, binds);
        const BoundEncoder text_enc =
            bind_encoder_tracked(tape, model.text_encoder, "text_encoder", false, true, binds);
        const NodeId tau1 =
            bind_scalar_tracked(tape, &model.tau1_log, "loss.tau1_log", false, binds);
        std::vector<NodeId> z_img, z_txt;
        z_img.reserve(batch.size());
        z_txt.reserve(batch.size());
        for (std::size_t idx : batch) {
            z_img.push_back(
                encoder_forward(tape, image_enc, tape.constant(pair_data[idx].image_features)));
            z_txt.push_back(
                encoder_forward(tape, text_enc, tape.constant(pair_data[idx].text_features)));
        }
        const NodeId loss = bi_infonce_node(tape, z_img, z_txt, tau1);
        tape.backward(loss);
        apply_steps(adam, tape, binds, lr, lr);
        append_log(log, "step " + std::to_string(t) +
                            " loss_pair=" + format_sig9(tape.scalar(loss)));
    }
    model.provenance.pretrained.insert(kTagImageEncoder);
    model.provenance.pretrained.insert(kTagTextEncoder);
    model.provenance.pretrained.insert(kTagTau1);
    return model;
}

TrainedModel run_stage2(TrainedModel model, const Corpus& corpus, const Stage2Config& config,
                        std::string* log) {
    if (config.iterations < 0) throw ValidationError("stage2: iterations must be >= 0");
    if (config.iterations == 0) return model;
    if (config.batch_size < 1) throw ValidationError("stage2: batch_size must be >= 1");
    if (config.mix_pair < 0 || config.mix_attr < 0 || config.mix_pair + config.mix_attr == 0)
        throw ValidationError("stage2: mix_pair and mix_attr must be >= 0, not both zero");
    if (!(config.lr_pretrained > 0.0) || !(config.lr_scratch > 0.0))
        throw ValidationError("stage2: learning rates must be positive");
    check_encoder_dims(model, corpus, "stage2");
    if (config.mix_pair > 0 && corpus.pairs.empty())
        throw ValidationError("stage2: pair batches requested but the corpus has no pairs");
    if (config.mix_attr > 0 && corpus.attributes.empty())
        throw ValidationError("stage2: attribute batches requested but the corpus has none");

    Rng rng(config.seed);
    if (config.mix_attr > 0) {
        if (!model.attr_head.has_value()) {
            Rng head_rng = rng.fork("attr_head");
            model.attr_head = make_attribute_head(corpus.num_attributes,
                                                  model.image_encoder.output_dim(), head_rng);
        }
        if (model.attr_head->W.rows() != corpus.num_attributes ||
            model.attr_head->W.cols() != model.image_encoder.output_dim())
            throw ShapeError("stage2: attribute head shape does not match the corpus");
    }

    std::vector<PairExample> pair_data;
    pair_data.reserve(corpus.pairs.size());
    for (const PairRecord& rec : corpus.pairs) pair_data.push_back(corpus.resolve(rec));
    struct AttrData {
        Vector features;
        Vector labels;
    };
    std::vector<AttrData> attr_data;
    attr_data.reserve(corpus.attributes.size());
    for (const AttributeRecord& rec : corpus.attributes) {
        AttributeExample ex = corpus.resolve(rec);
        Vector labels = Vector::Zero(corpus.num_attributes);
        for (Index a : ex.attributes) labels[a] = 1.0;
        attr_data.push_back({std::move(ex.image_features), std::move(labels)});
    }

    const bool img_pre = tagged(model.provenance, kTagImageEncoder);
    const bool txt_pre = tagged(model.provenance, kTagTextEncoder);
    const bool head_pre = tagged(model.provenance, kTagAttrHead);
    const bool tau1_pre = tagged(model.provenance, kTagTau1);

    AdamOptimizer adam;
    Rng batch_rng = rng.fork("batches");
    const int cycle = config.mix_pair + config.mix_attr;
    std::string last_pair = "-";
    std::string last_attr = "-";
    for (Index t = 0; t < config.iterations; ++t) {
        const double lr_pre = linear_decay_lr(config.lr_pretrained, t, config.iterations);
        const double lr_scr = linear_decay_lr(config.lr_scratch, t, config.iterations);
        const bool pair_task = static_cast<int>(t % cycle) < config.mix_pair;
        Tape tape;
        std::vector<Binding> binds;
        NodeId loss{};
        if (pair_task) {
            const std::vector<std::size_t> batch =
                sample_batch(batch_rng, pair_data.size(), config.batch_size);
            const BoundEncoder image_enc = bind_encoder_tracked(tape, model.image_encoder,
                                                                "image_encoder", img_pre, true,
                                                                binds);
            const BoundEncoder text_enc = bind_encoder_tracked(tape, model.text_encoder,
                                                               "text_encoder", txt_pre, true,
                                                               binds);
            const NodeId tau1 =
                bind_scalar_tracked(tape, &model.tau1_log, "loss.tau1_log", tau1_pre, binds);
            std::vector<NodeId> z_img, z_txt;
            z_img.reserve(batch.size());
            z_txt.reserve(batch.size());
            for (std::size_t idx : batch) {
                z_img.push_back(encoder_forward(tape, image_enc,
                                                tape.constant(pair_data[idx].image_features)));
                z_txt.push_back(encoder_forward(tape, text_enc,
                                                tape.constant(pair_data[idx].text_features)));
            }
            loss = bi_infonce_node(tape, z_img, z_txt, tau1);
        } else {
            const std::vector<std::size_t> batch =
                sample_batch(batch_rng, attr_data.size(), config.batch_size);
            const BoundEncoder image_enc = bind_encoder_tracked(tape, model.image_encoder,
                                                                "image_encoder", img_pre, true,
                                                                binds);
            const BoundAttributeHead head =
                bind_attr_head_tracked(tape, *model.attr_head, head_pre, binds);
            std::vector<NodeId> probs;
            std::vector<Vector> labels;
            probs.reserve(batch.size());
            labels.reserve(batch.size());
            for (std::size_t idx : batch) {
                const NodeId z = encoder_forward(tape, image_enc,
                                                 tape.constant(attr_data[idx].features));
                probs.push_back(attribute_head_forward(tape, head, z));
                labels.push_back(attr_data[idx].labels);
            }
            loss = attribute_bce_node(tape, probs, labels, config.bce_reduction);
        }
        tape.backward(loss);
        apply_steps(adam, tape, binds, lr_pre, lr_scr);
        const std::string value = format_sig9(tape.scalar(loss));
        if (pair_task)
            last_pair = value;
        else
            last_attr = value;
        append_log(log, "step " + std::to_string(t) +
                            " task=" + (pair_task ? "pair" : "attr") +
                            " loss_pair=" + last_pair + " loss_attr=" + last_attr);
    }

    model.provenance.stages.push_back("stage2");
    model.provenance.seeds.push_back(config.seed);
    model.provenance.config_digests.push_back(config.config_digest);
    if (config.mix_pair > 0) {
        model.provenance.pretrained.insert(kTagImageEncoder);
        model.provenance.pretrained.insert(kTagTextEncoder);
        model.provenance.pretrained.insert(kTagTau1);
    }
    if (config.mix_attr > 0) {
        model.provenance.pretrained.insert(kTagImageEncoder);
        model.provenance.pretrained.insert(kTagAttrHead);
    }
    return model;
}

TrainedModel run_stage3(TrainedModel model, const Corpus& corpus, const PseudoLabelTable* labels,
                        const Stage3Config& config, std::string* log) {
    if (config.iterations < 0) throw ValidationError("stage3: iterations must be >= 0");
    if (config.iterations == 0) return model;
    if (config.batch_size < 1) throw ValidationError("stage3: batch_size must be >= 1");
    if (!(config.lr_pretrained > 0.0) || !(config.lr_scratch > 0.0))
        throw ValidationError("stage3: learning rates must be positive");
    if (!(config.lambda >= 0.0) || !std::isfinite(config.lambda))
        throw ValidationError("stage3: lambda must be a finite non-negative real");
    check_encoder_dims(model, corpus, "stage3");
    if (corpus.triplets_train.empty())
        throw ValidationError("stage3: the corpus has no training triplets");

    Rng rng(config.seed);
    Rng composer_rng = rng.fork("composer");
    model.composer =
        make_composer(config.composer, model.image_encoder.output_dim(), composer_rng);

    const bool use_kl = config.composer == ComposerKind::adaptive && config.lambda > 0.0;
    if (use_kl) {
        if (labels == nullptr)
            throw ValidationError(
                "stage3: adaptive training with lambda > 0 needs a pseudo-label table");
        for (const TripletRecord& rec : corpus.triplets_train)
            if (labels->find(rec.id) == nullptr)
                throw ValidationError("stage3: pseudo-label table misses triplet '" + rec.id +
                                      "'");
    }

    struct TripletData {
        Vector ref, text, target;
        PseudoWeight label;
    };
    std::vector<TripletData> data;
    data.reserve(corpus.triplets_train.size());
    for (const TripletRecord& rec : corpus.triplets_train) {
        TripletExample ex = corpus.resolve(rec);
        TripletData d;
        d.ref = std::move(ex.reference_features);
        d.text = std::move(ex.text_features);
        d.target = corpus.images.row_by_id(ex.target_id);
        if (use_kl) d.label = *labels->find(rec.id);
        data.push_back(std::move(d));
    }

    const bool img_pre = tagged(model.provenance, kTagImageEncoder);
    const bool txt_pre = tagged(model.provenance, kTagTextEncoder);
    const bool tau2_pre = tagged(model.provenance, kTagTau2);
    const bool track_encoders = !config.freeze_encoders;

    AdamOptimizer adam;
    Rng batch_rng = rng.fork("batches");
    for (Index t = 0; t < config.iterations; ++t) {
        const double lr_pre = linear_decay_lr(config.lr_pretrained, t, config.iterations);
        const double lr_scr = linear_decay_lr(config.lr_scratch, t, config.iterations);
        const std::vector<std::size_t> batch =
            sample_batch(batch_rng, data.size(), config.batch_size);
        Tape tape;
        std::vector<Binding> binds;
        const BoundEncoder image_enc = bind_encoder_tracked(
            tape, model.image_encoder, "image_encoder", img_pre, track_encoders, binds);
        const BoundEncoder text_enc = bind_encoder_tracked(
            tape, model.text_encoder, "text_encoder", txt_pre, track_encoders, binds);
        const BoundComposer composer = bind_composer_tracked(tape, model.composer, false, binds);
        const NodeId tau2 =
            bind_scalar_tracked(tape, &model.tau2_log, "loss.tau2_log", tau2_pre, binds);
        std::vector<NodeId> z_q, z_tgt, w_pred;
        std::vector<PseudoWeight> batch_labels;
        z_q.reserve(batch.size());
        z_tgt.reserve(batch.size());
        for (std::size_t idx : batch) {
            const TripletData& d = data[idx];
            const NodeId z_ir = encoder_forward(tape, image_enc, tape.constant(d.ref));
            const NodeId z_t = encoder_forward(tape, text_enc, tape.constant(d.text));
            const ComposeNodes q = compose_forward(tape, composer, z_ir, z_t);
            z_q.push_back(q.z);
            // The target runs through the same image encoder leaves, so its
            // gradient joins the reference gradient.
            z_tgt.push_back(encoder_forward(tape, image_enc, tape.constant(d.target)));
            if (use_kl) {
                w_pred.push_back(*q.w);
                batch_labels.push_back(d.label);
            }
        }
        const NodeId l_cl = infonce_node(tape, z_q, z_tgt, tau2);
        NodeId loss = l_cl;
        std::string kl_part;
        if (use_kl) {
            const NodeId l_kl = weight_kl_node(tape, batch_labels, w_pred, config.kl_reduction);
            loss = total_loss_node(tape, l_cl, l_kl, config.lambda);
            kl_part = " loss_kl=" + format_sig9(tape.scalar(l_kl)) +
                      " loss_total=" + format_sig9(tape.scalar(loss));
        }
        tape.backward(loss);
        apply_steps(adam, tape, binds, lr_pre, lr_scr);
        append_log(log, "step " + std::to_string(t) +
                            " loss_cl=" + format_sig9(tape.scalar(l_cl)) + kl_part);
    }

    model.provenance.stages.push_back("stage3:" + to_string(config.composer));
    model.provenance.seeds.push_back(config.seed);
    model.provenance.config_digests.push_back(config.config_digest);
    model.provenance.pretrained.insert(kTagComposer);
    model.provenance.pretrained.insert(kTagTau2);
    if (track_encoders) {
        model.provenance.pretrained.insert(kTagImageEncoder);
        model.provenance.pretrained.insert(kTagTextEncoder);
    }
    return model;
}

BaselineModels train_baselines(const TrainedModel& base, const Corpus& corpus,
                               const Stage3Config& config, std::string* log) {
    BaselineModels out;
    Stage3Config arm = config;
    arm.composer = ComposerKind::image_only;
    append_log(log, "baseline composer=image_only");
    out.image_only = run_stage3(base, corpus, nullptr, arm, log);
    arm.composer = ComposerKind::text_only;
    append_log(log, "baseline composer=text_only");
    out.text_only = run_stage3(base, corpus, nullptr, arm, log);
    arm.composer = ComposerKind::mean;
    append_log(log, "baseline composer=mean");
    out.fusion = run_stage3(base, corpus, nullptr, arm, log);
    return out;
}

PseudoLabelGenResult generate_pseudo_labels(const Corpus& corpus,
                                            std::span<const TripletRecord> triplets,
                                            const TrainedModel& image_model,
                                            const TrainedModel& text_model,
                                            const TrainedModel& fusion_model,
                                            const SplitSpec& pool, double tau3) {
    if (fusion_model.composer.kind != ComposerKind::mean)
        throw ValidationError("pseudo labels: the fusion model must use the mean composer");
    if (pool.ids.empty()) throw ValidationError("pseudo labels: empty candidate pool");

    const auto build_index = [&](const TrainedModel& m) {
        std::vector<Vector> rows;
        rows.reserve(pool.ids.size());
        for (const std::string& id : pool.ids)
            rows.push_back(encode(corpus.images.row_by_id(id), m.image_encoder));
        return CandidateIndex(pool.ids, rows);
    };
    const CandidateIndex index_image = build_index(image_model);
    const CandidateIndex index_text = build_index(text_model);
    const CandidateIndex index_fuse = build_index(fusion_model);

    const auto query_for = [](const TrainedModel& m, const TripletExample& ex) {
        const Vector z_ir = encode(ex.reference_features, m.image_encoder);
        const Vector z_t = encode(ex.text_features, m.text_encoder);
        return compose(m.composer, z_ir, z_t).z;
    };

    PseudoLabelGenResult out;
    out.table.tau3 = tau3;
    out.table.N = static_cast<std::int64_t>(pool.ids.size());
    for (const TripletRecord& rec : triplets) {
        if (!index_image.contains(rec.target_id)) {
            out.skipped.push_back(rec.id);
            continue;
        }
        const TripletExample ex = corpus.resolve(rec);
        RankTriple ranks;
        ranks.N = out.table.N;
        ranks.r_image = rank_of(query_for(image_model, ex), index_image, rec.target_id);
        ranks.r_text = rank_of(query_for(text_model, ex), index_text, rec.target_id);
        ranks.r_fuse = rank_of(query_for(fusion_model, ex), index_fuse, rec.target_id);
        out.table.records.push_back({rec.id, pseudo_weight(ranks, tau3)});
    }
    std::sort(out.table.records.begin(), out.table.records.end(),
              [](const PseudoLabelRecord& a, const PseudoLabelRecord& b) {
                  return a.triplet_id < b.triplet_id;
              });
    return out;
}

MetricsReport evaluate(const TrainedModel& model, const Corpus& corpus,
                       std::span<const TripletRecord> queries, const SplitSpec& split,
                       std::span<const std::int64_t> ks) {
    if (queries.empty()) throw ValidationError("evaluate: no query triplets");
    if (ks.empty()) throw ValidationError("evaluate: no K values");
    std::vector<Vector> rows;
    rows.reserve(split.ids.size());
    for (const std::string& id : split.ids)
        rows.push_back(encode(corpus.images.row_by_id(id), model.image_encoder));
    const CandidateIndex index(split.ids, rows);

    std::vector<std::int64_t> ranks;
    ranks.reserve(queries.size());
    for (const TripletRecord& rec : queries) {
        const TripletExample ex = corpus.resolve(rec);
        const Vector z_ir = encode(ex.reference_features, model.image_encoder);
        const Vector z_t = encode(ex.text_features, model.text_encoder);
        ranks.push_back(rank_of(compose(model.composer, z_ir, z_t).z, index, rec.target_id));
    }
    return make_metrics_report(split.name, ranks, ks);
}

PseudoWeight predict_weights(const TrainedModel& model, const TripletExample& triplet) {
    if (model.composer.kind != ComposerKind::adaptive)
        throw ValidationError("predict_weights: the composer is not adaptive");
    const Vector z_ir = encode(triplet.reference_features, model.image_encoder);
    const Vector z_t = encode(triplet.text_features, model.text_encoder);
    const ComposeResult result = compose(model.composer, z_ir, z_t);
    return *result.predicted;
}

}  // namespace cr
