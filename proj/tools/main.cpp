#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cr/config.hpp"
#include "cr/datasets.hpp"
#include "cr/error.hpp"
#include "cr/gradcheck.hpp"
#include "cr/io.hpp"
#include "cr/losses.hpp"
#include "cr/pipeline.hpp"
#include "cr/pseudo_weights.hpp"
#include "cr/retrieval_eval.hpp"

namespace {

using namespace cr;

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;

    bool seed_given() const { return seed_opt != nullptr && seed_opt->count() > 0; }
};

void add_common(CLI::App* sub, CommonArgs& args) {
    sub->add_option("--config", args.config_path, "key = value config file")->required();
    sub->add_option("--out", args.out_dir, "run directory, created if missing")->required();
    args.seed_opt = sub->add_option("--seed", args.seed, "override the config seed");
}

// The run directory always receives a byte copy of the input config; a seed
// override is recorded in the log, and the provenance digest covers the
// effective values.
Config load_effective_config(const CommonArgs& args) {
    Config cfg = Config::load(args.config_path);
    if (args.seed_given()) cfg.set("seed", std::to_string(args.seed));
    return cfg;
}

void write_run_files(const CommonArgs& args, const std::string& log) {
    write_file_atomic(args.out_dir + "/config.txt", read_file(args.config_path));
    write_file_atomic(args.out_dir + "/log.txt", log);
}

std::string seed_note(const CommonArgs& args) {
    if (!args.seed_given()) return {};
    return "seed_override=" + std::to_string(args.seed) + "\n";
}

std::uint64_t config_seed(const Config& cfg, std::uint64_t fallback) {
    return static_cast<std::uint64_t>(
        cfg.get_int_or("seed", static_cast<std::int64_t>(fallback)));
}

constexpr std::string_view kSynthKeys[] = {
    "d_attr",        "clusters",          "flips",
    "num_pairs",     "num_attr_examples", "num_triplets_train",
    "num_triplets_eval", "eval_cluster_fraction", "noise_sigma",
    "text_noise_sigma",  "mix_delta",         "mix_full",
    "mix_zero",      "seed",
};

int run_synth(const CommonArgs& args) {
    const Config cfg = load_effective_config(args);
    cfg.require_known_keys(kSynthKeys);
    SynthConfig sc;
    sc.d_attr = cfg.get_int_or("d_attr", sc.d_attr);
    sc.clusters = cfg.get_int_or("clusters", sc.clusters);
    sc.flips = cfg.get_int_or("flips", sc.flips);
    sc.num_pairs = cfg.get_int_or("num_pairs", sc.num_pairs);
    sc.num_attr_examples = cfg.get_int_or("num_attr_examples", sc.num_attr_examples);
    sc.num_triplets_train = cfg.get_int_or("num_triplets_train", sc.num_triplets_train);
    sc.num_triplets_eval = cfg.get_int_or("num_triplets_eval", sc.num_triplets_eval);
    sc.eval_cluster_fraction = cfg.get_real_or("eval_cluster_fraction", sc.eval_cluster_fraction);
    sc.noise_sigma = cfg.get_real_or("noise_sigma", sc.noise_sigma);
    sc.text_noise_sigma = cfg.get_real_or("text_noise_sigma", sc.text_noise_sigma);
    sc.mix_delta = cfg.get_real_or("mix_delta", sc.mix_delta);
    sc.mix_full = cfg.get_real_or("mix_full", sc.mix_full);
    sc.mix_zero = cfg.get_real_or("mix_zero", sc.mix_zero);
    sc.seed = config_seed(cfg, sc.seed);
    sc.validate();

    const Corpus corpus = synth_generate(sc);
    write_corpus(args.out_dir, corpus);
    std::string log = seed_note(args);
    log += "synth items=" + std::to_string(corpus.images.count()) +
           " texts=" + std::to_string(corpus.texts.count()) +
           " pairs=" + std::to_string(corpus.pairs.size()) +
           " attr_examples=" + std::to_string(corpus.attributes.size()) +
           " triplets_train=" + std::to_string(corpus.triplets_train.size()) +
           " triplets_eval=" + std::to_string(corpus.triplets_eval.size()) + "\n";
    write_run_files(args, log);
    std::printf("synth: %lld items, %zu train triplets, %zu eval triplets -> %s\n",
                static_cast<long long>(corpus.images.count()), corpus.triplets_train.size(),
                corpus.triplets_eval.size(), args.out_dir.c_str());
    return 0;
}

constexpr std::string_view kInitKeys[] = {
    "corpus", "source", "checkpoint_prefix", "hidden_dim", "joint_dim",
    "iterations", "batch_size", "lr", "tau_init", "seed",
};

int run_init(const CommonArgs& args) {
    const Config cfg = load_effective_config(args);
    cfg.require_known_keys(kInitKeys);
    Stage1Config sc;
    sc.source = cfg.get_string_or("source", sc.source);
    sc.checkpoint_prefix = cfg.get_string_or("checkpoint_prefix", "");
    sc.hidden_dim = cfg.get_int_or("hidden_dim", sc.hidden_dim);
    sc.joint_dim = cfg.get_int_or("joint_dim", sc.joint_dim);
    sc.iterations = cfg.get_int_or("iterations", sc.iterations);
    sc.batch_size = static_cast<int>(cfg.get_int_or("batch_size", sc.batch_size));
    sc.lr = cfg.get_real_or("lr", sc.lr);
    sc.tau_init = cfg.get_real_or("tau_init", sc.tau_init);
    sc.seed = config_seed(cfg, sc.seed);
    sc.config_digest = cfg.digest();

    std::optional<Corpus> corpus;
    if (sc.source != "checkpoint") corpus.emplace(load_corpus(cfg.get_string("corpus")));
    std::string log = seed_note(args);
    const TrainedModel model = init_stage1(corpus ? &*corpus : nullptr, sc, &log);
    save_model(args.out_dir + "/model", model);
    write_run_files(args, log);
    std::printf("init: source=%s -> %s/model.ckpt\n", sc.source.c_str(), args.out_dir.c_str());
    return 0;
}

constexpr std::string_view kStage2Keys[] = {
    "corpus", "model", "iterations", "batch_size", "lr_pretrained",
    "lr_scratch", "mix_pair", "mix_attr", "bce_reduction", "seed",
};

int run_stage2_cmd(const CommonArgs& args) {
    const Config cfg = load_effective_config(args);
    cfg.require_known_keys(kStage2Keys);
    Stage2Config sc;
    sc.iterations = cfg.get_int_or("iterations", sc.iterations);
    sc.batch_size = static_cast<int>(cfg.get_int_or("batch_size", sc.batch_size));
    sc.lr_pretrained = cfg.get_real_or("lr_pretrained", sc.lr_pretrained);
    sc.lr_scratch = cfg.get_real_or("lr_scratch", sc.lr_scratch);
    sc.mix_pair = static_cast<int>(cfg.get_int_or("mix_pair", sc.mix_pair));
    sc.mix_attr = static_cast<int>(cfg.get_int_or("mix_attr", sc.mix_attr));
    sc.bce_reduction = reduction_from_string(
        cfg.get_string_or("bce_reduction", to_string(sc.bce_reduction)));
    sc.seed = config_seed(cfg, sc.seed);
    sc.config_digest = cfg.digest();

    const Corpus corpus = load_corpus(cfg.get_string("corpus"));
    TrainedModel model = load_model(cfg.get_string("model"));
    std::string log = seed_note(args);
    model = run_stage2(std::move(model), corpus, sc, &log);
    save_model(args.out_dir + "/model", model);
    write_run_files(args, log);
    std::printf("stage2: %lld iterations -> %s/model.ckpt\n",
                static_cast<long long>(sc.iterations), args.out_dir.c_str());
    return 0;
}

constexpr std::string_view kStage3Keys[] = {
    "corpus", "model", "composer", "labels", "iterations", "batch_size",
    "lr_pretrained", "lr_scratch", "lambda", "kl_reduction", "freeze_encoders", "seed",
};

int run_stage3_cmd(const CommonArgs& args) {
    const Config cfg = load_effective_config(args);
    cfg.require_known_keys(kStage3Keys);
    Stage3Config sc;
    sc.composer = composer_kind_from_string(
        cfg.get_string_or("composer", to_string(sc.composer)));
    sc.iterations = cfg.get_int_or("iterations", sc.iterations);
    sc.batch_size = static_cast<int>(cfg.get_int_or("batch_size", sc.batch_size));
    sc.lr_pretrained = cfg.get_real_or("lr_pretrained", sc.lr_pretrained);
    sc.lr_scratch = cfg.get_real_or("lr_scratch", sc.lr_scratch);
    sc.lambda = cfg.get_real_or("lambda", sc.lambda);
    sc.kl_reduction = reduction_from_string(
        cfg.get_string_or("kl_reduction", to_string(sc.kl_reduction)));
    sc.freeze_encoders = cfg.get_bool_or("freeze_encoders", sc.freeze_encoders);
    sc.seed = config_seed(cfg, sc.seed);
    sc.config_digest = cfg.digest();

    const Corpus corpus = load_corpus(cfg.get_string("corpus"));
    TrainedModel model = load_model(cfg.get_string("model"));
    PseudoLabelTable labels;
    const PseudoLabelTable* labels_ptr = nullptr;
    if (cfg.has("labels")) {
        labels = read_pseudo_labels(cfg.get_string("labels"));
        labels_ptr = &labels;
    }
    std::string log = seed_note(args);
    model = run_stage3(std::move(model), corpus, labels_ptr, sc, &log);
    save_model(args.out_dir + "/model", model);
    write_run_files(args, log);
    std::printf("stage3: composer=%s, %lld iterations -> %s/model.ckpt\n",
                to_string(sc.composer).c_str(), static_cast<long long>(sc.iterations),
                args.out_dir.c_str());
    return 0;
}

constexpr std::string_view kBaselineKeys[] = {
    "corpus", "model", "iterations", "batch_size", "lr_pretrained", "lr_scratch", "seed",
};

int run_baselines_cmd(const CommonArgs& args) {
    const Config cfg = load_effective_config(args);
    cfg.require_known_keys(kBaselineKeys);
    Stage3Config sc;
    sc.iterations = cfg.get_int_or("iterations", sc.iterations);
    sc.batch_size = static_cast<int>(cfg.get_int_or("batch_size", sc.batch_size));
    sc.lr_pretrained = cfg.get_real_or("lr_pretrained", sc.lr_pretrained);
    sc.lr_scratch = cfg.get_real_or("lr_scratch", sc.lr_scratch);
    sc.seed = config_seed(cfg, sc.seed);
    sc.config_digest = cfg.digest();

    const Corpus corpus = load_corpus(cfg.get_string("corpus"));
    const TrainedModel base = load_model(cfg.get_string("model"));
    std::string log = seed_note(args);
    const BaselineModels models = train_baselines(base, corpus, sc, &log);
    save_model(args.out_dir + "/image_only", models.image_only);
    save_model(args.out_dir + "/text_only", models.text_only);
    save_model(args.out_dir + "/fusion", models.fusion);
    write_run_files(args, log);
    std::printf("baselines: image_only, text_only, fusion -> %s\n", args.out_dir.c_str());
    return 0;
}

constexpr std::string_view kPseudoLabelKeys[] = {
    "corpus", "image_model", "text_model", "fusion_model", "tau3", "triplets", "seed",
};

int run_pseudo_labels_cmd(const CommonArgs& args) {
    const Config cfg = load_effective_config(args);
    cfg.require_known_keys(kPseudoLabelKeys);
    const Corpus corpus = load_corpus(cfg.get_string("corpus"));
    const TrainedModel image_model = load_model(cfg.get_string("image_model"));
    const TrainedModel text_model = load_model(cfg.get_string("text_model"));
    const TrainedModel fusion_model = load_model(cfg.get_string("fusion_model"));
    const double tau3 = cfg.get_real_or("tau3", 4.0);
    const std::string which = cfg.get_string_or("triplets", "train");
    if (which != "train" && which != "eval")
        throw ConfigError("pseudo-labels: triplets must be 'train' or 'eval'");
    const std::vector<TripletRecord>& source =
        which == "eval" ? corpus.triplets_eval : corpus.triplets_train;

    const PseudoLabelGenResult result = generate_pseudo_labels(
        corpus, source, image_model, text_model, fusion_model, corpus.split_full, tau3);
    write_pseudo_labels(args.out_dir + "/labels.tsv", result.table);
    std::string log = seed_note(args);
    log += "labels=" + std::to_string(result.table.records.size()) +
           " skipped=" + std::to_string(result.skipped.size()) + "\n";
    for (const std::string& id : result.skipped) log += "skipped " + id + "\n";
    write_run_files(args, log);
    std::printf("pseudo-labels: %zu labels, %zu skipped -> %s/labels.tsv\n",
                result.table.records.size(), result.skipped.size(), args.out_dir.c_str());
    return 0;
}

constexpr std::string_view kEvalKeys[] = {
    "corpus", "model", "split", "queries", "ks", "seed",
};

int run_eval_cmd(const CommonArgs& args) {
    const Config cfg = load_effective_config(args);
    cfg.require_known_keys(kEvalKeys);
    const Corpus corpus = load_corpus(cfg.get_string("corpus"));
    const TrainedModel model = load_model(cfg.get_string("model"));
    const std::string split_name = cfg.get_string_or("split", "full");
    if (split_name != "full" && split_name != "val")
        throw ConfigError("eval: split must be 'full' or 'val'");
    const SplitSpec& split = split_name == "val" ? corpus.split_val : corpus.split_full;
    const std::string which = cfg.get_string_or("queries", "eval");
    if (which != "train" && which != "eval")
        throw ConfigError("eval: queries must be 'train' or 'eval'");
    const std::vector<TripletRecord>& queries =
        which == "eval" ? corpus.triplets_eval : corpus.triplets_train;
    std::vector<std::int64_t> ks;
    for (const std::string& part : split_fields(cfg.get_string_or("ks", "10,50"), ','))
        ks.push_back(parse_int(part, "eval ks"));

    const MetricsReport report = evaluate(model, corpus, queries, split, ks);
    write_file_atomic(args.out_dir + "/metrics.txt", report.to_text());
    write_file_atomic(args.out_dir + "/metrics.kv", report.to_kv());
    std::string log = seed_note(args);
    log += "eval split=" + split.name + " queries=" + std::to_string(queries.size()) + "\n";
    write_run_files(args, log);
    std::fputs(report.to_text().c_str(), stdout);
    return 0;
}

constexpr std::string_view kGradcheckKeys[] = {
    "trials", "batch_size", "feature_dim", "hidden_dim", "joint_dim",
    "num_attributes", "eps", "lambda", "bound", "seed",
};

int run_gradcheck_cmd(const CommonArgs& args) {
    const Config cfg = load_effective_config(args);
    cfg.require_known_keys(kGradcheckKeys);
    GradSuiteConfig gc;
    gc.trials = static_cast<int>(cfg.get_int_or("trials", gc.trials));
    gc.batch_size = static_cast<int>(cfg.get_int_or("batch_size", gc.batch_size));
    gc.feature_dim = cfg.get_int_or("feature_dim", gc.feature_dim);
    gc.hidden_dim = cfg.get_int_or("hidden_dim", gc.hidden_dim);
    gc.joint_dim = cfg.get_int_or("joint_dim", gc.joint_dim);
    gc.num_attributes = cfg.get_int_or("num_attributes", gc.num_attributes);
    gc.eps = cfg.get_real_or("eps", gc.eps);
    gc.lambda = cfg.get_real_or("lambda", gc.lambda);
    gc.seed = config_seed(cfg, gc.seed);
    const double bound = cfg.get_real_or("bound", 1e-4);

    const GradSuiteReport report = run_gradient_suite(gc);
    write_file_atomic(args.out_dir + "/report.txt", report.to_text());
    write_run_files(args, report.to_text());
    std::fputs(report.to_text().c_str(), stdout);
    if (!report.all_below(bound)) {
        std::fprintf(stderr, "gradcheck: worst relative error %s is not below %s\n",
                     format_sig9(report.worst).c_str(), format_sig9(bound).c_str());
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Progressive training and evaluation for composed image retrieval"};
    app.require_subcommand(1);

    CommonArgs synth_args, init_args, stage2_args, stage3_args, baseline_args, label_args,
        eval_args, gradcheck_args;
    int rc = 0;
    const auto wire = [&rc](CLI::App* sub, CommonArgs& a, int (*fn)(const CommonArgs&)) {
        add_common(sub, a);
        sub->callback([&a, fn, &rc] { rc = fn(a); });
    };
    wire(app.add_subcommand("synth", "generate a seeded synthetic corpus"), synth_args,
         run_synth);
    wire(app.add_subcommand("init", "build the starting model (random | pairs | checkpoint)"),
         init_args, run_init);
    wire(app.add_subcommand("stage2", "alternating pair-alignment and attribute training"),
         stage2_args, run_stage2_cmd);
    wire(app.add_subcommand("stage3", "composed-retrieval fine-tuning on triplets"),
         stage3_args, run_stage3_cmd);
    wire(app.add_subcommand("baselines", "train image-only, text-only and fusion models"),
         baseline_args, run_baselines_cmd);
    wire(app.add_subcommand("pseudo-labels", "derive importance labels from baseline ranks"),
         label_args, run_pseudo_labels_cmd);
    wire(app.add_subcommand("eval", "report R@K and Rmean on a candidate split"), eval_args,
         run_eval_cmd);
    wire(app.add_subcommand("gradcheck", "verify taped gradients against finite differences"),
         gradcheck_args, run_gradcheck_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return rc;
}
