#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "cr/datasets.hpp"
#include "cr/error.hpp"
#include "cr/io.hpp"
#include "cr/rng.hpp"

using namespace cr;

namespace {

struct DirGuard {
    std::filesystem::path path;
    explicit DirGuard(const std::string& name)
        : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~DirGuard() { std::filesystem::remove_all(path); }
    std::string str() const { return path.string(); }
    std::string file(const char* name) const { return (path / name).string(); }
};

SynthConfig small_config() {
    SynthConfig cfg;
    cfg.d_attr = 8;
    cfg.clusters = 12;
    cfg.flips = 2;
    cfg.num_pairs = 30;
    cfg.num_attr_examples = 25;
    cfg.num_triplets_train = 40;
    cfg.num_triplets_eval = 10;
    cfg.eval_cluster_fraction = 0.25;
    cfg.seed = 7;
    return cfg;
}

}  // namespace

TEST_CASE("embedding table round-trips bit for bit") {
    const DirGuard dir("cr_test_embtable");
    EmbeddingTable table;
    table.ids = {"a", "b", "c"};
    table.values.resize(3, 4);
    Rng rng(5);
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 4; ++j) table.values(i, j) = rng.normal();
    // Values that stress the binary encoding.
    table.values(0, 0) = 0.1 + 0.2;
    table.values(1, 1) = -0.0;
    table.values(2, 2) = 1e-308;

    write_embedding_table(dir.file("t.bin"), dir.file("t.ids"), table);
    const EmbeddingTable loaded = read_embedding_table(dir.file("t.bin"), dir.file("t.ids"));
    CHECK(loaded.ids == table.ids);
    CHECK(loaded.values == table.values);

    write_embedding_table(dir.file("u.bin"), dir.file("u.ids"), loaded);
    CHECK(read_file(dir.file("u.bin")) == read_file(dir.file("t.bin")));
    CHECK(read_file(dir.file("u.ids")) == read_file(dir.file("t.ids")));
}

TEST_CASE("embedding table rejects malformed input") {
    const DirGuard dir("cr_test_embtable_bad");
    EmbeddingTable table;
    table.ids = {"a"};
    table.values = Matrix::Ones(1, 2);
    write_embedding_table(dir.file("t.bin"), dir.file("t.ids"), table);

    std::string bin = read_file(dir.file("t.bin"));
    {
        std::ofstream out(dir.file("bad.bin"), std::ios::binary);
        out << "WRONGMAG" << bin.substr(8);
    }
    CHECK_THROWS_AS(read_embedding_table(dir.file("bad.bin"), dir.file("t.ids")), ParseError);
    {
        std::ofstream out(dir.file("short.bin"), std::ios::binary);
        out << bin.substr(0, bin.size() - 3);
    }
    CHECK_THROWS_AS(read_embedding_table(dir.file("short.bin"), dir.file("t.ids")),
                    ParseError);
    {
        std::ofstream out(dir.file("extra.ids"));
        out << "# ids v1\na\nb\n";
    }
    CHECK_THROWS_AS(read_embedding_table(dir.file("t.bin"), dir.file("extra.ids")),
                    ParseError);

    EmbeddingTable dup;
    dup.ids = {"a", "a"};
    dup.values = Matrix::Ones(2, 2);
    CHECK_THROWS_AS(write_embedding_table(dir.file("d.bin"), dir.file("d.ids"), dup),
                    ValidationError);
}

TEST_CASE("synthesis is deterministic per seed") {
    const SynthConfig cfg = small_config();
    const Corpus a = synth_generate(cfg);
    const Corpus b = synth_generate(cfg);
    CHECK(a.images.values == b.images.values);
    CHECK(a.texts.values == b.texts.values);
    CHECK(a.images.ids == b.images.ids);
    REQUIRE(a.triplets_train.size() == b.triplets_train.size());
    for (std::size_t i = 0; i < a.triplets_train.size(); ++i) {
        CHECK(a.triplets_train[i].reference_id == b.triplets_train[i].reference_id);
        CHECK(a.triplets_train[i].target_id == b.triplets_train[i].target_id);
    }

    SynthConfig other = cfg;
    other.seed = 8;
    const Corpus c = synth_generate(other);
    CHECK(a.images.values != c.images.values);
}

TEST_CASE("synthesis obeys the requested shape") {
    const SynthConfig cfg = small_config();
    const Corpus corpus = synth_generate(cfg);
    // Two flips: base, target, and a one-flip confounder per cluster.
    CHECK(corpus.images.count() == 3 * cfg.clusters);
    CHECK(corpus.images.dim() == cfg.d_attr);
    CHECK(corpus.num_attributes == cfg.d_attr);
    CHECK(static_cast<Index>(corpus.pairs.size()) == cfg.num_pairs);
    CHECK(static_cast<Index>(corpus.attributes.size()) == cfg.num_attr_examples);
    CHECK(static_cast<Index>(corpus.triplets_train.size()) == cfg.num_triplets_train);
    CHECK(static_cast<Index>(corpus.triplets_eval.size()) == cfg.num_triplets_eval);
    // One text row per pair plus one per triplet.
    CHECK(corpus.texts.count() ==
          cfg.num_pairs + cfg.num_triplets_train + cfg.num_triplets_eval);

    SynthConfig no_flip = cfg;
    no_flip.flips = 0;
    const Corpus degenerate = synth_generate(no_flip);
    CHECK(degenerate.images.count() == no_flip.clusters);
    for (const TripletRecord& t : degenerate.triplets_train)
        CHECK(t.reference_id == t.target_id);
}

TEST_CASE("synthesis produces coherent splits and case tags") {
    const Corpus corpus = synth_generate(small_config());
    const std::set<std::string> full(corpus.split_full.ids.begin(),
                                     corpus.split_full.ids.end());
    const std::set<std::string> val(corpus.split_val.ids.begin(), corpus.split_val.ids.end());
    CHECK(full.size() == corpus.split_full.ids.size());
    CHECK(static_cast<Index>(full.size()) == corpus.images.count());
    CHECK(val.size() < full.size());
    for (const std::string& id : val) CHECK(full.count(id) == 1);

    // Eval triplets must be solvable inside the val pool; train triplets are
    // deliberately outside it so the pools test distinct clusters.
    for (const TripletRecord& t : corpus.triplets_eval) CHECK(val.count(t.target_id) == 1);
    for (const TripletRecord& t : corpus.triplets_train) CHECK(val.count(t.target_id) == 0);

    std::set<std::string> tags;
    for (const TripletRecord& t : corpus.triplets_train) {
        REQUIRE(corpus.triplet_case.count(t.id) == 1);
        tags.insert(corpus.triplet_case.at(t.id));
    }
    for (const std::string& tag : tags)
        CHECK((tag == kCaseDelta || tag == kCaseFullText || tag == kCaseNoText));
    // The default mix should surface at least two distinct tags at this size.
    CHECK(tags.size() >= 2);
}

TEST_CASE("corpus writes load back identically") {
    const DirGuard dir("cr_test_corpus_rt");
    const Corpus corpus = synth_generate(small_config());
    write_corpus(dir.str(), corpus);
    const Corpus loaded = load_corpus(dir.str());
    CHECK(loaded.images.values == corpus.images.values);
    CHECK(loaded.texts.values == corpus.texts.values);
    CHECK(loaded.num_attributes == corpus.num_attributes);
    CHECK(loaded.pairs.size() == corpus.pairs.size());
    CHECK(loaded.split_full.ids == corpus.split_full.ids);
    CHECK(loaded.split_val.ids == corpus.split_val.ids);
    CHECK(loaded.triplet_case == corpus.triplet_case);

    // Writing the loaded corpus again reproduces every file byte for byte.
    const DirGuard dir2("cr_test_corpus_rt2");
    write_corpus(dir2.str(), loaded);
    for (const char* name : {"images.bin", "images.ids", "texts.bin", "texts.ids",
                             "pairs.tsv", "attributes.tsv", "triplets_train.tsv",
                             "triplets_eval.tsv", "split.tsv", "split_val.tsv", "cases.tsv"})
        CHECK(read_file(dir2.file(name)) == read_file(dir.file(name)));
}

TEST_CASE("load_corpus rejects dangling references with a line number") {
    const DirGuard dir("cr_test_corpus_bad");
    const Corpus corpus = synth_generate(small_config());
    write_corpus(dir.str(), corpus);

    SUBCASE("unknown image id in a pair") {
        std::string text = read_file(dir.file("pairs.tsv"));
        text += "pairXXXXX\tno-such-item\ttext000000\n";
        write_file_atomic(dir.file("pairs.tsv"), text);
        CHECK_THROWS_WITH_AS(load_corpus(dir.str()),
                             doctest::Contains("no-such-item"), ValidationError);
    }
    SUBCASE("triplet target outside the candidate split") {
        std::string text = read_file(dir.file("split.tsv"));
        const std::string victim = corpus.triplets_train[0].target_id + "\n";
        const std::size_t at = text.find(victim);
        REQUIRE(at != std::string::npos);
        text.erase(at, victim.size());
        write_file_atomic(dir.file("split.tsv"), text);
        CHECK_THROWS_WITH_AS(load_corpus(dir.str()),
                             doctest::Contains("missing from the candidate split"),
                             ValidationError);
    }
    SUBCASE("attribute index outside the vocabulary") {
        std::string text = read_file(dir.file("attributes.tsv"));
        text += "attrXXXXX\t" + corpus.images.ids[0] + "\t99\n";
        write_file_atomic(dir.file("attributes.tsv"), text);
        CHECK_THROWS_WITH_AS(load_corpus(dir.str()), doctest::Contains("99"),
                             ValidationError);
    }
    SUBCASE("duplicate triplet id carries its line number") {
        std::string text = read_file(dir.file("triplets_train.tsv"));
        const std::vector<std::string> lines = split_lines(text);
        text += lines[1] + "\n";
        write_file_atomic(dir.file("triplets_train.tsv"), text);
        CHECK_THROWS_WITH_AS(load_corpus(dir.str()),
                             doctest::Contains(std::to_string(lines.size() + 1).c_str()),
                             ValidationError);
    }
    SUBCASE("case tag for an unknown triplet") {
        std::string text = read_file(dir.file("cases.tsv"));
        text += "ghost-triplet\tdelta\n";
        write_file_atomic(dir.file("cases.tsv"), text);
        CHECK_THROWS_WITH_AS(load_corpus(dir.str()), doctest::Contains("ghost-triplet"),
                             ValidationError);
    }
    SUBCASE("malformed triplet row is a parse error") {
        std::string text = read_file(dir.file("triplets_train.tsv"));
        text += "only\ttwo\n";
        write_file_atomic(dir.file("triplets_train.tsv"), text);
        CHECK_THROWS_AS(load_corpus(dir.str()), ParseError);
    }
}

TEST_CASE("resolve returns the right feature rows") {
    const Corpus corpus = synth_generate(small_config());
    const PairRecord& pair = corpus.pairs[3];
    const PairExample pe = corpus.resolve(pair);
    CHECK(pe.id == pair.id);
    CHECK(pe.image_features == corpus.images.row_by_id(pair.image_id));
    CHECK(pe.text_features == corpus.texts.row_by_id(pair.text_id));

    const TripletRecord& trip = corpus.triplets_train[5];
    const TripletExample te = corpus.resolve(trip);
    CHECK(te.target_id == trip.target_id);
    CHECK(te.reference_features == corpus.images.row_by_id(trip.reference_id));

    const AttributeRecord& attr = corpus.attributes[2];
    const AttributeExample ae = corpus.resolve(attr);
    CHECK(ae.attributes == attr.attributes);

    CHECK_THROWS_AS(corpus.images.row_by_id("missing"), ValidationError);
    CHECK(corpus.images.find("missing") == -1);
}

TEST_CASE("synth config validation") {
    SynthConfig cfg = small_config();
    cfg.flips = cfg.d_attr + 1;
    CHECK_THROWS_AS(synth_generate(cfg), ValidationError);
    cfg = small_config();
    cfg.mix_delta = 0.9;  // mix no longer sums to 1
    CHECK_THROWS_AS(synth_generate(cfg), ValidationError);
    cfg = small_config();
    cfg.eval_cluster_fraction = 1.0;
    CHECK_THROWS_AS(synth_generate(cfg), ValidationError);
    cfg = small_config();
    cfg.clusters = 1;  // nothing left for training after the eval share
    CHECK_THROWS_AS(synth_generate(cfg), ValidationError);
}
