#include "cr/datasets.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <optional>
#include <sstream>
#include <unordered_set>

#include "cr/error.hpp"
#include "cr/io.hpp"
#include "cr/rng.hpp"

namespace cr {

namespace {

constexpr char kEmbeddingMagic[] = "CREMB001";

void put_u32(std::string& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

std::uint32_t get_u32(const std::string& s, std::size_t& off, const std::string& where) {
    if (off + 4 > s.size()) throw ParseError(where + ": truncated");
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + k])) << (8 * k);
    off += 4;
    return v;
}

void put_f64(std::string& out, double x) {
    const auto bits = std::bit_cast<std::uint64_t>(x);
    for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xff));
}

double get_f64(const std::string& s, std::size_t& off, const std::string& where) {
    if (off + 8 > s.size()) throw ParseError(where + ": truncated");
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[off + k])) << (8 * k);
    off += 8;
    return std::bit_cast<double>(bits);
}

void check_id(const std::string& id, const std::string& where) {
    if (id.empty() || id.find('\t') != std::string::npos ||
        id.find('\n') != std::string::npos || id.find('\r') != std::string::npos)
        throw ValidationError(where + ": invalid id '" + id + "'");
}

std::string line_ref(const std::string& path, std::size_t line_no) {
    return path + ":" + std::to_string(line_no);
}

// Header check for "#<space>kind<space>v1"; returns the remainder.
std::string require_header(const std::vector<std::string>& lines, const std::string& path,
                           const std::string& kind) {
    const std::string prefix = "# " + kind + " v1";
    if (lines.empty() || lines[0].rfind(prefix, 0) != 0 ||
        (lines[0].size() > prefix.size() && lines[0][prefix.size()] != ' '))
        throw ParseError(line_ref(path, 1) + ": expected '" + prefix + "' header");
    return lines[0].size() > prefix.size() ? lines[0].substr(prefix.size() + 1) : "";
}

}  // namespace

Index EmbeddingTable::find(const std::string& id) const {
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (ids[i] == id) return static_cast<Index>(i);
    return -1;
}

Vector EmbeddingTable::row_by_id(const std::string& id) const {
    const Index i = find(id);
    if (i < 0) throw ValidationError("embedding table: unknown id '" + id + "'");
    return values.row(i).transpose();
}

void EmbeddingTable::validate() const {
    if (static_cast<Index>(ids.size()) != values.rows())
        throw ShapeError("embedding table: " + std::to_string(ids.size()) + " ids for " +
                         std::to_string(values.rows()) + " rows");
    if (values.rows() < 1 || values.cols() < 1)
        throw ShapeError("embedding table: empty table");
    if (!values.allFinite()) throw ValidationError("embedding table: non-finite values");
    std::unordered_set<std::string> seen;
    for (const std::string& id : ids) {
        check_id(id, "embedding table");
        if (!seen.insert(id).second)
            throw ValidationError("embedding table: duplicate id '" + id + "'");
    }
}

void write_embedding_table(const std::string& bin_path, const std::string& ids_path,
                           const EmbeddingTable& table) {
    table.validate();
    if (table.count() > std::numeric_limits<std::uint32_t>::max() ||
        table.dim() > std::numeric_limits<std::uint32_t>::max())
        throw ValidationError("embedding table: too large for the format");
    std::string bin;
    bin.reserve(16 + static_cast<std::size_t>(table.count()) *
                         static_cast<std::size_t>(table.dim()) * 8);
    bin.append(kEmbeddingMagic, 8);
    put_u32(bin, static_cast<std::uint32_t>(table.count()));
    put_u32(bin, static_cast<std::uint32_t>(table.dim()));
    for (Index i = 0; i < table.count(); ++i)
        for (Index j = 0; j < table.dim(); ++j) put_f64(bin, table.values(i, j));
    write_file_atomic(bin_path, bin);

    std::string ids_text = "# ids v1\n";
    for (const std::string& id : table.ids) {
        ids_text += id;
        ids_text += '\n';
    }
    write_file_atomic(ids_path, ids_text);
}

EmbeddingTable read_embedding_table(const std::string& bin_path,
                                    const std::string& ids_path) {
    const std::string bin = read_file(bin_path);
    if (bin.size() < 8 || bin.compare(0, 8, kEmbeddingMagic) != 0)
        throw ParseError(bin_path + ": bad magic, expected CREMB001");
    std::size_t off = 8;
    const std::uint32_t count = get_u32(bin, off, bin_path);
    const std::uint32_t dim = get_u32(bin, off, bin_path);
    const std::size_t expected = 16 + static_cast<std::size_t>(count) * dim * 8;
    if (bin.size() != expected)
        throw ParseError(bin_path + ": size " + std::to_string(bin.size()) +
                         " does not match header (expected " + std::to_string(expected) + ")");
    EmbeddingTable table;
    table.values.resize(count, dim);
    for (std::uint32_t i = 0; i < count; ++i)
        for (std::uint32_t j = 0; j < dim; ++j)
            table.values(i, j) = get_f64(bin, off, bin_path);

    const std::vector<std::string> lines = split_lines(read_file(ids_path));
    require_header(lines, ids_path, "ids");
    table.ids.assign(lines.begin() + 1, lines.end());
    if (table.ids.size() != count)
        throw ParseError(ids_path + ": " + std::to_string(table.ids.size()) +
                         " ids for " + std::to_string(count) + " rows");
    table.validate();
    return table;
}

void write_pairs(const std::string& path, const std::vector<PairRecord>& pairs) {
    std::ostringstream out;
    out << "# pairs v1\n";
    for (const PairRecord& p : pairs) {
        for (const std::string* s : {&p.id, &p.image_id, &p.text_id}) check_id(*s, path);
        out << p.id << '\t' << p.image_id << '\t' << p.text_id << "\n";
    }
    write_file_atomic(path, std::move(out).str());
}

std::vector<PairRecord> read_pairs(const std::string& path) {
    const std::vector<std::string> lines = split_lines(read_file(path));
    require_header(lines, path, "pairs");
    std::vector<PairRecord> pairs;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::vector<std::string> f = split_fields(lines[i], '\t');
        if (f.size() != 3)
            throw ParseError(line_ref(path, i + 1) + ": expected 3 fields, got " +
                             std::to_string(f.size()));
        pairs.push_back({f[0], f[1], f[2]});
    }
    return pairs;
}

void write_attributes(const std::string& path, const std::vector<AttributeRecord>& records,
                      Index num_attributes) {
    if (num_attributes < 1)
        throw ValidationError("attributes: vocabulary size must be at least 1");
    std::ostringstream out;
    out << "# attributes v1 num_attributes=" << num_attributes << "\n";
    for (const AttributeRecord& r : records) {
        check_id(r.id, path);
        check_id(r.image_id, path);
        out << r.id << '\t' << r.image_id << '\t';
        for (std::size_t k = 0; k < r.attributes.size(); ++k) {
            if (k > 0) out << ',';
            out << r.attributes[k];
        }
        out << "\n";
    }
    write_file_atomic(path, std::move(out).str());
}

std::pair<std::vector<AttributeRecord>, Index> read_attributes(const std::string& path) {
    const std::vector<std::string> lines = split_lines(read_file(path));
    const std::string rest = require_header(lines, path, "attributes");
    if (rest.rfind("num_attributes=", 0) != 0)
        throw ParseError(line_ref(path, 1) + ": missing num_attributes");
    const Index num_attributes =
        parse_int(rest.substr(std::string("num_attributes=").size()), line_ref(path, 1));
    if (num_attributes < 1)
        throw ParseError(line_ref(path, 1) + ": num_attributes must be at least 1");
    std::vector<AttributeRecord> records;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::vector<std::string> f = split_fields(lines[i], '\t');
        if (f.size() != 3)
            throw ParseError(line_ref(path, i + 1) + ": expected 3 fields, got " +
                             std::to_string(f.size()));
        AttributeRecord rec;
        rec.id = f[0];
        rec.image_id = f[1];
        if (!f[2].empty())
            for (const std::string& a : split_fields(f[2], ','))
                rec.attributes.push_back(parse_int(a, line_ref(path, i + 1)));
        records.push_back(std::move(rec));
    }
    return {std::move(records), num_attributes};
}

void write_triplets(const std::string& path, const std::vector<TripletRecord>& triplets) {
    std::ostringstream out;
    out << "# triplets v1\n";
    for (const TripletRecord& t : triplets) {
        for (const std::string* s : {&t.id, &t.reference_id, &t.text_id, &t.target_id})
            check_id(*s, path);
        out << t.id << '\t' << t.reference_id << '\t' << t.text_id << '\t' << t.target_id
            << "\n";
    }
    write_file_atomic(path, std::move(out).str());
}

std::vector<TripletRecord> read_triplets(const std::string& path) {
    const std::vector<std::string> lines = split_lines(read_file(path));
    require_header(lines, path, "triplets");
    std::vector<TripletRecord> triplets;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::vector<std::string> f = split_fields(lines[i], '\t');
        if (f.size() != 4)
            throw ParseError(line_ref(path, i + 1) + ": expected 4 fields, got " +
                             std::to_string(f.size()));
        triplets.push_back({f[0], f[1], f[2], f[3]});
    }
    return triplets;
}

void write_split(const std::string& path, const SplitSpec& split) {
    check_id(split.name, path);
    std::ostringstream out;
    out << "# split v1 name=" << split.name << "\n";
    for (const std::string& id : split.ids) {
        check_id(id, path);
        out << id << "\n";
    }
    write_file_atomic(path, std::move(out).str());
}

SplitSpec read_split(const std::string& path) {
    const std::vector<std::string> lines = split_lines(read_file(path));
    const std::string rest = require_header(lines, path, "split");
    if (rest.rfind("name=", 0) != 0)
        throw ParseError(line_ref(path, 1) + ": missing split name");
    SplitSpec split;
    split.name = rest.substr(5);
    check_id(split.name, path);
    split.ids.assign(lines.begin() + 1, lines.end());
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < split.ids.size(); ++i) {
        check_id(split.ids[i], line_ref(path, i + 2));
        if (!seen.insert(split.ids[i]).second)
            throw ValidationError(line_ref(path, i + 2) + ": duplicate id '" +
                                  split.ids[i] + "'");
    }
    return split;
}

void write_cases(const std::string& path, const std::map<std::string, std::string>& cases) {
    std::ostringstream out;
    out << "# cases v1\n";
    for (const auto& [id, tag] : cases) {
        check_id(id, path);
        check_id(tag, path);
        out << id << '\t' << tag << "\n";
    }
    write_file_atomic(path, std::move(out).str());
}

std::map<std::string, std::string> read_cases(const std::string& path) {
    const std::vector<std::string> lines = split_lines(read_file(path));
    require_header(lines, path, "cases");
    std::map<std::string, std::string> cases;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::vector<std::string> f = split_fields(lines[i], '\t');
        if (f.size() != 2)
            throw ParseError(line_ref(path, i + 1) + ": expected 2 fields, got " +
                             std::to_string(f.size()));
        if (!cases.emplace(f[0], f[1]).second)
            throw ValidationError(line_ref(path, i + 1) + ": duplicate id '" + f[0] + "'");
    }
    return cases;
}

PairExample Corpus::resolve(const PairRecord& rec) const {
    return {rec.id, images.row_by_id(rec.image_id), texts.row_by_id(rec.text_id)};
}

AttributeExample Corpus::resolve(const AttributeRecord& rec) const {
    return {rec.id, images.row_by_id(rec.image_id), rec.attributes};
}

TripletExample Corpus::resolve(const TripletRecord& rec) const {
    return {rec.id, images.row_by_id(rec.reference_id), texts.row_by_id(rec.text_id),
            rec.target_id};
}

namespace {

namespace fs_names {
constexpr const char* images_bin = "images.bin";
constexpr const char* images_ids = "images.ids";
constexpr const char* texts_bin = "texts.bin";
constexpr const char* texts_ids = "texts.ids";
constexpr const char* pairs = "pairs.tsv";
constexpr const char* attributes = "attributes.tsv";
constexpr const char* triplets_train = "triplets_train.tsv";
constexpr const char* triplets_eval = "triplets_eval.tsv";
constexpr const char* split_full = "split.tsv";
constexpr const char* split_val = "split_val.tsv";
constexpr const char* cases = "cases.tsv";
}  // namespace fs_names

std::string join(const std::string& dir, const char* name) {
    return dir + "/" + name;
}

}  // namespace

void write_corpus(const std::string& dir, const Corpus& corpus) {
    write_embedding_table(join(dir, fs_names::images_bin), join(dir, fs_names::images_ids),
                          corpus.images);
    write_embedding_table(join(dir, fs_names::texts_bin), join(dir, fs_names::texts_ids),
                          corpus.texts);
    write_pairs(join(dir, fs_names::pairs), corpus.pairs);
    write_attributes(join(dir, fs_names::attributes), corpus.attributes,
                     corpus.num_attributes);
    write_triplets(join(dir, fs_names::triplets_train), corpus.triplets_train);
    write_triplets(join(dir, fs_names::triplets_eval), corpus.triplets_eval);
    write_split(join(dir, fs_names::split_full), corpus.split_full);
    write_split(join(dir, fs_names::split_val), corpus.split_val);
    if (!corpus.triplet_case.empty()) write_cases(join(dir, fs_names::cases), corpus.triplet_case);
}

Corpus load_corpus(const std::string& dir) {
    Corpus corpus;
    corpus.images = read_embedding_table(join(dir, fs_names::images_bin),
                                         join(dir, fs_names::images_ids));
    corpus.texts = read_embedding_table(join(dir, fs_names::texts_bin),
                                        join(dir, fs_names::texts_ids));
    corpus.pairs = read_pairs(join(dir, fs_names::pairs));
    auto [attrs, num_attributes] = read_attributes(join(dir, fs_names::attributes));
    corpus.attributes = std::move(attrs);
    corpus.num_attributes = num_attributes;
    corpus.triplets_train = read_triplets(join(dir, fs_names::triplets_train));
    corpus.triplets_eval = read_triplets(join(dir, fs_names::triplets_eval));
    corpus.split_full = read_split(join(dir, fs_names::split_full));
    corpus.split_val = read_split(join(dir, fs_names::split_val));
    namespace fs = std::filesystem;
    if (fs::exists(join(dir, fs_names::cases)))
        corpus.triplet_case = read_cases(join(dir, fs_names::cases));

    std::unordered_set<std::string> image_ids(corpus.images.ids.begin(),
                                              corpus.images.ids.end());
    std::unordered_set<std::string> text_ids(corpus.texts.ids.begin(),
                                             corpus.texts.ids.end());
    auto require = [](bool ok, const std::string& message) {
        if (!ok) throw ValidationError(message);
    };

    std::unordered_set<std::string> seen;
    const std::string pairs_path = join(dir, fs_names::pairs);
    for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
        const PairRecord& p = corpus.pairs[i];
        const std::string at = line_ref(pairs_path, i + 2);
        require(seen.insert(p.id).second, at + ": duplicate pair id '" + p.id + "'");
        require(image_ids.count(p.image_id) != 0,
                at + ": unknown image id '" + p.image_id + "'");
        require(text_ids.count(p.text_id) != 0, at + ": unknown text id '" + p.text_id + "'");
    }

    seen.clear();
    const std::string attrs_path = join(dir, fs_names::attributes);
    for (std::size_t i = 0; i < corpus.attributes.size(); ++i) {
        const AttributeRecord& r = corpus.attributes[i];
        const std::string at = line_ref(attrs_path, i + 2);
        require(seen.insert(r.id).second, at + ": duplicate record id '" + r.id + "'");
        require(image_ids.count(r.image_id) != 0,
                at + ": unknown image id '" + r.image_id + "'");
        for (Index a : r.attributes)
            require(a >= 0 && a < corpus.num_attributes,
                    at + ": attribute index " + std::to_string(a) + " outside [0, " +
                        std::to_string(corpus.num_attributes) + ")");
    }

    std::unordered_set<std::string> split_ids(corpus.split_full.ids.begin(),
                                              corpus.split_full.ids.end());
    for (const std::string& id : corpus.split_full.ids)
        require(image_ids.count(id) != 0,
                join(dir, fs_names::split_full) + ": unknown image id '" + id + "'");
    for (const std::string& id : corpus.split_val.ids)
        require(image_ids.count(id) != 0,
                join(dir, fs_names::split_val) + ": unknown image id '" + id + "'");

    seen.clear();
    for (const char* name : {fs_names::triplets_train, fs_names::triplets_eval}) {
        const std::string path = join(dir, name);
        const auto& triplets = name == fs_names::triplets_train ? corpus.triplets_train
                                                                : corpus.triplets_eval;
        for (std::size_t i = 0; i < triplets.size(); ++i) {
            const TripletRecord& t = triplets[i];
            const std::string at = line_ref(path, i + 2);
            require(seen.insert(t.id).second, at + ": duplicate triplet id '" + t.id + "'");
            require(image_ids.count(t.reference_id) != 0,
                    at + ": unknown reference id '" + t.reference_id + "'");
            require(text_ids.count(t.text_id) != 0,
                    at + ": unknown text id '" + t.text_id + "'");
            require(image_ids.count(t.target_id) != 0,
                    at + ": unknown target id '" + t.target_id + "'");
            require(split_ids.count(t.target_id) != 0,
                    at + ": target '" + t.target_id + "' missing from the candidate split");
        }
    }

    for (const auto& [id, tag] : corpus.triplet_case) {
        require(seen.count(id) != 0,
                join(dir, fs_names::cases) + ": unknown triplet id '" + id + "'");
        require(tag == kCaseDelta || tag == kCaseFullText || tag == kCaseNoText,
                join(dir, fs_names::cases) + ": unknown case tag '" + tag + "'");
    }
    return corpus;
}

void SynthConfig::validate() const {
    if (d_attr < 1) throw ValidationError("synth: d_attr must be at least 1");
    if (flips < 0 || flips > d_attr)
        throw ValidationError("synth: flips must lie in [0, d_attr]");
    if (clusters < 1) throw ValidationError("synth: clusters must be at least 1");
    if (num_pairs < 1 || num_attr_examples < 1 || num_triplets_train < 1 ||
        num_triplets_eval < 1)
        throw ValidationError("synth: corpus sizes must be at least 1");
    if (!(eval_cluster_fraction > 0.0 && eval_cluster_fraction < 1.0))
        throw ValidationError("synth: eval_cluster_fraction must lie in (0, 1)");
    if (noise_sigma < 0.0 || text_noise_sigma < 0.0)
        throw ValidationError("synth: noise levels must be non-negative");
    if (mix_delta < 0.0 || mix_full < 0.0 || mix_zero < 0.0 ||
        std::abs(mix_delta + mix_full + mix_zero - 1.0) > 1e-9)
        throw ValidationError("synth: mix weights must be non-negative and sum to 1");
}

namespace {

struct SynthCluster {
    Vector base, target;
    std::optional<Vector> confounder;
    std::vector<std::size_t> flip_positions;
    std::string base_id, target_id;
};

Vector draw_nonzero_attrs(Index d, Rng& rng) {
    Vector a(d);
    do {
        for (Index i = 0; i < d; ++i) a(i) = rng.bernoulli(0.5) ? 1.0 : 0.0;
    } while (a.sum() == 0.0);
    return a;
}

}  // namespace

Corpus synth_generate(const SynthConfig& config) {
    config.validate();
    Rng rng(config.seed);
    const Index d = config.d_attr;

    const Index eval_clusters = std::max<Index>(
        1, static_cast<Index>(std::llround(static_cast<double>(config.clusters) *
                                           config.eval_cluster_fraction)));
    if (eval_clusters >= config.clusters)
        throw ValidationError("synth: no training clusters left at this eval fraction");
    const Index train_clusters = config.clusters - eval_clusters;

    Corpus corpus;
    corpus.num_attributes = d;

    std::vector<SynthCluster> clusters;
    std::vector<Vector> item_attrs;
    std::vector<std::string> item_ids;
    auto add_item = [&](const Vector& attrs) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "item%05d", static_cast<int>(item_ids.size()));
        item_ids.emplace_back(buf);
        item_attrs.push_back(attrs);
        return item_ids.back();
    };

    for (Index c = 0; c < config.clusters; ++c) {
        SynthCluster cluster;
        cluster.base = draw_nonzero_attrs(d, rng);
        if (config.flips == 0) {
            cluster.target = cluster.base;
        } else {
            while (true) {
                cluster.flip_positions = rng.sample_without_replacement(
                    static_cast<std::size_t>(d), static_cast<std::size_t>(config.flips));
                cluster.target = cluster.base;
                for (Index pos : cluster.flip_positions)
                    cluster.target(pos) = 1.0 - cluster.target(pos);
                if (cluster.target.sum() == 0.0) continue;
                if (config.flips >= 2) {
                    Vector conf = cluster.base;
                    conf(cluster.flip_positions[0]) = 1.0 - conf(cluster.flip_positions[0]);
                    if (conf.sum() == 0.0) continue;
                    cluster.confounder = std::move(conf);
                }
                break;
            }
        }
        cluster.base_id = add_item(cluster.base);
        cluster.target_id =
            config.flips == 0 ? cluster.base_id : add_item(cluster.target);
        if (cluster.confounder) add_item(*cluster.confounder);
        clusters.push_back(std::move(cluster));
    }

    // Image features: attribute vector plus Gaussian noise, one row per item.
    corpus.images.ids = item_ids;
    corpus.images.values.resize(static_cast<Index>(item_attrs.size()), d);
    for (std::size_t i = 0; i < item_attrs.size(); ++i)
        for (Index j = 0; j < d; ++j)
            corpus.images.values(static_cast<Index>(i), j) =
                item_attrs[i](j) + rng.normal(0.0, config.noise_sigma);

    std::vector<Vector> text_rows;
    auto add_text = [&](const Vector& features) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "text%06d", static_cast<int>(text_rows.size()));
        text_rows.push_back(features);
        corpus.texts.ids.emplace_back(buf);
        return corpus.texts.ids.back();
    };
    auto noisy = [&](const Vector& base) {
        Vector v = base;
        for (Index j = 0; j < d; ++j) v(j) += rng.normal(0.0, config.text_noise_sigma);
        return v;
    };

    for (Index p = 0; p < config.num_pairs; ++p) {
        const std::size_t item = rng.uniform_index(item_attrs.size());
        char buf[32];
        std::snprintf(buf, sizeof buf, "pair%05d", static_cast<int>(p));
        corpus.pairs.push_back({buf, item_ids[item], add_text(noisy(item_attrs[item]))});
    }

    for (Index a = 0; a < config.num_attr_examples; ++a) {
        const std::size_t item = rng.uniform_index(item_attrs.size());
        AttributeRecord rec;
        char buf[32];
        std::snprintf(buf, sizeof buf, "attr%05d", static_cast<int>(a));
        rec.id = buf;
        rec.image_id = item_ids[item];
        for (Index j = 0; j < d; ++j)
            if (item_attrs[item](j) == 1.0) rec.attributes.push_back(j);
        corpus.attributes.push_back(std::move(rec));
    }

    auto make_triplets = [&](Index count, Index cluster_lo, Index cluster_hi,
                             const char* id_prefix, std::vector<TripletRecord>& out) {
        for (Index t = 0; t < count; ++t) {
            const std::size_t c =
                static_cast<std::size_t>(cluster_lo) +
                rng.uniform_index(static_cast<std::size_t>(cluster_hi - cluster_lo));
            const SynthCluster& cluster = clusters[c];
            const double u = rng.uniform();
            std::string tag;
            Vector text = Vector::Zero(d);
            if (u < config.mix_delta) {
                tag = kCaseDelta;
                for (Index pos : cluster.flip_positions)
                    text(pos) = cluster.target(pos) - cluster.base(pos);
            } else if (u < config.mix_delta + config.mix_full) {
                tag = kCaseFullText;
                text = cluster.target;
            } else {
                tag = kCaseNoText;
            }
            char buf[32];
            std::snprintf(buf, sizeof buf, "%s%05d", id_prefix, static_cast<int>(t));
            TripletRecord rec{buf, cluster.base_id, add_text(noisy(text)),
                              cluster.target_id};
            corpus.triplet_case.emplace(rec.id, tag);
            out.push_back(std::move(rec));
        }
    };
    make_triplets(config.num_triplets_train, 0, train_clusters, "trip", corpus.triplets_train);
    make_triplets(config.num_triplets_eval, train_clusters, config.clusters, "eval",
                  corpus.triplets_eval);

    corpus.texts.values.resize(static_cast<Index>(text_rows.size()), d);
    for (std::size_t i = 0; i < text_rows.size(); ++i)
        corpus.texts.values.row(static_cast<Index>(i)) = text_rows[i].transpose();

    corpus.split_full.name = "original";
    corpus.split_full.ids = item_ids;
    corpus.split_val.name = "val";
    for (Index c = train_clusters; c < config.clusters; ++c) {
        const SynthCluster& cluster = clusters[c];
        corpus.split_val.ids.push_back(cluster.base_id);
        if (cluster.target_id != cluster.base_id)
            corpus.split_val.ids.push_back(cluster.target_id);
    }
    return corpus;
}

}  // namespace cr
