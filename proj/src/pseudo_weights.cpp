#include "cr/pseudo_weights.hpp"

#include <cstdio>
#include <sstream>

#include "cr/error.hpp"
#include "cr/io.hpp"
#include "cr/vecmath.hpp"

namespace cr {

void RankTriple::validate() const {
    if (N < 1) throw ValidationError("rank triple: N must be at least 1");
    for (std::int64_t r : {r_image, r_text, r_fuse})
        if (r < 1 || r > N)
            throw ValidationError("rank triple: rank " + std::to_string(r) +
                                  " outside [1, " + std::to_string(N) + "]");
}

double inverse_norm_rank(std::int64_t r, std::int64_t N) {
    if (N < 1 || r < 1 || r > N)
        throw ValidationError("inverse_norm_rank: rank " + std::to_string(r) +
                              " outside [1, " + std::to_string(N) + "]");
    return static_cast<double>(N) / static_cast<double>(r);
}

PseudoWeight pseudo_weight(const RankTriple& ranks, double tau3) {
    ranks.validate();
    if (!(tau3 > 0.0)) throw ValidationError("pseudo_weight: tau3 must be positive");
    const double s_image = inverse_norm_rank(ranks.r_image, ranks.N);
    const double s_text = inverse_norm_rank(ranks.r_text, ranks.N);
    const double s_fuse = inverse_norm_rank(ranks.r_fuse, ranks.N);
    Vector ratios(2);
    ratios << s_image / s_fuse, s_text / s_fuse;
    const Vector w = softmax(ratios, tau3);
    return {w(0), w(1)};
}

const PseudoWeight* PseudoLabelTable::find(const std::string& triplet_id) const {
    for (const PseudoLabelRecord& rec : records)
        if (rec.triplet_id == triplet_id) return &rec.w;
    return nullptr;
}

std::string format_sig9(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return buf;
}

void write_pseudo_labels(const std::string& path, const PseudoLabelTable& table) {
    std::ostringstream out;
    out << "# pseudo_labels v1 tau3=" << format_sig9(table.tau3) << " N=" << table.N
        << "\n";
    for (const PseudoLabelRecord& rec : table.records) {
        if (rec.triplet_id.empty() || rec.triplet_id.find('\t') != std::string::npos ||
            rec.triplet_id.find('\n') != std::string::npos)
            throw ValidationError("pseudo labels: invalid triplet id");
        out << rec.triplet_id << '\t' << format_sig9(rec.w.w_image) << '\t'
            << format_sig9(rec.w.w_text) << "\n";
    }
    write_file_atomic(path, std::move(out).str());
}

PseudoLabelTable read_pseudo_labels(const std::string& path) {
    const std::vector<std::string> lines = split_lines(read_file(path));
    if (lines.empty()) throw ParseError(path + ": empty label file");
    PseudoLabelTable table;
    {
        std::istringstream header(lines[0]);
        std::string hash, kind, version, tau_field, n_field, extra;
        header >> hash >> kind >> version >> tau_field >> n_field;
        const bool shape_ok = hash == "#" && kind == "pseudo_labels" && version == "v1" &&
                              tau_field.rfind("tau3=", 0) == 0 &&
                              n_field.rfind("N=", 0) == 0 && !(header >> extra);
        if (!shape_ok) throw ParseError(path + ":1: bad header '" + lines[0] + "'");
        table.tau3 = parse_real(tau_field.substr(5), path + ":1");
        table.N = parse_int(n_field.substr(2), path + ":1");
    }
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) throw ParseError(path + ":" + std::to_string(i + 1) + ": empty line");
        const std::vector<std::string> f = split_fields(lines[i], '\t');
        if (f.size() != 3)
            throw ParseError(path + ":" + std::to_string(i + 1) + ": expected 3 fields, got " +
                             std::to_string(f.size()));
        const std::string where = path + ":" + std::to_string(i + 1);
        PseudoLabelRecord rec;
        rec.triplet_id = f[0];
        rec.w.w_image = parse_real(f[1], where);
        rec.w.w_text = parse_real(f[2], where);
        table.records.push_back(std::move(rec));
    }
    return table;
}

}  // namespace cr
