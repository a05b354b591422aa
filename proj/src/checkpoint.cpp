#include "cr/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <limits>
#include <unordered_set>

#include "cr/error.hpp"
#include "cr/io.hpp"

namespace cr {

namespace {

constexpr char kMagic[] = "CRPARAM1";

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

std::size_t element_count(const std::vector<Index>& dims, const std::string& name) {
    std::size_t n = 1;
    for (Index d : dims) {
        if (d < 1) throw ShapeError("checkpoint tensor '" + name + "': non-positive dim");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

}  // namespace

const TensorRecord* Checkpoint::find(const std::string& name) const {
    for (const TensorRecord& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

void Checkpoint::add_scalar(const std::string& name, double value) {
    tensors.push_back({name, {}, {value}});
}

void Checkpoint::add_vector(const std::string& name, const Vector& v) {
    if (v.size() < 1) throw ShapeError("checkpoint tensor '" + name + "': empty vector");
    tensors.push_back({name, {v.size()}, {v.data(), v.data() + v.size()}});
}

void Checkpoint::add_matrix(const std::string& name, const Matrix& m) {
    if (m.rows() < 1 || m.cols() < 1)
        throw ShapeError("checkpoint tensor '" + name + "': empty matrix");
    TensorRecord rec{name, {m.rows(), m.cols()}, {}};
    rec.values.reserve(static_cast<std::size_t>(m.size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) rec.values.push_back(m(i, j));
    tensors.push_back(std::move(rec));
}

double Checkpoint::get_scalar(const std::string& name) const {
    const TensorRecord* t = find(name);
    if (!t) throw ValidationError("checkpoint: missing tensor '" + name + "'");
    if (!t->dims.empty() || t->values.size() != 1)
        throw ShapeError("checkpoint: tensor '" + name + "' is not a scalar");
    return t->values[0];
}

Vector Checkpoint::get_vector(const std::string& name) const {
    const TensorRecord* t = find(name);
    if (!t) throw ValidationError("checkpoint: missing tensor '" + name + "'");
    if (t->dims.size() != 1)
        throw ShapeError("checkpoint: tensor '" + name + "' is not a vector");
    Vector v(t->dims[0]);
    for (Index i = 0; i < v.size(); ++i) v(i) = t->values[static_cast<std::size_t>(i)];
    return v;
}

Matrix Checkpoint::get_matrix(const std::string& name) const {
    const TensorRecord* t = find(name);
    if (!t) throw ValidationError("checkpoint: missing tensor '" + name + "'");
    if (t->dims.size() != 2)
        throw ShapeError("checkpoint: tensor '" + name + "' is not a matrix");
    Matrix m(t->dims[0], t->dims[1]);
    std::size_t k = 0;
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = t->values[k++];
    return m;
}

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
    std::string out;
    out.append(kMagic, 8);
    std::unordered_set<std::string> seen;
    for (const TensorRecord& t : checkpoint.tensors) {
        if (t.name.empty() || t.name.size() > std::numeric_limits<std::uint32_t>::max())
            throw ValidationError("checkpoint: invalid tensor name");
        if (!seen.insert(t.name).second)
            throw ValidationError("checkpoint: duplicate tensor '" + t.name + "'");
        if (t.values.size() != element_count(t.dims, t.name))
            throw ShapeError("checkpoint tensor '" + t.name + "': dims do not match values");
        put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out += t.name;
        put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
        for (Index d : t.dims) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : t.values) put_f64(out, v);
    }
    write_file_atomic(path, out);
}

Checkpoint read_checkpoint(const std::string& path) {
    const std::string in = read_file(path);
    if (in.size() < 8 || in.compare(0, 8, kMagic) != 0)
        throw ParseError(path + ": bad magic, expected CRPARAM1");
    Checkpoint checkpoint;
    std::size_t off = 8;
    std::unordered_set<std::string> seen;
    while (off < in.size()) {
        TensorRecord rec;
        const std::uint32_t name_len = get_u32(in, off, path);
        if (off + name_len > in.size()) throw ParseError(path + ": truncated");
        rec.name = in.substr(off, name_len);
        off += name_len;
        if (rec.name.empty() || !seen.insert(rec.name).second)
            throw ParseError(path + ": empty or duplicate tensor name");
        const std::uint32_t rank = get_u32(in, off, path);
        for (std::uint32_t r = 0; r < rank; ++r) {
            const std::uint32_t d = get_u32(in, off, path);
            if (d < 1) throw ParseError(path + ": non-positive dim in '" + rec.name + "'");
            rec.dims.push_back(static_cast<Index>(d));
        }
        const std::size_t n = element_count(rec.dims, rec.name);
        rec.values.reserve(n);
        for (std::size_t k = 0; k < n; ++k) rec.values.push_back(get_f64(in, off, path));
        checkpoint.tensors.push_back(std::move(rec));
    }
    return checkpoint;
}

}  // namespace cr
