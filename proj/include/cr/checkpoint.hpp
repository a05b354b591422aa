#ifndef CR_CHECKPOINT_HPP
#define CR_CHECKPOINT_HPP

#include <string>
#include <vector>

#include "cr/types.hpp"

namespace cr {

/**
 * One named tensor inside a checkpoint. Matrices are stored with
 * dims = {rows, cols} and row-major values; scalars have rank 0.
 */
struct TensorRecord {
    std::string name;
    std::vector<Index> dims;
    std::vector<double> values;
};

/**
 * Binary parameter container: magic "CRPARAM1", then per-tensor records of
 * name length (u32 LE), name bytes, rank (u32 LE), dims (u32 LE each), and
 * values (f64 LE). Round-trips bit-exactly.
 */
struct Checkpoint {
    std::vector<TensorRecord> tensors;

    const TensorRecord* find(const std::string& name) const;
    void add_scalar(const std::string& name, double value);
    void add_vector(const std::string& name, const Vector& v);
    void add_matrix(const std::string& name, const Matrix& m);
    double get_scalar(const std::string& name) const;
    Vector get_vector(const std::string& name) const;
    Matrix get_matrix(const std::string& name) const;
};

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace cr

#endif
