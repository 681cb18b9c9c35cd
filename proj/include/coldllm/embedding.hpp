#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace coldllm {

// Row-major real matrix. Values are held in double precision; the on-disk
// CEMB format stores 32-bit floats.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    EmbeddingTable(std::size_t rows, std::size_t dim);
    EmbeddingTable(std::size_t rows, std::size_t dim, std::vector<double> values);

    std::size_t rows() const { return rows_; }
    std::size_t dim() const { return dim_; }

    std::span<double> row(std::size_t r) { return {values_.data() + r * dim_, dim_}; }
    std::span<const double> row(std::size_t r) const { return {values_.data() + r * dim_, dim_}; }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    bool operator==(const EmbeddingTable&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> values_;
};

// Entries i.i.d. N(0, stddev^2), reproducible per seed.
EmbeddingTable init_embeddings(std::size_t rows, std::size_t dim, std::uint64_t seed, double stddev = 0.01);

// CEMB layout, little-endian:
//   char[4] "CEMB" | u32 version (1) | u64 rows | u32 dim | rows*dim f32
inline constexpr std::uint32_t kCembVersion = 1;

void write_embeddings(std::ostream& out, const EmbeddingTable& table);
EmbeddingTable read_embeddings(std::istream& in);
void write_embeddings(std::ostream& out, std::size_t rows, std::size_t dim, std::span<const float> values);
std::vector<float> read_embeddings_f32(std::istream& in, std::size_t& rows, std::size_t& dim);

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable load_embeddings(const std::filesystem::path& path);

// Debug dump: one row per line, "<id>\t<v0> <v1> ...".
void export_embeddings_tsv(const EmbeddingTable& table, const std::filesystem::path& path);

}  // namespace coldllm
