#include "coldllm/embedding.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>

#include "coldllm/random.hpp"
#include "coldllm/types.hpp"

static_assert(std::endian::native == std::endian::little, "CEMB I/O assumes a little-endian host");

namespace coldllm {

namespace {

constexpr std::array<char, 4> kMagic{'C', 'E', 'M', 'B'};

template <class T>
void put(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& in) {
    T value{};
    if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw ValidationError("truncated CEMB header");
    return value;
}

}  // namespace

EmbeddingTable::EmbeddingTable(std::size_t rows, std::size_t dim) : rows_(rows), dim_(dim), values_(rows * dim, 0.0) {}

EmbeddingTable::EmbeddingTable(std::size_t rows, std::size_t dim, std::vector<double> values)
    : rows_(rows), dim_(dim), values_(std::move(values)) {
    if (values_.size() != rows * dim) throw std::invalid_argument("embedding values do not match rows*dim");
}

EmbeddingTable init_embeddings(std::size_t rows, std::size_t dim, std::uint64_t seed, double stddev) {
    if (dim < 1) throw ValidationError("embedding dim must be >= 1");
    EmbeddingTable table(rows, dim);
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, stddev);
    for (auto& v : table.values()) v = normal(rng);
    return table;
}

void write_embeddings(std::ostream& out, std::size_t rows, std::size_t dim, std::span<const float> values) {
    if (values.size() != rows * dim) throw std::invalid_argument("embedding values do not match rows*dim");
    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, kCembVersion);
    put<std::uint64_t>(out, rows);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(dim));
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    if (!out) throw std::runtime_error("failed writing CEMB data");
}

void write_embeddings(std::ostream& out, const EmbeddingTable& table) {
    std::vector<float> values(table.values().begin(), table.values().end());
    write_embeddings(out, table.rows(), table.dim(), values);
}

std::vector<float> read_embeddings_f32(std::istream& in, std::size_t& rows, std::size_t& dim) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw ValidationError("not a CEMB file (bad magic)");
    const auto version = get<std::uint32_t>(in);
    if (version != kCembVersion) throw ValidationError("unsupported CEMB version " + std::to_string(version));
    rows = get<std::uint64_t>(in);
    dim = get<std::uint32_t>(in);
    if (dim == 0) throw ValidationError("CEMB dim is zero");
    std::vector<float> values(rows * dim);
    if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float))))
        throw ValidationError("truncated CEMB payload");
    return values;
}

EmbeddingTable read_embeddings(std::istream& in) {
    std::size_t rows = 0, dim = 0;
    auto values = read_embeddings_f32(in, rows, dim);
    return EmbeddingTable(rows, dim, std::vector<double>(values.begin(), values.end()));
}

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_embeddings(out, table);
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    return read_embeddings(in);
}

void export_embeddings_tsv(const EmbeddingTable& table, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << std::setprecision(9);
    for (std::size_t r = 0; r < table.rows(); ++r) {
        out << r << '\t';
        auto row = table.row(r);
        for (std::size_t k = 0; k < row.size(); ++k) {
            if (k) out << ' ';
            out << static_cast<float>(row[k]);
        }
        out << '\n';
    }
}

}  // namespace coldllm
