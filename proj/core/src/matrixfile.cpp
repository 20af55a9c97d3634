#include "dnadiff/matrixfile.hpp"

#include <fstream>
#include <sstream>

#include "dnadiff/wire.hpp"

namespace dnadiff {

namespace {
constexpr char kMatrixMagic[4] = {'D', 'D', 'M', 'X'};
}

void save_matrix(const std::string& path, const Eigen::MatrixXf& m) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os.write(kMatrixMagic, 4);
    wire::put_u64(os, static_cast<uint64_t>(m.rows()));
    wire::put_u64(os, static_cast<uint64_t>(m.cols()));
    for (int64_t i = 0; i < m.rows(); ++i)
        for (int64_t j = 0; j < m.cols(); ++j) wire::put_f32(os, m(i, j));
    if (!os) throw IoError("write failed for '" + path + "'");
}

Eigen::MatrixXf load_matrix(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMatrixMagic, 4) != 0)
        throw ParseError("'" + path + "' is not a DDMX matrix file (bad magic)");
    uint64_t rows = wire::get_u64(is, "matrix rows");
    uint64_t cols = wire::get_u64(is, "matrix cols");
    if (rows > (1ull << 32) || cols > (1ull << 32) || rows * cols > (1ull << 34))
        throw ParseError("implausible matrix dimensions in '" + path + "'");
    Eigen::MatrixXf m(static_cast<int64_t>(rows), static_cast<int64_t>(cols));
    for (uint64_t i = 0; i < rows; ++i)
        for (uint64_t j = 0; j < cols; ++j)
            m(static_cast<int64_t>(i), static_cast<int64_t>(j)) = wire::get_f32(is, "matrix payload");
    return m;
}

void save_matrix_csv(const std::string& path, const Eigen::MatrixXf& m) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os.precision(9);
    for (int64_t i = 0; i < m.rows(); ++i) {
        for (int64_t j = 0; j < m.cols(); ++j) {
            if (j) os << ',';
            os << m(i, j);
        }
        os << '\n';
    }
    if (!os) throw IoError("write failed for '" + path + "'");
}

Eigen::MatrixXf load_matrix_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open '" + path + "'");
    std::vector<std::vector<float>> rows;
    std::string line;
    size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<float> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stof(cell));
            } catch (const std::exception&) {
                throw ParseError(path + ":" + std::to_string(line_no) + ": unparsable cell '" + cell + "'");
            }
        }
        if (!rows.empty() && row.size() != rows[0].size())
            throw ParseError(path + ":" + std::to_string(line_no) + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) return Eigen::MatrixXf(0, 0);
    Eigen::MatrixXf m(static_cast<int64_t>(rows.size()), static_cast<int64_t>(rows[0].size()));
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<int64_t>(i), static_cast<int64_t>(j)) = rows[i][j];
    return m;
}

Eigen::MatrixXf load_matrix_any(const std::string& path) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) return load_matrix_csv(path);
    return load_matrix(path);
}

}  // namespace dnadiff
