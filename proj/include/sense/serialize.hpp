#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "sense/pixel_loss.hpp"
#include "sense/query_loss.hpp"
#include "sense/transport.hpp"

namespace sense {

// Parse failure with the byte offset where the input stopped making sense.
struct ParseError : std::runtime_error {
    std::size_t byte_offset;
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (byte " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
};

// Binary formats, all little-endian:
//   OTCM: "OTCM" u16 version=1 u32 n u32 k, n*k f64 row-major
//   OTPL: ditto with magic "OTPL", then u32 iterations_used, f64 final_violation
//   PSLG: "PSLG" u16 version=1 u32 n u32 k u32 batch u32 height u32 width
//         f64 gamma, n*k f64 q row-major, ceil(n/8) gate bytes LSB-first
//   QSET: "QSET" u32 N u32 k u32 H u32 W, per query (k+1) f64 scores then H*W f32 mask
//   PRBT: "PRBT" u16 version=1 u32 batch u32 classes u32 height u32 width,
//         b*k*h*w f64 in (batch, class, row, column) order
void write_otcm(const std::string& path, const Eigen::Ref<const Matrix>& cost);
Matrix read_otcm(const std::string& path);

struct PlanFile {
    Matrix plan;
    std::uint32_t iterations_used = 0;
    double final_violation = 0.0;
};
void write_otpl(const std::string& path, const Eigen::Ref<const Matrix>& plan,
                std::uint32_t iterations_used, double final_violation);
PlanFile read_otpl(const std::string& path);

// Cost CSV: header row "n,k", then n rows of k comma-separated values.
void write_cost_csv(const std::string& path, const Eigen::Ref<const Matrix>& cost);
Matrix read_cost_csv(const std::string& path);

// Dispatch on the OTCM magic, falling back to CSV.
Matrix read_cost_any(const std::string& path);

void write_pslg(const std::string& path, const PseudoLabelGrid& grid);
PseudoLabelGrid read_pslg(const std::string& path);

void write_qset(const std::string& path, const QuerySet& set);
QuerySet read_qset(const std::string& path);

void write_prbt(const std::string& path, const ProbTensor& tensor);
ProbTensor read_prbt(const std::string& path);

// FNV-1a, for input fingerprints in run manifests.
std::uint64_t fnv1a_bytes(const void* data, std::size_t size);
std::uint64_t fnv1a_file(const std::string& path);

}  // namespace sense
