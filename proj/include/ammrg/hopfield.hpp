#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ammrg/numerics.hpp"

namespace ammrg::hopfield {

/// Stored patterns, one per row. Never empty; immutable once built.
class PatternMatrix {
public:
    /// Throws EmptyMemoryError when `patterns` has no rows.
    explicit PatternMatrix(Mat64 patterns);

    std::size_t count() const noexcept { return patterns_.rows(); }
    std::size_t dim() const noexcept { return patterns_.cols(); }
    std::span<const double> pattern(std::size_t j) const { return patterns_.row(j); }
    const Mat64& matrix() const noexcept { return patterns_; }

private:
    Mat64 patterns_;
};

enum class Mode {
    gradient, ///< explicit descent on the energy with step size `step_size`
    cccp,     ///< fixed-point update candidate := sum_j alpha_j m_j
};

struct HopfieldConfig {
    double beta = 4.0;
    Mode mode = Mode::cccp;
    double step_size = 0.01;
    std::size_t max_iters = 32;
    double tolerance = 1e-6;

    /// beta >= 0 (zero is the degenerate uniform-attention limit), step_size > 0,
    /// max_iters >= 1, tolerance > 0. Throws InvalidArgument.
    void validate() const;
};

struct RetrievalResult {
    Vec64 updated;
    /// Association weights used for the final update. In cccp mode
    /// `updated == sum_j weights[j] * m_j`.
    Vec64 weights;
    /// Energy at the initial candidate followed by one entry per update.
    std::vector<double> energy_trace;
    std::size_t iterations = 0;

    bool operator==(const RetrievalResult&) const = default;
};

/// ||candidate - query||^2 - log sum_j exp(beta <candidate, m_j> / sqrt(d))
double energy(const Vec64& candidate, const Vec64& query, const PatternMatrix& memory, double beta);

/// softmax_j(beta * <candidate, m_j> / sqrt(d)). beta = 0 gives the uniform distribution.
Vec64 association_weights(const Vec64& candidate, const PatternMatrix& memory, double beta);

/// Exact derivative of energy(): 2(candidate - query) - (beta / sqrt(d)) sum_j alpha_j m_j.
Vec64 energy_gradient(const Vec64& candidate, const Vec64& query, const PatternMatrix& memory, double beta);

/// One explicit descent step. Requires config.mode == Mode::gradient.
Vec64 update_step(const Vec64& candidate, const Vec64& query, const PatternMatrix& memory,
                  const HopfieldConfig& config);

/// Iterate from candidate = query until the update norm drops below
/// config.tolerance or config.max_iters updates have been applied.
RetrievalResult retrieve(const Vec64& query, const PatternMatrix& memory, const HopfieldConfig& config);

/// Query map into the association space and value map out of the memory
/// space. An empty optional stands for the identity.
struct HopfieldProjections {
    std::optional<Mat64> query_proj; ///< d_assoc x d_in
    std::optional<Mat64> value_proj; ///< d_out x d_mem

    static HopfieldProjections identity() { return {}; }

    /// Output width for a memory of width `d_mem`.
    std::size_t d_out(std::size_t d_mem) const { return value_proj ? value_proj->rows() : d_mem; }
};

struct Association {
    Vec64 output;
    RetrievalResult retrieval;
};

/// Project the query, retrieve against `memory`, and map sum_j alpha_j m_j
/// through the value projection.
Association associate(const Vec64& query, const PatternMatrix& memory, const HopfieldProjections& proj,
                      const HopfieldConfig& config);

Vec64 hopfield_apply(const Vec64& query, const PatternMatrix& memory, const HopfieldProjections& proj,
                     const HopfieldConfig& config);

/// Which memories take part in enhancement (ablation wiring).
enum class Branches { both, visual_only, report_only };

struct DualMemory {
    const PatternMatrix& visual;
    const PatternMatrix& report;
    const HopfieldProjections& visual_proj;
    const HopfieldProjections& report_proj;
};

/// concat(V-branch, R-branch), or the single active half under an ablation.
Vec64 dual_retrieve(const Vec64& query, const DualMemory& banks, const HopfieldConfig& config,
                    Branches branches = Branches::both);

struct EnhancedBatch {
    /// Row 2i is the visual half for query i and row 2i+1 the report half
    /// (one row per query when a branch is ablated).
    Mat64 features;
    std::vector<RetrievalResult> visual;
    std::vector<RetrievalResult> report;
};

inline constexpr std::size_t kDefaultQueryCount = 14;

/// Stack dual_retrieve over exactly `expected_queries` disease queries.
EnhancedBatch batch_enhance_detailed(std::span<const Vec64> queries, const DualMemory& banks,
                                     const HopfieldConfig& config, Branches branches = Branches::both,
                                     std::size_t expected_queries = kDefaultQueryCount);

Mat64 batch_enhance(std::span<const Vec64> queries, const DualMemory& banks, const HopfieldConfig& config,
                    Branches branches = Branches::both, std::size_t expected_queries = kDefaultQueryCount);

} // namespace ammrg::hopfield
