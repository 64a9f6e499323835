#include "ammrg/hopfield.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "ammrg/errors.hpp"

namespace ammrg::hopfield {

namespace {

void require_dim(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(want) + ", got " +
                             std::to_string(got));
    }
}

/// <candidate, m_j> / sqrt(d) for every stored pattern.
std::vector<double> similarity_scores(const Vec64& candidate, const PatternMatrix& memory) {
    require_dim(candidate.dim(), memory.dim(), "hopfield scores");
    const double scale = 1.0 / std::sqrt(static_cast<double>(memory.dim()));
    std::vector<double> scores(memory.count());
    for (std::size_t j = 0; j < memory.count(); ++j) {
        scores[j] = dot(candidate.view(), memory.pattern(j)) * scale;
    }
    return scores;
}

Vec64 weighted_sum(const Vec64& weights, const PatternMatrix& memory) {
    std::vector<double> out(memory.dim(), 0.0);
    for (std::size_t j = 0; j < memory.count(); ++j) {
        axpy(weights[j], memory.pattern(j), out);
    }
    return Vec64(std::move(out));
}

double squared_distance(const Vec64& a, const Vec64& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        const double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return acc;
}

Vec64 gradient_with_weights(const Vec64& candidate, const Vec64& query, const PatternMatrix& memory,
                            double beta, const Vec64& alpha) {
    const double coeff = beta / std::sqrt(static_cast<double>(memory.dim()));
    std::vector<double> grad(candidate.dim());
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = 2.0 * (candidate[i] - query[i]);
    for (std::size_t j = 0; j < memory.count(); ++j) {
        axpy(-coeff * alpha[j], memory.pattern(j), grad);
    }
    return Vec64(std::move(grad));
}

} // namespace

PatternMatrix::PatternMatrix(Mat64 patterns) : patterns_(std::move(patterns)) {
    if (patterns_.rows() == 0) {
        throw EmptyMemoryError("pattern matrix has no stored patterns");
    }
    if (patterns_.cols() == 0) {
        throw DimensionError("pattern matrix has zero-width patterns");
    }
}

void HopfieldConfig::validate() const {
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidArgument("beta must be finite and >= 0");
    if (!(step_size > 0.0)) throw InvalidArgument("step_size must be > 0");
    if (max_iters < 1) throw InvalidArgument("max_iters must be >= 1");
    if (!(tolerance > 0.0)) throw InvalidArgument("tolerance must be > 0");
}

double energy(const Vec64& candidate, const Vec64& query, const PatternMatrix& memory, double beta) {
    require_dim(query.dim(), candidate.dim(), "energy");
    auto scores = similarity_scores(candidate, memory);
    for (double& s : scores) s *= beta;
    return squared_distance(candidate, query) - log_sum_exp(scores);
}

Vec64 association_weights(const Vec64& candidate, const PatternMatrix& memory, double beta) {
    auto scores = similarity_scores(candidate, memory);
    for (double& s : scores) s *= beta;
    return softmax(scores);
}

Vec64 energy_gradient(const Vec64& candidate, const Vec64& query, const PatternMatrix& memory, double beta) {
    require_dim(query.dim(), candidate.dim(), "energy_gradient");
    const Vec64 alpha = association_weights(candidate, memory, beta);
    return gradient_with_weights(candidate, query, memory, beta, alpha);
}

Vec64 update_step(const Vec64& candidate, const Vec64& query, const PatternMatrix& memory,
                  const HopfieldConfig& config) {
    if (config.mode != Mode::gradient) {
        throw InvalidArgument("update_step requires gradient mode");
    }
    const Vec64 grad = energy_gradient(candidate, query, memory, config.beta);
    std::vector<double> next(candidate.begin(), candidate.end());
    axpy(-config.step_size, grad.view(), next);
    return Vec64(std::move(next));
}

RetrievalResult retrieve(const Vec64& query, const PatternMatrix& memory, const HopfieldConfig& config) {
    config.validate();
    require_dim(query.dim(), memory.dim(), "retrieve");

    RetrievalResult result;
    result.updated = query;
    result.energy_trace.push_back(energy(query, query, memory, config.beta));

    for (std::size_t it = 1; it <= config.max_iters; ++it) {
        const Vec64& candidate = result.updated;
        Vec64 alpha = association_weights(candidate, memory, config.beta);

        std::vector<double> next;
        if (config.mode == Mode::cccp) {
            next = weighted_sum(alpha, memory).values();
        } else {
            const Vec64 grad = gradient_with_weights(candidate, query, memory, config.beta, alpha);
            next.assign(candidate.begin(), candidate.end());
            axpy(-config.step_size, grad.view(), next);
        }
        for (double x : next) {
            if (!std::isfinite(x)) {
                throw NumericError("retrieve: non-finite candidate at iteration " + std::to_string(it));
            }
        }

        Vec64 next_vec(std::move(next));
        const double delta = std::sqrt(squared_distance(next_vec, candidate));
        result.updated = std::move(next_vec);
        result.weights = std::move(alpha);
        result.iterations = it;
        const double e = energy(result.updated, query, memory, config.beta);
        if (!std::isfinite(e)) {
            throw NumericError("retrieve: non-finite energy at iteration " + std::to_string(it));
        }
        result.energy_trace.push_back(e);
        if (delta < config.tolerance) break;
    }
    return result;
}

namespace {

/// Retrieval plus the memory-space combination, before the value projection.
std::pair<Vec64, RetrievalResult> associate_unprojected(const Vec64& query, const PatternMatrix& memory,
                                                        const HopfieldProjections& proj,
                                                        const HopfieldConfig& config) {
    Vec64 projected;
    if (proj.query_proj) {
        require_dim(query.dim(), proj.query_proj->cols(), "hopfield query projection input");
        require_dim(proj.query_proj->rows(), memory.dim(), "hopfield query projection output");
        projected = matvec(*proj.query_proj, query);
    } else {
        require_dim(query.dim(), memory.dim(), "hopfield query");
        projected = query;
    }
    if (proj.value_proj) require_dim(proj.value_proj->cols(), memory.dim(), "hopfield value projection input");

    RetrievalResult retrieval = retrieve(projected, memory, config);
    // In cccp mode the retrieved state already is the convex combination.
    Vec64 combined = config.mode == Mode::cccp ? retrieval.updated : weighted_sum(retrieval.weights, memory);
    return {std::move(combined), std::move(retrieval)};
}

} // namespace

Association associate(const Vec64& query, const PatternMatrix& memory, const HopfieldProjections& proj,
                      const HopfieldConfig& config) {
    auto [combined, retrieval] = associate_unprojected(query, memory, proj, config);
    Vec64 output = proj.value_proj ? matvec(*proj.value_proj, combined) : std::move(combined);
    return {std::move(output), std::move(retrieval)};
}

Vec64 hopfield_apply(const Vec64& query, const PatternMatrix& memory, const HopfieldProjections& proj,
                     const HopfieldConfig& config) {
    return associate(query, memory, proj, config).output;
}

Vec64 dual_retrieve(const Vec64& query, const DualMemory& banks, const HopfieldConfig& config, Branches branches) {
    switch (branches) {
    case Branches::visual_only:
        return hopfield_apply(query, banks.visual, banks.visual_proj, config);
    case Branches::report_only:
        return hopfield_apply(query, banks.report, banks.report_proj, config);
    case Branches::both:
        break;
    }
    return concat(hopfield_apply(query, banks.visual, banks.visual_proj, config),
                  hopfield_apply(query, banks.report, banks.report_proj, config));
}

EnhancedBatch batch_enhance_detailed(std::span<const Vec64> queries, const DualMemory& banks,
                                     const HopfieldConfig& config, Branches branches,
                                     std::size_t expected_queries) {
    if (queries.size() != expected_queries) {
        throw InvalidArgument("batch_enhance: expected " + std::to_string(expected_queries) + " queries, got " +
                              std::to_string(queries.size()));
    }
    const bool use_visual = branches != Branches::report_only;
    const bool use_report = branches != Branches::visual_only;
    const std::size_t d_visual = banks.visual_proj.d_out(banks.visual.dim());
    const std::size_t d_report = banks.report_proj.d_out(banks.report.dim());
    if (use_visual && use_report && d_visual != d_report) {
        throw DimensionError("batch_enhance: visual and report branches disagree on output width");
    }
    const std::size_t width = use_visual ? d_visual : d_report;
    const std::size_t per_query = (use_visual ? 1 : 0) + (use_report ? 1 : 0);

    EnhancedBatch batch;
    std::vector<Vec64> visual_states;
    std::vector<Vec64> report_states;
    for (const Vec64& q : queries) {
        if (use_visual) {
            auto [state, retrieval] = associate_unprojected(q, banks.visual, banks.visual_proj, config);
            visual_states.push_back(std::move(state));
            batch.visual.push_back(std::move(retrieval));
        }
        if (use_report) {
            auto [state, retrieval] = associate_unprojected(q, banks.report, banks.report_proj, config);
            report_states.push_back(std::move(state));
            batch.report.push_back(std::move(retrieval));
        }
    }

    // Projecting all states at once streams each value matrix only once.
    const auto project = [](const std::vector<Vec64>& states, const HopfieldProjections& proj) {
        Mat64 stacked = Mat64::from_rows(states);
        return proj.value_proj ? matmul_transposed(stacked, *proj.value_proj) : stacked;
    };
    const Mat64 visual_out = use_visual ? project(visual_states, banks.visual_proj) : Mat64();
    const Mat64 report_out = use_report ? project(report_states, banks.report_proj) : Mat64();

    std::vector<double> data;
    data.reserve(queries.size() * per_query * width);
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (use_visual) data.insert(data.end(), visual_out.row(i).begin(), visual_out.row(i).end());
        if (use_report) data.insert(data.end(), report_out.row(i).begin(), report_out.row(i).end());
    }
    batch.features = Mat64(queries.size() * per_query, width, std::move(data));
    return batch;
}

Mat64 batch_enhance(std::span<const Vec64> queries, const DualMemory& banks, const HopfieldConfig& config,
                    Branches branches, std::size_t expected_queries) {
    return batch_enhance_detailed(queries, banks, config, branches, expected_queries).features;
}

} // namespace ammrg::hopfield
