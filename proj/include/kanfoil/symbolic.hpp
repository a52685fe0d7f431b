#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "kanfoil/formula.hpp"
#include "kanfoil/kan.hpp"

namespace kanfoil {

/// Candidate functions tried on each edge, in tie-break order.
std::vector<UnaryFn> default_library();
std::vector<UnaryFn> parse_library(const std::string& comma_separated);

/// y ~ c * f(a * x + b) + d
struct AffineFit {
    UnaryFn fn = UnaryFn::identity;
    double a = 1.0;
    double b = 0.0;
    double c = 0.0;
    double d = 0.0;
    double r2 = -INFINITY; ///< -inf when the guard fails somewhere on the sample

    double operator()(double x) const noexcept { return c * apply_unary(fn, a * x + b) + d; }
    nlohmann::json to_json() const;
};

struct FitOptions {
    double box = 10.0;          ///< initial (a, b) search box is [-box, box]^2
    int grid_points = 21;       ///< per axis, per level
    int levels = 3;             ///< zoom levels
    bool polish = true;         ///< Nelder-Mead refinement of (a, b) after the grid
    std::size_t max_samples = 2000; ///< larger samples are strided down
    double tie_tolerance = 1e-10;   ///< r2 within this of the best counts as a tie
};

/// Coarse-to-fine search over (a, b) with (c, d) solved by linear least
/// squares at every point. Throws DegenerateInput if xs is constant.
AffineFit fit_candidate(std::span<const double> xs, std::span<const double> ys, UnaryFn f, const FitOptions& opt = {});

/// Best fit over the library; ties (within opt.tie_tolerance) go to the
/// earlier library entry. Returns r2 = -inf if nothing fits.
AffineFit best_fit(std::span<const double> xs, std::span<const double> ys, const std::vector<UnaryFn>& library,
                   const FitOptions& opt = {});

struct EdgeAddress {
    std::size_t layer = 0;
    std::size_t from = 0;
    std::size_t to = 0;
    std::string str() const;
};

/// Fits the whole edge activation phi (base + spline) over the inputs the
/// edge sees on `scaled`. Throws NoValidFit if every candidate fails.
AffineFit symbolify_edge(const KanNetwork& net, const EdgeAddress& edge, const RegressionSet& scaled,
                         const std::vector<UnaryFn>& library = default_library(), const FitOptions& opt = {});

struct EdgeFit {
    EdgeAddress edge;
    AffineFit fit;
};

struct SymbolicResult {
    Formula formula;             ///< in raw feature units when the net has a scaler
    std::vector<EdgeFit> edges;  ///< one per active edge, in layer/row-major order
    double min_edge_r2 = 1.0;
};

/// Replaces every active edge with its best fit and composes the network into
/// one formula over the feature names, folding the input scaler in.
SymbolicResult symbolify_network(const KanNetwork& net, const RegressionSet& scaled,
                                 const std::vector<UnaryFn>& library = default_library(), const FitOptions& opt = {});

/// Predictions of a formula on a raw-unit table (variables bound by feature name).
std::vector<double> predict_formula(const Formula& f, const RegressionSet& raw);

} // namespace kanfoil
