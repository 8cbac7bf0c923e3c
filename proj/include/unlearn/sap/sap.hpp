#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "unlearn/data/dataset.hpp"
#include "unlearn/error.hpp"
#include "unlearn/linalg/conv.hpp"
#include "unlearn/linalg/matrix.hpp"
#include "unlearn/linalg/svd.hpp"
#include "unlearn/nn/model.hpp"
#include "unlearn/nn/train.hpp"

namespace unlearn {

/// Conv representations keep at most this many patches per sample unless the
/// caller overrides the cap (0 disables capping).
inline constexpr std::size_t kDefaultPatchCap = 64;

/// Training samples presumed clean: the n lowest-loss samples under the
/// model being corrected.
struct TrustedSet {
    std::vector<std::size_t> indices;
    std::vector<double> losses;
    bool clamped = false;
};

/// Input activations of one dense/conv layer over the trusted set, stored
/// features x columns so an SVD's left basis spans activation space.
struct LayerRepresentation {
    std::size_t layer = 0;
    Matrix r;
};

/// Everything derived from one layer's representation: SVD basis, raw and
/// normalized singular values, importance diagonal, and the alignment matrix.
struct LayerProjection {
    std::size_t layer = 0;
    Matrix u;
    std::vector<double> sigma;
    std::vector<double> sigma_norm;
    std::vector<double> lambda;
    Matrix w_p;
};

struct ProjectionBundle {
    std::vector<LayerProjection> layers;
};

/// Cached state that does not depend on alpha: trusted set plus per-layer
/// SVDs. An alpha sweep reuses one plan across all values.
struct SapPlan {
    TrustedSet trusted;
    std::vector<std::size_t> layer_ids;
    std::vector<SvdResult> svds;
    std::vector<std::size_t> dims;
};

struct SapResult {
    Model model;
    ProjectionBundle bundle;
    TrustedSet trusted;
};

/// Selects the n lowest-loss samples, ties broken by ascending index.
/// Requests beyond the dataset size are clamped and flagged.
inline TrustedSet get_trusted(const Model& model, const LabeledDataset& data,
                              std::size_t n_trust) {
    if (n_trust < 1) throw ValidationError("get_trusted: n_trust must be >= 1");
    const std::vector<double> losses = per_sample_losses(model, data);
    if (losses.empty()) throw ValidationError("get_trusted: empty dataset");
    TrustedSet out;
    if (n_trust > losses.size()) {
        n_trust = losses.size();
        out.clamped = true;
    }
    std::vector<std::size_t> order(losses.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&losses](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
    out.indices.assign(order.begin(), order.begin() + n_trust);
    out.losses.reserve(n_trust);
    for (std::size_t i : out.indices) out.losses.push_back(losses[i]);
    return out;
}

namespace detail {

/// Evenly spread selection of `cap` patch rows out of n available.
inline std::vector<std::size_t> patch_subsample(std::size_t n, std::size_t cap) {
    std::vector<std::size_t> picks;
    if (cap == 0 || n <= cap) {
        picks.resize(n);
        std::iota(picks.begin(), picks.end(), 0);
        return picks;
    }
    picks.reserve(cap);
    for (std::size_t i = 0; i < cap; ++i) picks.push_back(i * n / cap);
    return picks;
}

}  // namespace detail

/// Collects, per dense/conv layer, the matrix of input activations over the
/// trusted samples (columns). All activations come from the given model in
/// inference mode. Conv activations are unfolded into patches, at most
/// patch_cap per sample (deterministic even stride; 0 means no cap).
inline std::vector<LayerRepresentation> representation(const Model& model,
                                                       const TrustedSet& trusted,
                                                       const LabeledDataset& data,
                                                       std::size_t patch_cap = kDefaultPatchCap) {
    if (trusted.indices.empty()) throw ValidationError("representation: empty trusted set");
    const LabeledDataset batch = data.subset(trusted.indices);
    const ForwardTrace trace = forward_trace(model, batch.samples, Mode::Eval);
    std::vector<LayerRepresentation> reps;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        const Layer& l = model.layers[li];
        if (l.kind == Layer::Kind::Dense) {
            reps.push_back({li, transpose(trace.inputs[li])});
        } else if (l.kind == Layer::Kind::Conv2d) {
            const Matrix& acts = trace.inputs[li];
            const std::vector<std::size_t> picks =
                detail::patch_subsample(l.geom.patch_count(), patch_cap);
            Matrix r(l.geom.patch_len(), acts.rows() * picks.size());
            for (std::size_t s = 0; s < acts.rows(); ++s) {
                const Matrix patches = unfold({acts.row(s), l.geom.input_len()}, l.geom);
                for (std::size_t p = 0; p < picks.size(); ++p) {
                    const double* src = patches.row(picks[p]);
                    const std::size_t col = s * picks.size() + p;
                    for (std::size_t f = 0; f < r.rows(); ++f) r(f, col) = src[f];
                }
            }
            reps.push_back({li, std::move(r)});
        }
    }
    return reps;
}

/// Importance weights from singular values: sigma is normalized to explained
/// squared mass (zeros appended up to the ambient dimension d), then each
/// share nu is mapped to alpha*nu / ((alpha-1)*nu + 1).
inline std::pair<std::vector<double>, std::vector<double>> scale_importance(
    const std::vector<double>& sigma, double alpha, std::size_t d) {
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw ValidationError("scale_importance: alpha must be positive and finite");
    if (sigma.size() > d)
        throw ShapeError("scale_importance: more singular values than ambient dimensions");
    double total = 0.0;
    for (double s : sigma) {
        if (s < 0.0) throw ValidationError("scale_importance: negative singular value");
        total += s * s;
    }
    if (total == 0.0)
        throw DegenerateError("scale_importance: all singular values are zero");
    std::vector<double> norm(d, 0.0), lambda(d, 0.0);
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        norm[i] = sigma[i] * sigma[i] / total;
        lambda[i] = alpha * norm[i] / ((alpha - 1.0) * norm[i] + 1.0);
    }
    return {norm, lambda};
}

/// W_p = U diag(lambda) U^T, built symmetric by construction (entry (i,j)
/// and (j,i) share one accumulation).
inline Matrix projection_matrix(const Matrix& u, const std::vector<double>& lambda) {
    if (u.empty()) throw ShapeError("projection_matrix: empty basis");
    if (lambda.size() < u.cols())
        throw ShapeError("projection_matrix: importance diagonal shorter than basis");
    if (gram_defect(u) > 1e-8)
        throw NumericError("projection_matrix: basis columns are not orthonormal");
    for (std::size_t i = 0; i < u.cols(); ++i)
        if (!(lambda[i] >= 0.0 && lambda[i] <= 1.0))
            throw ValidationError("projection_matrix: importance weight outside [0,1]");
    const std::size_t d = u.rows(), m = u.cols();
    Matrix w(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < m; ++k) s += u(i, k) * lambda[k] * u(j, k);
            w(i, j) = s;
            w(j, i) = s;
        }
    }
    return w;
}

/// Absorbs the alignment matrix into a weight: W_hat = W * W_p^T. Conv
/// weights are already stored in the reshaped form this acts on.
inline Matrix update_parameter(const Matrix& w, const Matrix& w_p) {
    if (w_p.rows() != w_p.cols()) throw ShapeError("update_parameter: alignment matrix not square");
    if (w.cols() != w_p.rows())
        throw ShapeError("update_parameter: weight columns do not match alignment size");
    return matmul_trans_b(w, w_p);
}

/// Alpha-independent stage: trusted-set selection, representation
/// collection, and one SVD per dense/conv layer.
inline SapPlan sap_plan(const Model& model, const LabeledDataset& data, std::size_t n_trust,
                        std::size_t patch_cap = kDefaultPatchCap) {
    model.validate();
    SapPlan plan;
    plan.trusted = get_trusted(model, data, n_trust);
    const std::vector<LayerRepresentation> reps =
        representation(model, plan.trusted, data, patch_cap);
    for (const LayerRepresentation& rep : reps) {
        try {
            plan.svds.push_back(svd(rep.r));
        } catch (const NumericError& e) {
            throw NumericError("sap layer " + std::to_string(rep.layer) + ": " + e.what());
        } catch (const ShapeError& e) {
            throw ShapeError("sap layer " + std::to_string(rep.layer) + ": " + e.what());
        }
        plan.layer_ids.push_back(rep.layer);
        plan.dims.push_back(rep.r.rows());
    }
    return plan;
}

/// Alpha-dependent stage: importance scaling, projection, and the one-shot
/// weight update for every planned layer. Weights all update from the same
/// original-model representations; biases and batchnorm are untouched.
inline SapResult sap_apply(const Model& model, const SapPlan& plan, double alpha) {
    SapResult out{model, {}, plan.trusted};
    for (std::size_t i = 0; i < plan.layer_ids.size(); ++i) {
        const std::size_t li = plan.layer_ids[i];
        try {
            LayerProjection proj;
            proj.layer = li;
            proj.u = plan.svds[i].u;
            proj.sigma = plan.svds[i].sigma;
            auto [norm, lambda] = scale_importance(proj.sigma, alpha, plan.dims[i]);
            proj.sigma_norm = std::move(norm);
            proj.lambda = std::move(lambda);
            proj.w_p = projection_matrix(proj.u, proj.lambda);
            out.model.layers[li].weight = update_parameter(model.layers[li].weight, proj.w_p);
            out.bundle.layers.push_back(std::move(proj));
        } catch (const DegenerateError& e) {
            throw DegenerateError("sap layer " + std::to_string(li) + ": " + e.what());
        } catch (const NumericError& e) {
            throw NumericError("sap layer " + std::to_string(li) + ": " + e.what());
        } catch (const ShapeError& e) {
            throw ShapeError("sap layer " + std::to_string(li) + ": " + e.what());
        }
    }
    return out;
}

/// The full correction pipeline in one call.
inline SapResult sap(const Model& model, const LabeledDataset& data, double alpha,
                     std::size_t n_trust, std::size_t patch_cap = kDefaultPatchCap) {
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw ValidationError("sap: alpha must be positive and finite");
    return sap_apply(model, sap_plan(model, data, n_trust, patch_cap), alpha);
}

}  // namespace unlearn
