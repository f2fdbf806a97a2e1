#include "imtk/glm.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "imtk/rng.hpp"

namespace imtk {

void Dataset::add_column(const std::string& name, std::vector<double> values) {
    if (n_rows_ == 0 && cols_.empty()) n_rows_ = values.size();
    if (values.size() != n_rows_)
        throw std::invalid_argument("column " + name + " has wrong length");
    cols_[name] = std::move(values);
}

const std::vector<double>& Dataset::col(const std::string& name) const {
    auto it = cols_.find(name);
    if (it == cols_.end()) throw std::invalid_argument("missing column: " + name);
    return it->second;
}

std::vector<double>& Dataset::mutable_col(const std::string& name) {
    auto it = cols_.find(name);
    if (it == cols_.end()) throw std::invalid_argument("missing column: " + name);
    return it->second;
}

Term Term::product(const std::vector<std::string>& columns) {
    if (columns.empty()) throw std::invalid_argument("empty product term");
    std::string name = columns[0];
    for (std::size_t i = 1; i < columns.size(); ++i) name += "*" + columns[i];
    return {name, columns};
}

std::vector<std::string> DesignSpec::coefficient_names() const {
    std::vector<std::string> names;
    if (intercept) names.push_back("(intercept)");
    for (const auto& t : terms) names.push_back(t.name);
    return names;
}

double FittedGlm::coefficient(const std::string& name) const {
    auto names = spec.coefficient_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return coefficients[i];
    throw std::invalid_argument("no coefficient named " + name);
}

double FittedGlm::coefficient_or(const std::string& name, double fallback) const {
    auto names = spec.coefficient_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return coefficients[i];
    return fallback;
}

namespace {

Eigen::MatrixXd build_design(const DesignSpec& spec, const Dataset& data,
                             const std::vector<std::size_t>& rows) {
    const std::size_t n = rows.size();
    const std::size_t p = spec.n_coefficients();
    Eigen::MatrixXd X(n, p);
    std::size_t col = 0;
    if (spec.intercept) {
        X.col(0).setOnes();
        col = 1;
    }
    for (const auto& term : spec.terms) {
        std::vector<const std::vector<double>*> factors;
        factors.reserve(term.factors.size());
        for (const auto& f : term.factors) factors.push_back(&data.col(f));
        for (std::size_t i = 0; i < n; ++i) {
            double v = 1.0;
            for (const auto* f : factors) v *= (*f)[rows[i]];
            X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col)) = v;
        }
        ++col;
    }
    return X;
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

void check_rank(const Eigen::MatrixXd& H) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    const double max_ev = ev.cwiseAbs().maxCoeff();
    if (max_ev <= 0.0 || ev.minCoeff() < 1e-10 * max_ev)
        throw SingularDesignError("normal-equations matrix is rank-deficient");
}

}  // namespace

FittedGlm fit_glm(Family family, const DesignSpec& spec, const Dataset& data,
                  const std::string& response, const GlmOptions& options) {
    const std::vector<std::size_t> rows =
        options.rows.empty() ? all_rows(data.n_rows()) : options.rows;
    const std::size_t n = rows.size();
    const std::size_t p = spec.n_coefficients();
    if (p == 0) throw std::invalid_argument("design has no coefficients");
    if (n == 0) throw std::invalid_argument("no rows to fit");

    const auto& yc = data.col(response);
    Eigen::VectorXd y(n), w(n), offset(n);
    const std::vector<double>* off =
        spec.offset_column ? &data.col(*spec.offset_column) : nullptr;
    double wsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        y(static_cast<Eigen::Index>(i)) = yc[rows[i]];
        double wi = options.weights.empty() ? 1.0 : options.weights[rows[i]];
        if (wi < 0.0) throw std::invalid_argument("negative weight");
        w(static_cast<Eigen::Index>(i)) = wi;
        wsum += wi;
        offset(static_cast<Eigen::Index>(i)) = off ? (*off)[rows[i]] : 0.0;
    }
    if (wsum <= 0.0) throw std::invalid_argument("no positive weights");
    if (family == Family::Logistic)
        for (std::size_t i = 0; i < n; ++i)
            if (y(static_cast<Eigen::Index>(i)) < 0.0 || y(static_cast<Eigen::Index>(i)) > 1.0)
                throw std::invalid_argument("logistic response outside [0,1]");

    const Eigen::MatrixXd X = build_design(spec, data, rows);

    FittedGlm fit;
    fit.family = family;
    fit.spec = spec;

    if (family == Family::Gaussian) {
        Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X;
        if (options.ridge > 0.0)
            H += options.ridge * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(p),
                                                           static_cast<Eigen::Index>(p));
        check_rank(H);
        const Eigen::VectorXd b = X.transpose() * (w.array() * (y - offset).array()).matrix();
        const Eigen::VectorXd beta = H.ldlt().solve(b);
        const Eigen::VectorXd resid = y - offset - X * beta;
        const double rss = (w.array() * resid.array().square()).sum();
        fit.coefficients.assign(beta.data(), beta.data() + p);
        const double dof = wsum - static_cast<double>(p);
        fit.zero_variance = rss <= 1e-12;
        fit.residual_variance = dof > 0.0 ? rss / dof : 0.0;
        fit.converged = true;
        fit.iterations = 1;
        return fit;
    }

    // Logistic IRLS / Newton on the weighted score (penalized when a
    // ridge is requested).
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
    bool rank_checked = false;
    auto penalized_score = [&](const Eigen::VectorXd& b) {
        const Eigen::VectorXd mu = (X * b + offset).unaryExpr([](double e) { return expit(e); });
        Eigen::VectorXd s = X.transpose() * (w.array() * (y - mu).array()).matrix();
        if (options.ridge > 0.0) s -= options.ridge * b;
        return s;
    };
    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        const Eigen::VectorXd eta = X * beta + offset;
        const Eigen::VectorXd mu = eta.unaryExpr([](double e) { return expit(e); });
        Eigen::VectorXd score = X.transpose() * (w.array() * (y - mu).array()).matrix();
        if (options.ridge > 0.0) score -= options.ridge * beta;
        fit.iterations = iter;
        if (score.cwiseAbs().maxCoeff() < options.tolerance) {
            fit.converged = true;
            break;
        }
        Eigen::VectorXd irls_w =
            (w.array() * mu.array() * (1.0 - mu.array())).cwiseMax(1e-10).matrix();
        Eigen::MatrixXd H = X.transpose() * irls_w.asDiagonal() * X;
        if (options.ridge > 0.0)
            H += options.ridge * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(p),
                                                           static_cast<Eigen::Index>(p));
        if (!rank_checked) {
            check_rank(H);
            rank_checked = true;
        }
        const Eigen::VectorXd step = H.ldlt().solve(score);
        beta += step;
        if (beta.cwiseAbs().maxCoeff() > options.separation_bound)
            throw SeparationError("coefficient exceeded " +
                                  std::to_string(options.separation_bound) +
                                  " on the logit scale (separation)");
        if (step.cwiseAbs().maxCoeff() < 1e-14) {
            // Stalled at numerical precision; accept if the score is tiny.
            fit.converged = penalized_score(beta).cwiseAbs().maxCoeff() < options.tolerance;
            break;
        }
    }
    if (!fit.converged)
        throw NonConvergenceError("IRLS did not converge in " +
                                  std::to_string(options.max_iterations) + " iterations");
    fit.coefficients.assign(beta.data(), beta.data() + p);
    return fit;
}

std::vector<double> predict(const FittedGlm& model, const Dataset& data,
                            const std::vector<double>* offset_override) {
    const auto rows = all_rows(data.n_rows());
    const Eigen::MatrixXd X = build_design(model.spec, data, rows);
    Eigen::VectorXd beta(static_cast<Eigen::Index>(model.coefficients.size()));
    for (std::size_t i = 0; i < model.coefficients.size(); ++i)
        beta(static_cast<Eigen::Index>(i)) = model.coefficients[i];
    Eigen::VectorXd eta = X * beta;
    if (offset_override) {
        if (offset_override->size() != data.n_rows())
            throw std::invalid_argument("offset override has wrong length");
        for (std::size_t i = 0; i < data.n_rows(); ++i)
            eta(static_cast<Eigen::Index>(i)) += (*offset_override)[i];
    } else if (model.spec.offset_column) {
        const auto& off = data.col(*model.spec.offset_column);
        for (std::size_t i = 0; i < data.n_rows(); ++i)
            eta(static_cast<Eigen::Index>(i)) += off[i];
    }
    std::vector<double> out(data.n_rows());
    for (std::size_t i = 0; i < data.n_rows(); ++i) {
        const double e = eta(static_cast<Eigen::Index>(i));
        out[i] = model.family == Family::Logistic ? expit(e) : e;
    }
    return out;
}

double weighted_residual_variance(const FittedGlm& model, const Dataset& data,
                                  const std::string& response,
                                  const std::vector<std::size_t>& rows,
                                  const std::vector<double>& weights) {
    if (model.family != Family::Gaussian)
        throw std::invalid_argument("residual variance is for gaussian fits");
    const auto mu = predict(model, data);
    const auto& y = data.col(response);
    double rss = 0.0, wsum = 0.0;
    for (std::size_t r : rows) {
        const double wi = weights.empty() ? 1.0 : weights[r];
        const double d = y[r] - mu[r];
        rss += wi * d * d;
        wsum += wi;
    }
    const double dof = wsum - static_cast<double>(model.spec.n_coefficients());
    return dof > 0.0 ? rss / dof : 0.0;
}

}  // namespace imtk
