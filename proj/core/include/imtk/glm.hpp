#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace imtk {

// Columnar table of named double columns, all the same length.
class Dataset {
  public:
    Dataset() = default;
    explicit Dataset(std::size_t n_rows) : n_rows_(n_rows) {}

    std::size_t n_rows() const { return n_rows_; }
    void add_column(const std::string& name, std::vector<double> values);
    bool has_column(const std::string& name) const { return cols_.count(name) > 0; }
    const std::vector<double>& col(const std::string& name) const;
    std::vector<double>& mutable_col(const std::string& name);

  private:
    std::size_t n_rows_ = 0;
    std::unordered_map<std::string, std::vector<double>> cols_;
};

// A design term is a product of raw columns; the empty product is not
// allowed (the intercept is a flag, not a term).
struct Term {
    std::string name;
    std::vector<std::string> factors;

    static Term raw(const std::string& column) { return {column, {column}}; }
    static Term product(const std::vector<std::string>& columns);
};

struct DesignSpec {
    std::vector<Term> terms;
    bool intercept = true;
    std::optional<std::string> offset_column;

    std::size_t n_coefficients() const { return terms.size() + (intercept ? 1 : 0); }
    std::vector<std::string> coefficient_names() const;
};

enum class Family { Logistic, Gaussian };

struct GlmError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonConvergenceError : GlmError {
    using GlmError::GlmError;
};
struct SeparationError : GlmError {
    using GlmError::GlmError;
};
struct SingularDesignError : GlmError {
    using GlmError::GlmError;
};

struct FittedGlm {
    Family family = Family::Logistic;
    DesignSpec spec;
    std::vector<double> coefficients;  // ordered: intercept first if present
    double residual_variance = 0.0;    // gaussian only
    bool zero_variance = false;        // gaussian with an exact fit
    bool converged = false;
    int iterations = 0;

    double coefficient(const std::string& name) const;
    double coefficient_or(const std::string& name, double fallback) const;
};

struct GlmOptions {
    std::vector<double> weights;     // empty = all ones
    std::vector<std::size_t> rows;   // empty = all rows
    int max_iterations = 100;
    double tolerance = 1e-8;         // max |weighted score|
    double separation_bound = 20.0;  // |beta| on the logit scale
    double ridge = 0.0;              // optional robustness knob, off by default
};

// Weighted IRLS/Newton fit. Logistic responses may be fractional in
// [0,1]; gaussian responses are unrestricted. Throws NonConvergenceError,
// SeparationError or SingularDesignError.
FittedGlm fit_glm(Family family, const DesignSpec& spec, const Dataset& data,
                  const std::string& response, const GlmOptions& options = {});

// Fitted means (logistic: probabilities). Uses spec.offset_column when
// present unless an explicit offset vector is supplied.
std::vector<double> predict(const FittedGlm& model, const Dataset& data,
                            const std::vector<double>* offset_override = nullptr);

// Weighted residual variance of a gaussian fit over a row subset:
// sum w (y - mu)^2 / (sum w - #coefficients).
double weighted_residual_variance(const FittedGlm& model, const Dataset& data,
                                  const std::string& response,
                                  const std::vector<std::size_t>& rows,
                                  const std::vector<double>& weights = {});

}  // namespace imtk
