#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace crtmle {

// Columns of a regression design, by covariate name. Column order is
// covariates, then the treatment main effect, then treatment x covariate.
struct DesignSpec {
  std::vector<std::string> covariates;
  bool treatment = false;
  std::vector<std::string> interactions;

  std::size_t width() const noexcept {
    return covariates.size() + (treatment ? 1 : 0) + interactions.size();
  }
  std::vector<std::string> column_names() const;
  // Index of the treatment main-effect column, or width() when absent.
  std::size_t treatment_column() const noexcept {
    return treatment ? covariates.size() : width();
  }
  // Copy with every occurrence of the covariate removed.
  DesignSpec without(const std::string& name) const;

  bool operator==(const DesignSpec&) const = default;
};

// A DesignSpec bound to a covariate layout (the column order of a dataset).
class ResolvedDesign {
 public:
  ResolvedDesign() = default;
  ResolvedDesign(DesignSpec spec, const std::vector<std::string>& layout);

  const DesignSpec& spec() const noexcept { return spec_; }
  const std::vector<std::string>& layout() const noexcept { return layout_; }
  std::size_t width() const noexcept { return spec_.width(); }

  void row(std::span<const double> x, int a, Eigen::Ref<Eigen::VectorXd> out) const;
  Eigen::VectorXd row(std::span<const double> x, int a) const;
  double linear_predictor(const Eigen::VectorXd& beta, std::span<const double> x, int a) const;

 private:
  DesignSpec spec_;
  std::vector<std::string> layout_;
  std::vector<std::size_t> main_idx_;
  std::vector<std::size_t> inter_idx_;
};

}  // namespace crtmle
