#include "crtmle/design.hpp"

#include <algorithm>

#include "crtmle/errors.hpp"

namespace crtmle {

std::vector<std::string> DesignSpec::column_names() const {
  std::vector<std::string> out(covariates.begin(), covariates.end());
  if (treatment) out.emplace_back("a");
  for (const auto& c : interactions) out.push_back("a:" + c);
  return out;
}

DesignSpec DesignSpec::without(const std::string& name) const {
  DesignSpec out = *this;
  std::erase(out.covariates, name);
  std::erase(out.interactions, name);
  return out;
}

ResolvedDesign::ResolvedDesign(DesignSpec spec, const std::vector<std::string>& layout)
    : spec_(std::move(spec)), layout_(layout) {
  auto find = [&](const std::string& name) {
    auto it = std::find(layout_.begin(), layout_.end(), name);
    if (it == layout_.end()) throw DataError("design refers to unknown covariate '" + name + "'");
    return static_cast<std::size_t>(it - layout_.begin());
  };
  for (const auto& c : spec_.covariates) main_idx_.push_back(find(c));
  for (const auto& c : spec_.interactions) inter_idx_.push_back(find(c));
}

void ResolvedDesign::row(std::span<const double> x, int a, Eigen::Ref<Eigen::VectorXd> out) const {
  Eigen::Index c = 0;
  for (std::size_t j : main_idx_) out[c++] = x[j];
  if (spec_.treatment) out[c++] = a;
  for (std::size_t j : inter_idx_) out[c++] = a * x[j];
}

Eigen::VectorXd ResolvedDesign::row(std::span<const double> x, int a) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(width()));
  row(x, a, out);
  return out;
}

double ResolvedDesign::linear_predictor(const Eigen::VectorXd& beta, std::span<const double> x,
                                        int a) const {
  double eta = 0.0;
  Eigen::Index c = 0;
  for (std::size_t j : main_idx_) eta += beta[c++] * x[j];
  if (spec_.treatment) eta += beta[c++] * a;
  for (std::size_t j : inter_idx_) eta += beta[c++] * a * x[j];
  return eta;
}

}  // namespace crtmle
