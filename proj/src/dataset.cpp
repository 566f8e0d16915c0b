#include "mvad/dataset.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mvad {

ViewBlock ViewBlock::fully_observed(Eigen::MatrixXd values) {
  ViewBlock block;
  block.observed = Mask::Constant(values.rows(), values.cols(), true);
  block.values = std::move(values);
  return block;
}

MultiViewDataset::MultiViewDataset(std::vector<ViewBlock> views,
                                   std::optional<std::vector<bool>> labels)
    : views_(std::move(views)), labels_(std::move(labels)) {
  if (views_.empty()) throw std::invalid_argument("dataset needs at least one view");
  n_instances_ = static_cast<std::size_t>(views_.front().values.rows());

  row_complete_.resize(views_.size());
  row_observed_.resize(views_.size());
  view_complete_.resize(views_.size());
  for (std::size_t d = 0; d < views_.size(); ++d) {
    const auto& v = views_[d];
    const std::string where = "view " + std::to_string(d);
    if (static_cast<std::size_t>(v.values.rows()) != n_instances_)
      throw std::invalid_argument(where + " has a different number of rows");
    if (v.values.cols() < 1) throw std::invalid_argument(where + " has no features");
    if (v.observed.rows() != v.values.rows() || v.observed.cols() != v.values.cols())
      throw std::invalid_argument(where + " mask shape differs from its values");

    row_complete_[d].assign(n_instances_, true);
    row_observed_[d].assign(n_instances_, 0);
    bool complete = true;
    for (Eigen::Index n = 0; n < v.values.rows(); ++n) {
      std::size_t count = 0;
      for (Eigen::Index m = 0; m < v.values.cols(); ++m) {
        if (!v.observed(n, m)) continue;
        if (!std::isfinite(v.values(n, m)))
          throw std::invalid_argument(where + " has a non-finite observed cell at row " +
                                      std::to_string(n));
        ++count;
      }
      row_observed_[d][n] = count;
      row_complete_[d][n] = count == static_cast<std::size_t>(v.values.cols());
      complete = complete && row_complete_[d][n];
      observed_cells_ += count;
    }
    view_complete_[d] = complete;
  }
  if (labels_ && labels_->size() != n_instances_)
    throw std::invalid_argument("labels length differs from instance count");
}

std::size_t MultiViewDataset::total_dim() const noexcept {
  std::size_t total = 0;
  for (const auto& v : views_) total += static_cast<std::size_t>(v.values.cols());
  return total;
}

MultiViewDataset MultiViewDataset::with_labels(std::optional<std::vector<bool>> labels) const {
  return MultiViewDataset(views_, std::move(labels));
}

}  // namespace mvad
