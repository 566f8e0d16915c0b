#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <optional>
#include <vector>

namespace mvad {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// One view of every instance: an N x M_d block of values with an
/// observation mask of the same shape (true = observed).
struct ViewBlock {
  Eigen::MatrixXd values;
  Mask observed;

  static ViewBlock fully_observed(Eigen::MatrixXd values);
};

/// N instances observed through D views.
///
/// Masked-missing cells may hold any value (including NaN); they are never
/// read by likelihood computations. Observed cells must be finite.
class MultiViewDataset {
public:
  MultiViewDataset() = default;
  explicit MultiViewDataset(std::vector<ViewBlock> views,
                            std::optional<std::vector<bool>> labels = std::nullopt);

  [[nodiscard]] std::size_t n_instances() const noexcept { return n_instances_; }
  [[nodiscard]] std::size_t n_views() const noexcept { return views_.size(); }
  [[nodiscard]] std::size_t view_dim(std::size_t d) const { return views_.at(d).values.cols(); }
  [[nodiscard]] std::size_t total_dim() const noexcept;

  [[nodiscard]] const ViewBlock& view(std::size_t d) const { return views_.at(d); }
  [[nodiscard]] const std::vector<ViewBlock>& views() const noexcept { return views_; }

  [[nodiscard]] const std::optional<std::vector<bool>>& labels() const noexcept { return labels_; }

  /// True when every cell of x_nd is observed.
  [[nodiscard]] bool row_complete(std::size_t n, std::size_t d) const {
    return row_complete_[d][n];
  }
  /// Number of observed cells of x_nd.
  [[nodiscard]] std::size_t row_observed(std::size_t n, std::size_t d) const {
    return row_observed_[d][n];
  }
  /// True when no cell of view d is missing.
  [[nodiscard]] bool view_complete(std::size_t d) const { return view_complete_[d]; }
  [[nodiscard]] std::size_t observed_cells() const noexcept { return observed_cells_; }

  /// Copy with the given labels attached (or removed).
  [[nodiscard]] MultiViewDataset with_labels(std::optional<std::vector<bool>> labels) const;

private:
  std::size_t n_instances_ = 0;
  std::vector<ViewBlock> views_;
  std::optional<std::vector<bool>> labels_;

  std::vector<std::vector<bool>> row_complete_;
  std::vector<std::vector<std::size_t>> row_observed_;
  std::vector<bool> view_complete_;
  std::size_t observed_cells_ = 0;
};

}  // namespace mvad
