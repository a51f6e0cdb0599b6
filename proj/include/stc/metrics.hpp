#pragma once

#include <vector>

#include "stc/losses.hpp"

namespace stc {

struct IouReport {
  std::vector<double> iou;      // per class; -1 when the class is absent from pred and gt
  std::vector<bool> included;   // contributes to the mean
  std::vector<int64_t> confusion;  // classes x classes, row = gt, col = pred
  double miou = 0.0;
};

// Accumulates one global confusion matrix over all mask pairs; classes absent
// from both prediction and ground truth are excluded from the mean.
IouReport miou(const std::vector<SegMask>& preds, const std::vector<SegMask>& gts, int classes);

// Spearman rank correlation with average ranks for ties; 0 when degenerate.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace stc
