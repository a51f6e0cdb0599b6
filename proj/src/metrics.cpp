#include "stc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stc/errors.hpp"

namespace stc {

IouReport miou(const std::vector<SegMask>& preds, const std::vector<SegMask>& gts, int classes) {
  if (preds.size() != gts.size()) throw ShapeError("miou: pred/gt count mismatch");
  if (classes < 1) throw ContractError("miou: need at least one class");
  IouReport r;
  r.confusion.assign(static_cast<size_t>(classes) * classes, 0);
  for (size_t i = 0; i < preds.size(); ++i) {
    const SegMask& p = preds[i];
    const SegMask& g = gts[i];
    if (p.h != g.h || p.w != g.w) throw ShapeError("miou: mask shape mismatch");
    for (size_t j = 0; j < p.ids.size(); ++j) {
      const int32_t pc = p.ids[j], gc = g.ids[j];
      if (pc < 0 || pc >= classes || gc < 0 || gc >= classes)
        throw ContractError("miou: class id out of range");
      ++r.confusion[static_cast<size_t>(gc) * classes + pc];
    }
  }

  r.iou.assign(static_cast<size_t>(classes), -1.0);
  r.included.assign(static_cast<size_t>(classes), false);
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < classes; ++c) {
    int64_t tp = r.confusion[static_cast<size_t>(c) * classes + c];
    int64_t row = 0, col = 0;
    for (int k = 0; k < classes; ++k) {
      row += r.confusion[static_cast<size_t>(c) * classes + k];
      col += r.confusion[static_cast<size_t>(k) * classes + c];
    }
    const int64_t uni = row + col - tp;
    if (uni == 0) continue;  // absent from both pred and gt
    r.iou[static_cast<size_t>(c)] = static_cast<double>(tp) / static_cast<double>(uni);
    r.included[static_cast<size_t>(c)] = true;
    sum += r.iou[static_cast<size_t>(c)];
    ++n;
  }
  r.miou = n > 0 ? sum / n : 0.0;
  return r;
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("spearman: length mismatch");
  const size_t n = a.size();
  if (n < 2) return 0.0;
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  double ma = 0, mb = 0;
  for (size_t i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double num = 0, va = 0, vb = 0;
  for (size_t i = 0; i < n; ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va <= 0 || vb <= 0) return 0.0;
  return num / std::sqrt(va * vb);
}

}  // namespace stc
