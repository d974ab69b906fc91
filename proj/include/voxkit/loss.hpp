#pragma once

#include <cmath>
#include <vector>

#include "voxkit/tensor.hpp"

namespace voxkit {

// Mean softmax cross-entropy over rows with label >= 0; rows labeled
// ignore_label (-1) contribute nothing. Returns the loss; grad_logits, when
// given, receives d(loss)/d(logits).
template <typename T>
double softmax_cross_entropy(const Matrix<T>& logits, const std::vector<int32_t>& labels,
                             Matrix<T>* grad_logits = nullptr) {
    if (int64_t(labels.size()) != logits.rows)
        throw ShapeError("cross entropy: one label per logit row required");
    if (grad_logits) *grad_logits = Matrix<T>(logits.rows, logits.cols);
    int64_t counted = 0;
    double total = 0.0;
    std::vector<double> prob(size_t(logits.cols));
    for (int64_t r = 0; r < logits.rows; ++r) {
        const int32_t label = labels[size_t(r)];
        if (label < 0) continue;
        if (label >= logits.cols) throw RangeError("cross entropy: label out of range");
        ++counted;
        const T* row = logits.row(r);
        double mx = double(row[0]);
        for (int64_t c = 1; c < logits.cols; ++c) mx = std::max(mx, double(row[c]));
        double denom = 0.0;
        for (int64_t c = 0; c < logits.cols; ++c) {
            prob[size_t(c)] = std::exp(double(row[c]) - mx);
            denom += prob[size_t(c)];
        }
        total += -(double(row[label]) - mx - std::log(denom));
        if (grad_logits)
            for (int64_t c = 0; c < logits.cols; ++c)
                (*grad_logits)(r, c) = T(prob[size_t(c)] / denom - (c == label ? 1.0 : 0.0));
    }
    if (counted == 0) return 0.0;
    if (grad_logits) {
        const T inv = T(1.0 / double(counted));
        for (auto& g : grad_logits->data) g *= inv;
    }
    return total / double(counted);
}

template <typename T>
std::vector<int32_t> argmax_rows(const Matrix<T>& logits) {
    std::vector<int32_t> out(size_t(logits.rows));
    for (int64_t r = 0; r < logits.rows; ++r) {
        const T* row = logits.row(r);
        int32_t best = 0;
        for (int64_t c = 1; c < logits.cols; ++c)
            if (row[c] > row[best]) best = int32_t(c);
        out[size_t(r)] = best;
    }
    return out;
}

// Mean IoU over classes with a non-empty union; rows labeled -1 are skipped.
inline double mean_iou(const std::vector<int32_t>& pred, const std::vector<int32_t>& truth,
                       int32_t num_classes) {
    std::vector<int64_t> tp(size_t(num_classes), 0), fp(size_t(num_classes), 0),
        fn(size_t(num_classes), 0);
    for (size_t i = 0; i < truth.size(); ++i) {
        const int32_t t = truth[i];
        if (t < 0) continue;
        const int32_t p = pred[i];
        if (p == t) {
            ++tp[size_t(t)];
        } else {
            ++fp[size_t(p)];
            ++fn[size_t(t)];
        }
    }
    double sum = 0.0;
    int32_t classes = 0;
    for (int32_t k = 0; k < num_classes; ++k) {
        const int64_t uni = tp[size_t(k)] + fp[size_t(k)] + fn[size_t(k)];
        if (uni == 0) continue;
        sum += double(tp[size_t(k)]) / double(uni);
        ++classes;
    }
    return classes == 0 ? 0.0 : sum / double(classes);
}

}  // namespace voxkit
