#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "hardneg/corpus/types.hpp"

namespace hardneg::dataset {

// Logits of the "True" and "False" tokens at the answer position.
struct TokenLogits {
    double l_true = 0.0;
    double l_false = 0.0;
};

// Two-way softmax over the True/False logits, evaluated as a logistic of the
// logit gap so large logits cannot overflow.
inline double relevance_score(TokenLogits logits) {
    if (!std::isfinite(logits.l_true) || !std::isfinite(logits.l_false))
        throw ValidationError("relevance_score: logits must be finite");
    return 1.0 / (1.0 + std::exp(logits.l_false - logits.l_true));
}

enum class Label { positive, negative };

struct LossTerms {
    double weighted_nll = 0.0;  // sum of -w * log p(label)
    double weight_sum = 0.0;

    [[nodiscard]] double mean() const { return weight_sum > 0.0 ? weighted_nll / weight_sum : 0.0; }
};

// Weighted binary cross-entropy terms. `probs[i]` is the relevance
// probability of example i and must lie strictly inside (0, 1), except that
// an exactly correct prediction (p = 1 for a positive, p = 0 for a negative)
// contributes zero.
inline LossTerms weighted_loss_terms(std::span<const Label> labels, std::span<const double> probs,
                                     double w_pos = 3.0, double w_neg = 1.0) {
    if (labels.size() != probs.size()) throw ValidationError("weighted loss: one probability per example required");
    if (!(w_pos > 0.0) || !(w_neg > 0.0)) throw ValidationError("weighted loss: weights must be positive");
    LossTerms t;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double p = probs[i];
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("weighted loss: probability outside [0,1]");
        const bool positive = labels[i] == Label::positive;
        const double p_label = positive ? p : 1.0 - p;
        if (p_label <= 0.0) throw ValidationError("weighted loss: probability of the true label is 0");
        const double w = positive ? w_pos : w_neg;
        t.weighted_nll += -w * std::log(p_label);
        t.weight_sum += w;
    }
    return t;
}

}  // namespace hardneg::dataset
