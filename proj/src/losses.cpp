#include "sspsd/losses.hpp"

#include <string>

namespace sspsd {

namespace {

void check_same_shape(const PredictionGrid& a, const PredictionGrid& b,
                      const char* who) {
    if (a.size != b.size || a.cells.size() != b.cells.size()) {
        throw ShapeError(std::string(who) + ": grid shape mismatch");
    }
}

constexpr int kQBegin = 1;  // channels 1..8 form the q-vector

}  // namespace

double supervised_loss(const PredictionGrid& pred, const PredictionGrid& target) {
    check_same_shape(pred, target, "supervised_loss");
    double loss = 0.0;
    for (int row = 0; row < pred.size; ++row) {
        for (int col = 0; col < pred.size; ++col) {
            const double c = pred.at(row, col, PredictionGrid::kConf);
            if (target.at(row, col, PredictionGrid::kConf) == 0.0) {
                loss += c * c;
            } else {
                loss += (c - 1.0) * (c - 1.0);
                for (int ch = kQBegin; ch < PredictionGrid::kChannels; ++ch) {
                    const double d = pred.at(row, col, ch) - target.at(row, col, ch);
                    loss += d * d;
                }
            }
        }
    }
    return loss;
}

PredictionGrid supervised_loss_grad(const PredictionGrid& pred,
                                    const PredictionGrid& target) {
    check_same_shape(pred, target, "supervised_loss_grad");
    PredictionGrid grad(pred.size);
    for (int row = 0; row < pred.size; ++row) {
        for (int col = 0; col < pred.size; ++col) {
            const double c = pred.at(row, col, PredictionGrid::kConf);
            if (target.at(row, col, PredictionGrid::kConf) == 0.0) {
                grad.at(row, col, PredictionGrid::kConf) = 2.0 * c;
            } else {
                grad.at(row, col, PredictionGrid::kConf) = 2.0 * (c - 1.0);
                for (int ch = kQBegin; ch < PredictionGrid::kChannels; ++ch) {
                    grad.at(row, col, ch) =
                        2.0 * (pred.at(row, col, ch) - target.at(row, col, ch));
                }
            }
        }
    }
    return grad;
}

CgmResult cgm_consistency(const PredictionGrid& student,
                          const PredictionGrid& teacher, double tau) {
    check_same_shape(student, teacher, "cgm_consistency_loss");
    CgmResult r;
    int masked = 0;
    for (int row = 0; row < student.size; ++row) {
        for (int col = 0; col < student.size; ++col) {
            const double ct = teacher.at(row, col, PredictionGrid::kConf);
            const double dc = student.at(row, col, PredictionGrid::kConf) - ct;
            r.loss += dc * dc;
            if (ct < tau) {
                ++masked;
                continue;
            }
            double q = 0.0;
            for (int ch = kQBegin; ch < PredictionGrid::kChannels; ++ch) {
                const double d = student.at(row, col, ch) - teacher.at(row, col, ch);
                q += d * d;
            }
            r.loss += q * ct;
        }
    }
    r.masked_cell_fraction = static_cast<double>(masked) / student.cell_count();
    return r;
}

double cgm_consistency_loss(const PredictionGrid& student,
                            const PredictionGrid& teacher, double tau) {
    return cgm_consistency(student, teacher, tau).loss;
}

PredictionGrid cgm_loss_grad(const PredictionGrid& student,
                             const PredictionGrid& teacher, double tau) {
    check_same_shape(student, teacher, "cgm_loss_grad");
    PredictionGrid grad(student.size);
    for (int row = 0; row < student.size; ++row) {
        for (int col = 0; col < student.size; ++col) {
            const double ct = teacher.at(row, col, PredictionGrid::kConf);
            grad.at(row, col, PredictionGrid::kConf) =
                2.0 * (student.at(row, col, PredictionGrid::kConf) - ct);
            if (ct < tau) continue;
            for (int ch = kQBegin; ch < PredictionGrid::kChannels; ++ch) {
                grad.at(row, col, ch) =
                    2.0 * (student.at(row, col, ch) - teacher.at(row, col, ch)) * ct;
            }
        }
    }
    return grad;
}

double plain_consistency_loss(const PredictionGrid& student,
                              const PredictionGrid& teacher) {
    check_same_shape(student, teacher, "plain_consistency_loss");
    double loss = 0.0;
    for (std::size_t i = 0; i < student.cells.size(); ++i) {
        const double d = student.cells[i] - teacher.cells[i];
        loss += d * d;
    }
    return loss;
}

PredictionGrid plain_consistency_grad(const PredictionGrid& student,
                                      const PredictionGrid& teacher) {
    check_same_shape(student, teacher, "plain_consistency_grad");
    PredictionGrid grad(student.size);
    for (std::size_t i = 0; i < student.cells.size(); ++i) {
        grad.cells[i] = 2.0 * (student.cells[i] - teacher.cells[i]);
    }
    return grad;
}

LossBreakdown total_loss(double sup, double unsup, std::int64_t n_unlabeled,
                         std::int64_t n_labeled, double masked_cell_fraction) {
    if (n_labeled < 1) throw ZeroLabeledError("total_loss: n_labeled must be >= 1");
    LossBreakdown b;
    b.sup = sup;
    b.unsup = unsup;
    b.beta = static_cast<double>(n_unlabeled) / static_cast<double>(n_labeled);
    b.total = sup + b.beta * unsup;
    b.masked_cell_fraction = masked_cell_fraction;
    return b;
}

}  // namespace sspsd
