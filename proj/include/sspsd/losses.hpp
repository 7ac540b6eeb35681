#pragma once

#include <cstdint>

#include "sspsd/types.hpp"

namespace sspsd {

struct LossBreakdown {
    double sup = 0.0;
    double unsup = 0.0;
    double beta = 0.0;
    double total = 0.0;
    double masked_cell_fraction = 0.0;  // fraction of cells with C_T < tau
};

/// Supervised detection loss. For each cell: (C - 1)^2 + ||q - q_hat||^2 when
/// the target cell holds a point, C^2 otherwise; q is the 8-vector
/// (x_off, y_off, cos t1, sin t1, cos t2, sin t2, s, t) in cell-normalized
/// units. Sum over all cells.
double supervised_loss(const PredictionGrid& pred, const PredictionGrid& target);

/// dLoss/dPred of supervised_loss, same layout as the grid.
PredictionGrid supervised_loss_grad(const PredictionGrid& pred,
                                    const PredictionGrid& target);

struct CgmResult {
    double loss = 0.0;
    double masked_cell_fraction = 0.0;
};

/// Confidence-guided mask consistency: per cell (C_S - C_T)^2 always, plus
/// ||q_S - q_T||^2 * C_T when C_T >= tau. The teacher grid is a constant;
/// no gradient flows into it.
double cgm_consistency_loss(const PredictionGrid& student,
                            const PredictionGrid& teacher, double tau);
CgmResult cgm_consistency(const PredictionGrid& student,
                          const PredictionGrid& teacher, double tau);
PredictionGrid cgm_loss_grad(const PredictionGrid& student,
                             const PredictionGrid& teacher, double tau);

/// Plain mean-teacher consistency (ablation baseline): unweighted
/// (C_S - C_T)^2 + ||q_S - q_T||^2 over every cell.
double plain_consistency_loss(const PredictionGrid& student,
                              const PredictionGrid& teacher);
PredictionGrid plain_consistency_grad(const PredictionGrid& student,
                                      const PredictionGrid& teacher);

/// Total objective: beta = n_unlabeled / n_labeled, total = sup + beta * unsup.
/// Throws ZeroLabeledError when n_labeled == 0.
LossBreakdown total_loss(double sup, double unsup, std::int64_t n_unlabeled,
                         std::int64_t n_labeled, double masked_cell_fraction = 0.0);

}  // namespace sspsd
