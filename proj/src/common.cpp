#include "iia/common.hpp"

namespace iia {

Matrix stack_lags(const Matrix& x, int order, int first_lag, int width) {
    require(order >= 1, "stack_lags: order must be >= 1");
    require(first_lag >= 0 && width >= 1 && first_lag + width - 1 <= order,
            "stack_lags: lag window exceeds order");
    require(x.rows() > order, "stack_lags: series shorter than order + 1");
    const Eigen::Index n = x.cols();
    const Eigen::Index rows = x.rows() - order;
    Matrix out(rows, n * width);
    for (int w = 0; w < width; ++w)
        out.middleCols(w * n, n) = x.middleRows(order - first_lag - w, rows);
    return out;
}

}  // namespace iia
