#include <cmath>
#include <sstream>

#include <json.hpp>

#include "rlens/models.hpp"

namespace rlens {

// Householder QR with column pivoting; tolerates the rank-deficient
// designs that constant or collinear lag columns produce.
std::vector<double> solve_least_squares(const std::vector<std::vector<double>>& rows,
                                        const std::vector<double>& rhs, std::size_t m) {
    const std::size_t n = rows.size();
    if (n < m) throw ValidationError("least squares: fewer rows than unknowns");
    if (rhs.size() != n) throw ValidationError("least squares: rhs size mismatch");

    // column-major working copy
    std::vector<std::vector<double>> a(m, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].size() != m) throw ValidationError("least squares: ragged row");
        for (std::size_t j = 0; j < m; ++j) a[j][i] = rows[i][j];
    }
    std::vector<double> b = rhs;
    std::vector<std::size_t> perm(m);
    for (std::size_t j = 0; j < m; ++j) perm[j] = j;

    auto col_norm2_tail = [&](std::size_t j, std::size_t k) {
        double s = 0.0;
        for (std::size_t i = k; i < n; ++i) s += a[j][i] * a[j][i];
        return s;
    };

    double norm0 = 0.0;
    std::size_t rank = m;
    for (std::size_t k = 0; k < m; ++k) {
        // pivot on largest remaining column norm
        std::size_t best = k;
        double best_norm = col_norm2_tail(k, k);
        for (std::size_t j = k + 1; j < m; ++j) {
            double nj = col_norm2_tail(j, k);
            if (nj > best_norm) {
                best_norm = nj;
                best = j;
            }
        }
        if (best != k) {
            std::swap(a[best], a[k]);
            std::swap(perm[best], perm[k]);
        }
        if (k == 0) norm0 = std::sqrt(best_norm);
        if (std::sqrt(best_norm) <= 1e-12 * std::max(1.0, norm0)) {
            rank = k;
            break;
        }
        // Householder vector for column k below row k
        double alpha = std::sqrt(best_norm);
        if (a[k][k] > 0) alpha = -alpha;
        std::vector<double> v(n - k);
        v[0] = a[k][k] - alpha;
        for (std::size_t i = k + 1; i < n; ++i) v[i - k] = a[k][i];
        double vnorm2 = 0.0;
        for (double x : v) vnorm2 += x * x;
        if (vnorm2 > 0.0) {
            for (std::size_t j = k; j < m; ++j) {
                double dot = 0.0;
                for (std::size_t i = k; i < n; ++i) dot += v[i - k] * a[j][i];
                double c = 2.0 * dot / vnorm2;
                for (std::size_t i = k; i < n; ++i) a[j][i] -= c * v[i - k];
            }
            double dot = 0.0;
            for (std::size_t i = k; i < n; ++i) dot += v[i - k] * b[i];
            double c = 2.0 * dot / vnorm2;
            for (std::size_t i = k; i < n; ++i) b[i] -= c * v[i - k];
        }
        a[k][k] = alpha;
    }

    // back substitution on the leading rank x rank triangle
    std::vector<double> xp(m, 0.0);
    for (std::size_t ii = rank; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t j = ii + 1; j < rank; ++j) s -= a[j][ii] * xp[j];
        xp[ii] = s / a[ii][ii];
    }
    std::vector<double> x(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) x[perm[j]] = xp[j];
    return x;
}

ArForecaster::ArForecaster(int lag, std::vector<double> coeffs) : lag_(lag), coeffs_(std::move(coeffs)) {
    if (static_cast<int>(coeffs_.size()) != lag_)
        throw ValidationError("AR coefficient count does not match lag order");
}

ArForecaster ArForecaster::fit(const ForecasterSpec& spec, const LagDataset& data) {
    auto coeffs =
        solve_least_squares(data.inputs, data.targets, static_cast<std::size_t>(spec.lag_order));
    if (!all_finite(coeffs)) throw NumericError("ar-least-squares: non-finite coefficients");
    return ArForecaster(spec.lag_order, std::move(coeffs));
}

double ArForecaster::predict_next(std::span<const double> history) const {
    check_history(history);
    double acc = 0.0;
    for (int k = 0; k < lag_; ++k) acc += coeffs_[static_cast<std::size_t>(k)] * history[static_cast<std::size_t>(k)];
    return acc;
}

std::string ArForecaster::to_json() const {
    nlohmann::json j;
    j["kind"] = name();
    j["lag"] = lag_;
    j["coefficients"] = coeffs_;
    return j.dump();
}

}  // namespace rlens
