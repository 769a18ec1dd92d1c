#include "reference.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace ref {

knights::Matrix gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    knights::Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = g(rng);
    }
    return m;
}

Rows to_rows(const knights::Matrix& m) {
    Rows out(m.rows(), std::vector<double>(m.cols()));
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
    }
    return out;
}

double h(const std::vector<double>& u, const std::vector<double>& v, double tau) {
    double uv = 0.0, uu = 0.0, vv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        uv += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    return std::exp(uv / (std::sqrt(uu) * std::sqrt(vv) * tau));
}

double instance_loss(const Rows& g, const Rows& g_twin, double tau) {
    const std::size_t n = g.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) denom += h(g[i], g[j], tau);
            denom += h(g[i], g_twin[j], tau);
        }
        total += -std::log(h(g[i], g_twin[i], tau) / denom);
    }
    return total / static_cast<double>(n);
}

double local_local_loss(const Rows& g, const Rows& g_twin, double tau) {
    // Same structure as the instance loss but summed over timestamps.
    return instance_loss(g, g_twin, tau) * static_cast<double>(g.size());
}

double global_local_loss(const Rows& l, const Rows& g, double tau) {
    const std::size_t nt = l.size();
    double total = 0.0;
    for (std::size_t k = 0; k < nt; ++k) {
        double d1 = 0.0, d2 = 0.0;
        for (std::size_t q = 0; q < nt; ++q) {
            d1 += h(l[k], g[q], tau);
            d2 += h(g[k], l[q], tau);
        }
        total -= std::log(h(l[k], g[k], tau) / d1) + std::log(h(g[k], l[k], tau) / d2);
    }
    return total;
}

double central_difference(const std::function<double()>& f, double& x, double step) {
    const double saved = x;
    x = saved + step;
    const double plus = f();
    x = saved - step;
    const double minus = f();
    x = saved;
    return (plus - minus) / (2.0 * step);
}

namespace {

Rows matmul(const Rows& a, const Rows& b) {
    Rows out(a.size(), std::vector<double>(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b[0].size(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < b.size(); ++k) s += a[i][k] * b[k][j];
            out[i][j] = s;
        }
    }
    return out;
}

}  // namespace

Rows vanilla_attention(const Rows& x, const Rows& wq, const Rows& wk, const Rows& wv, const Rows& wo,
                       std::size_t heads, bool residual) {
    const Rows q = matmul(x, wq);
    const Rows k = matmul(x, wk);
    const Rows v = matmul(x, wv);
    const std::size_t n = x.size();
    const std::size_t dim = q[0].size();
    const std::size_t hd = dim / heads;
    Rows concat(n, std::vector<double>(dim, 0.0));
    for (std::size_t head = 0; head < heads; ++head) {
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> w(n);
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t c = head * hd; c < (head + 1) * hd; ++c) s += q[i][c] * k[j][c];
                w[j] = std::exp(s / std::sqrt(static_cast<double>(hd)));
                sum += w[j];
            }
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t c = head * hd; c < (head + 1) * hd; ++c) concat[i][c] += w[j] / sum * v[j][c];
            }
        }
    }
    Rows out = matmul(concat, wo);
    if (residual) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < dim; ++c) out[i][c] += x[i][c];
        }
    }
    return out;
}

knights::flow::GrayImage texture(std::size_t width, std::size_t height, std::uint64_t seed, double dx, double dy) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> freq(-0.4, 0.4);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    struct Wave {
        double fx, fy, ph;
    };
    std::vector<Wave> waves(12);
    for (auto& w : waves) w = {freq(rng), freq(rng), phase(rng)};
    knights::flow::GrayImage img(width, height);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            double v = 0.5;
            for (const auto& w : waves) {
                v += 0.04 * std::sin(w.fx * (static_cast<double>(x) - dx) + w.fy * (static_cast<double>(y) - dy) + w.ph);
            }
            img.at(x, y) = v;
        }
    }
    return img;
}

}  // namespace ref
