#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "promptface/autodiff.hpp"
#include "promptface/image.hpp"
#include "promptface/model.hpp"
#include "promptface/rng.hpp"

namespace promptface::test {

inline Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double s = 1.0) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = s * rng.normal();
    return m;
}

inline Image random_image(Rng& rng, int h, int w) {
    Image img(h, w);
    for (auto& v : img.data) v = rng.uniform();
    return img;
}

inline ModelConfig tiny_config() {
    ModelConfig m;
    m.image_height = m.image_width = 16;
    m.patch_height = m.patch_width = 8;
    m.channels = 16;
    m.heads = 2;
    m.encoder_depth = 1;
    m.decoder_depth = 2;
    return m;
}

/// Relative error between the analytic gradient of a scalar function of `x`
/// and central differences with step h. `f` records its graph on the tape
/// with `x` bound as a parameter and returns the 1x1 root.
inline double gradient_error(Matrix x, const std::function<Var(Tape&, Var)>& f, double h = 1e-4) {
    Matrix analytic = Matrix::Zero(x.rows(), x.cols());
    {
        Tape tape;
        const Var root = f(tape, tape.parameter(x, &analytic));
        tape.backward(root);
    }
    auto eval = [&](const Matrix& at) {
        Tape tape;
        return f(tape, tape.constant(at)).value()(0, 0);
    };
    double diff2 = 0.0, n1 = 0.0, n2 = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Matrix p = x, m = x;
        p.data()[i] += h;
        m.data()[i] -= h;
        const double numeric = (eval(p) - eval(m)) / (2.0 * h);
        diff2 += std::pow(numeric - analytic.data()[i], 2);
        n1 += numeric * numeric;
        n2 += analytic.data()[i] * analytic.data()[i];
    }
    return std::sqrt(diff2) / std::max({std::sqrt(n1), std::sqrt(n2), 1e-8});
}

}  // namespace promptface::test
