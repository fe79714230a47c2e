#include <cmath>
#include <vector>

#include "doctest.h"
#include "pedflow/kernels.hpp"
#include "pedflow/nn/model.hpp"
#include "pedflow/random.hpp"
#include "support/nn_oracles.hpp"

using namespace pedflow;
using namespace pedflow::kernels;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-2, 2);
  return v;
}

// Restores the startup backend when a test switches it.
struct BackendGuard {
  Backend saved = active_backend();
  ~BackendGuard() { set_backend(saved); }
};

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("scalar kernels against direct loops") {
  const KernelTable& k = table(Backend::Scalar);
  Rng rng(1);
  for (std::size_t n : {1u, 3u, 4u, 7u, 16u, 33u}) {
    const auto a = random_vec(rng, n), b = random_vec(rng, n);
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) d += a[i] * b[i];
    CHECK(k.dot(a.data(), b.data(), n) == doctest::Approx(d).epsilon(1e-14));
    auto y = b;
    k.axpy(0.5, a.data(), y.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == doctest::Approx(b[i] + 0.5 * a[i]).epsilon(1e-15));
  }
  const std::size_t rows = 5, cols = 7;
  const auto w = random_vec(rng, rows * cols), x = random_vec(rng, cols), g = random_vec(rng, rows);
  std::vector<double> y(rows, 1.0), xg(cols, -1.0);
  k.gemv(w.data(), rows, cols, x.data(), y.data());
  k.gemv_t(w.data(), rows, cols, g.data(), xg.data());
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 1.0;
    for (std::size_t c = 0; c < cols; ++c) s += w[r * cols + c] * x[c];
    CHECK(y[r] == doctest::Approx(s).epsilon(1e-14));
  }
  for (std::size_t c = 0; c < cols; ++c) {
    double s = -1.0;
    for (std::size_t r = 0; r < rows; ++r) s += w[r * cols + c] * g[r];
    CHECK(xg[c] == doctest::Approx(s).epsilon(1e-14));
  }
  auto w2 = w;
  k.ger(w2.data(), rows, cols, g.data(), x.data());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) CHECK(w2[r * cols + c] == doctest::Approx(w[r * cols + c] + g[r] * x[c]).epsilon(1e-14));
}

TEST_CASE("AVX2 kernels agree with the scalar reference") {
  if (!avx2_available() || detail::avx2_table() == nullptr) {
    MESSAGE("AVX2 not available, skipped");
    return;
  }
  // Reordered sums and fused multiply-adds: agreement up to rounding, bounded
  // by the magnitude of the terms. The Adam update is elementwise and exact.
  const double tol = 1e-14;
  const KernelTable& s = table(Backend::Scalar);
  const KernelTable& v = table(Backend::Avx2);
  Rng rng(2);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t rows = 1 + rng.index(40), cols = 1 + rng.index(70);
    const auto a = random_vec(rng, cols), b = random_vec(rng, cols);
    double mag = 0.0;
    for (std::size_t i = 0; i < cols; ++i) mag += std::abs(a[i] * b[i]);
    CHECK(std::abs(v.dot(a.data(), b.data(), cols) - s.dot(a.data(), b.data(), cols)) <= tol * mag);
    auto y1 = b, y2 = b;
    s.axpy(-1.3, a.data(), y1.data(), cols);
    v.axpy(-1.3, a.data(), y2.data(), cols);
    for (std::size_t i = 0; i < cols; ++i) CHECK(std::abs(y1[i] - y2[i]) <= tol * (std::abs(b[i]) + 1.3 * std::abs(a[i])));
    const auto w = random_vec(rng, rows * cols), g = random_vec(rng, rows);
    std::vector<double> o1(rows, 0.5), o2(rows, 0.5), x1(cols, 0.0), x2(cols, 0.0);
    s.gemv(w.data(), rows, cols, a.data(), o1.data());
    v.gemv(w.data(), rows, cols, a.data(), o2.data());
    for (std::size_t r = 0; r < rows; ++r) {
      double m = 0.5;
      for (std::size_t c = 0; c < cols; ++c) m += std::abs(w[r * cols + c] * a[c]);
      CHECK(std::abs(o1[r] - o2[r]) <= tol * m);
    }
    s.gemv_t(w.data(), rows, cols, g.data(), x1.data());
    v.gemv_t(w.data(), rows, cols, g.data(), x2.data());
    for (std::size_t c = 0; c < cols; ++c) {
      double m = 0.0;
      for (std::size_t r = 0; r < rows; ++r) m += std::abs(w[r * cols + c] * g[r]);
      CHECK(std::abs(x1[c] - x2[c]) <= tol * m);
    }
    auto w1 = w, w2 = w;
    s.ger(w1.data(), rows, cols, g.data(), a.data());
    v.ger(w2.data(), rows, cols, g.data(), a.data());
    for (std::size_t i = 0; i < w.size(); ++i)
      CHECK(std::abs(w1[i] - w2[i]) <= tol * (std::abs(w[i]) + std::abs(g[i / cols] * a[i % cols])));
    auto p1 = w, p2 = w, m1 = random_vec(rng, w.size()), v1 = random_vec(rng, w.size());
    for (double& q : v1) q = std::abs(q);
    auto m2 = m1, v2 = v1;
    const auto grad = random_vec(rng, w.size());
    const AdamCoeffs c{0.9, 0.999, 1e-3 / (1 - 0.9), 1.0 / std::sqrt(1 - 0.999), 1e-8};
    s.adam(p1.data(), grad.data(), m1.data(), v1.data(), w.size(), c);
    v.adam(p2.data(), grad.data(), m2.data(), v2.data(), w.size(), c);
    CHECK(p1 == p2);
    CHECK(m1 == m2);
    CHECK(v1 == v2);
  }
}

TEST_CASE("model gradients agree across backends") {
  if (!avx2_available() || detail::avx2_table() == nullptr) return;
  BackendGuard guard;
  const nn::ModelConfig c = testing::tiny_config();
  Rng rng(6);
  const nn::ModelParams p = testing::random_params(c, rng);
  const features::Sample smp = testing::random_sample(c, rng);
  std::vector<double> g1(p.size(), 0.0), g2(p.size(), 0.0);
  nn::ForwardCache cache;
  set_backend(Backend::Scalar);
  const double l1 = nn::loss_and_gradient(p, smp, {}, g1, cache);
  set_backend(Backend::Avx2);
  const double l2 = nn::loss_and_gradient(p, smp, {}, g2, cache);
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));
  double diff = 0.0, mag = 0.0;
  for (std::size_t i = 0; i < g1.size(); ++i) {
    diff = std::max(diff, std::abs(g1[i] - g2[i]));
    mag = std::max(mag, std::abs(g1[i]));
  }
  CHECK(diff <= 1e-10 * mag);
}

TEST_CASE("switching backends") {
  BackendGuard guard;
  set_backend(Backend::Scalar);
  CHECK(active_backend() == Backend::Scalar);
  if (avx2_available() && detail::avx2_table() != nullptr) {
    set_backend(Backend::Avx2);
    CHECK(active_backend() == Backend::Avx2);
  }
}

TEST_CASE("backend names") {
  CHECK(std::string(backend_name(Backend::Scalar)) == "scalar");
  CHECK(std::string(backend_name(Backend::Avx2)) == "avx2");
}

}
