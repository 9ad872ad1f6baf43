#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "tcm/kernels/kernels.hpp"

using namespace tcm::kernels;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Shapes straddle the 4x8 register tile and the 4-wide vector edges.
const std::size_t kDims[][3] = {{1, 1, 1}, {3, 5, 7},   {4, 8, 16}, {5, 9, 3},
                                {17, 31, 13}, {64, 33, 65}, {2, 100, 1}, {33, 1, 40}};

}  // namespace

TEST_CASE("scalar table is always present and active() is one of the tables") {
  CHECK(std::string(scalar_table().name) == "scalar");
  const KernelTable& a = active();
  CHECK((&a == &scalar_table() || &a == avx2_table()));
}

TEST_CASE("select() switches tables and rejects unknown names") {
  const std::string before = active().name;
  CHECK(select("scalar"));
  CHECK(std::string(active().name) == "scalar");
  CHECK_FALSE(select("sse9"));
  CHECK(select(before));
}

TEST_CASE("avx2 kernels match the scalar reference") {
  const KernelTable* v = avx2_table();
  if (v == nullptr) {
    MESSAGE("AVX2 unavailable; equivalence not exercised");
    return;
  }
  const KernelTable& s = scalar_table();
  std::uint64_t seed = 1;
  for (const auto& d : kDims) {
    const std::size_t m = d[0], n = d[1], k = d[2];
    CAPTURE(m);
    CAPTURE(n);
    CAPTURE(k);
    const auto a = noise(m * k, seed++), b = noise(k * n, seed++), c0 = noise(m * n, seed++);
    const auto at = noise(k * m, seed++), bt = noise(n * k, seed++);

    auto c1 = c0, c2 = c0;
    s.gemm(m, n, k, a.data(), k, b.data(), n, c1.data(), n);
    v->gemm(m, n, k, a.data(), k, b.data(), n, c2.data(), n);
    CHECK(bitwise_equal(c1, c2));

    c1 = c0, c2 = c0;
    s.gemm_tn(m, n, k, at.data(), m, b.data(), n, c1.data(), n);
    v->gemm_tn(m, n, k, at.data(), m, b.data(), n, c2.data(), n);
    CHECK(bitwise_equal(c1, c2));

    c1 = c0, c2 = c0;
    s.gemm_nt(m, n, k, a.data(), k, bt.data(), k, c1.data(), n);
    v->gemm_nt(m, n, k, a.data(), k, bt.data(), k, c2.data(), n);
    CHECK(max_abs_diff(c1, c2) <= 1e-12 * static_cast<double>(k));
  }

  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 16u, 1001u}) {
    CAPTURE(n);
    const auto x = noise(n, seed++), y = noise(n, seed++);
    CHECK(std::abs(s.dot(n, x.data(), y.data()) - v->dot(n, x.data(), y.data())) <=
          1e-12 * static_cast<double>(n + 1));

    auto y1 = y, y2 = y;
    s.axpy(n, 0.37, x.data(), y1.data());
    v->axpy(n, 0.37, x.data(), y2.data());
    CHECK(bitwise_equal(y1, y2));

    std::vector<double> o1(n), o2(n);
    s.add(n, x.data(), y.data(), o1.data());
    v->add(n, x.data(), y.data(), o2.data());
    CHECK(bitwise_equal(o1, o2));
    s.mul(n, x.data(), y.data(), o1.data());
    v->mul(n, x.data(), y.data(), o2.data());
    CHECK(bitwise_equal(o1, o2));
    s.scale(n, -1.25, x.data(), o1.data());
    v->scale(n, -1.25, x.data(), o2.data());
    CHECK(bitwise_equal(o1, o2));
    s.relu(n, x.data(), o1.data());
    v->relu(n, x.data(), o2.data());
    CHECK(bitwise_equal(o1, o2));
  }
}

TEST_CASE("gemm honours leading dimensions larger than the logical width") {
  const KernelTable& s = scalar_table();
  // A is the top-left 2x2 block of a 2x3 buffer.
  const std::vector<double> a{1, 2, 99, 3, 4, 99};
  const std::vector<double> b{5, 6, 7, 8};
  std::vector<double> c{1, 1, 1, 1};
  s.gemm(2, 2, 2, a.data(), 3, b.data(), 2, c.data(), 2);
  CHECK(c == std::vector<double>{20, 23, 44, 51});
  if (const KernelTable* v = avx2_table()) {
    std::vector<double> c2{1, 1, 1, 1};
    v->gemm(2, 2, 2, a.data(), 3, b.data(), 2, c2.data(), 2);
    CHECK(c2 == c);
  }
}
