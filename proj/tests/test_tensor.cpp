#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "dcache/tensor.hpp"

using namespace dcache;

namespace {

Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, float lo = -1.0f,
                     float hi = 1.0f) {
    std::uniform_real_distribution<float> dist(lo, hi);
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; r++)
        for (std::size_t c = 0; c < cols; c++)
            m(r, c) = dist(rng);
    return m;
}

std::vector<std::size_t> random_ascending_indices(std::mt19937_64& rng, std::size_t limit) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < limit; i++)
        if (rng() % 2 == 0)
            idx.push_back(i);
    return idx;
}

}  // namespace

TEST_CASE("matmul identity and hand-evaluated products") {
    const Matrix id = Matrix::from_rows({{1, 0}, {0, 1}});
    const Matrix b = Matrix::from_rows({{5, 6}, {7, 8}});
    CHECK(bit_equal(matmul(id, b), b));

    const Matrix row = Matrix::from_rows({{1, 2}});
    const Matrix col = Matrix::from_rows({{3}, {4}});
    const Matrix prod = matmul(row, col);
    REQUIRE(prod.rows() == 1);
    REQUIRE(prod.cols() == 1);
    CHECK(prod(0, 0) == 11.0f);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    Matrix a(2, 3), b(4, 2);
    CHECK_THROWS_AS(matmul(a, b), contract_error);
}

TEST_CASE("matmul associativity on small random triples") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; trial++) {
        const Matrix a = random_matrix(rng, 3, 5);
        const Matrix b = random_matrix(rng, 5, 4);
        const Matrix c = random_matrix(rng, 4, 6);
        const Matrix left = matmul(matmul(a, b), c);
        const Matrix right = matmul(a, matmul(b, c));
        for (std::size_t r = 0; r < left.rows(); r++)
            for (std::size_t j = 0; j < left.cols(); j++) {
                const float x = left(r, j), y = right(r, j);
                const float scale = std::max({std::fabs(x), std::fabs(y), 1.0f});
                CHECK(std::fabs(x - y) / scale < 1e-4f);
            }
    }
}

TEST_CASE("softmax_rows symmetry, overflow safety and a derived value") {
    const Matrix sym = softmax_rows(Matrix::from_rows({{0, 0}}));
    CHECK(sym(0, 0) == Catch::Approx(0.5).margin(1e-7));
    CHECK(sym(0, 1) == Catch::Approx(0.5).margin(1e-7));

    const Matrix big = softmax_rows(Matrix::from_rows({{1000, 1000, 1000}}));
    for (std::size_t j = 0; j < 3; j++)
        CHECK(big(0, j) == Catch::Approx(1.0 / 3.0).margin(1e-7));

    // softmax([0, ln 3]) = [1, 3] / 4
    const Matrix derived = softmax_rows(Matrix::from_rows({{0.0f, std::log(3.0f)}}));
    CHECK(derived(0, 0) == Catch::Approx(0.25).margin(1e-6));
    CHECK(derived(0, 1) == Catch::Approx(0.75).margin(1e-6));
}

TEST_CASE("softmax_rows rows sum to one and shift invariance") {
    std::mt19937_64 rng(11);
    const Matrix m = random_matrix(rng, 8, 13, -4.0f, 4.0f);
    const Matrix s = softmax_rows(m);
    Matrix shifted = m;
    for (std::size_t r = 0; r < m.rows(); r++)
        for (std::size_t c = 0; c < m.cols(); c++)
            shifted(r, c) += 2.5f;
    const Matrix s2 = softmax_rows(shifted);
    for (std::size_t r = 0; r < m.rows(); r++) {
        double sum = 0.0;
        for (std::size_t c = 0; c < m.cols(); c++) {
            sum += s(r, c);
            CHECK(std::fabs(s(r, c) - s2(r, c)) < 1e-6f);
        }
        CHECK(std::fabs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("layer_norm zero-variance row and near fixed point") {
    const Matrix flat = layer_norm(Matrix::from_rows({{3.5f, 3.5f, 3.5f, 3.5f}}), 1e-5f);
    for (std::size_t j = 0; j < 4; j++)
        CHECK(flat(0, j) == Catch::Approx(0.0).margin(1e-6));

    // mean 0 / var 1 input is (nearly) a fixed point
    const Matrix fp = layer_norm(Matrix::from_rows({{1.0f, -1.0f}}), 1e-5f);
    CHECK(fp(0, 0) == Catch::Approx(1.0).margin(1e-3));
    CHECK(fp(0, 1) == Catch::Approx(-1.0).margin(1e-3));
}

TEST_CASE("layer_norm output rows have mean zero and unit variance") {
    std::mt19937_64 rng(13);
    const Matrix m = random_matrix(rng, 6, 32, -3.0f, 5.0f);
    const Matrix n = layer_norm(m, 1e-5f);
    for (std::size_t r = 0; r < n.rows(); r++) {
        double mean = 0.0;
        for (std::size_t c = 0; c < n.cols(); c++)
            mean += n(r, c);
        mean /= n.cols();
        CHECK(std::fabs(mean) < 1e-5);
        double var = 0.0;
        for (std::size_t c = 0; c < n.cols(); c++)
            var += (n(r, c) - mean) * (n(r, c) - mean);
        var /= n.cols();
        CHECK(std::fabs(var - 1.0) < 1e-3);
    }
    CHECK_THROWS_AS(layer_norm(Matrix(2, 0), 1e-5f), contract_error);
}

TEST_CASE("cosine_similarity basics") {
    const std::vector<float> u{1, 2, 3};
    CHECK(cosine_similarity(u, u) == Catch::Approx(1.0).margin(1e-9));

    const std::vector<float> ex{1, 0}, ey{0, 1};
    CHECK(cosine_similarity(ex, ey) == Catch::Approx(0.0).margin(1e-9));

    const std::vector<float> a{1, 1}, b{1, 0};
    CHECK(cosine_similarity(a, b) == Catch::Approx(0.70710678).margin(1e-6));

    const std::vector<float> tiny{1e-13f, 0}, big{1, 0};
    CHECK(cosine_similarity(tiny, big) == 0.0);

    const std::vector<float> mism{1, 2, 3, 4};
    CHECK_THROWS_AS(cosine_similarity(u, mism), contract_error);
}

TEST_CASE("cosine_similarity is scale invariant") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    std::uniform_real_distribution<float> scale(0.1f, 10.0f);
    for (int trial = 0; trial < 200; trial++) {
        std::vector<float> u(8), v(8), su(8), sv(8);
        const float alpha = scale(rng), beta = scale(rng);
        for (std::size_t i = 0; i < 8; i++) {
            u[i] = dist(rng);
            v[i] = dist(rng);
            su[i] = alpha * u[i];
            sv[i] = beta * v[i];
        }
        CHECK(std::fabs(cosine_similarity(u, v) - cosine_similarity(su, sv)) < 1e-6);
    }
}

TEST_CASE("l2_distance basics") {
    const std::vector<float> u{1, 2, 3};
    CHECK(l2_distance(u, u) == 0.0);

    const std::vector<float> o{0, 0}, p{3, 4};
    CHECK(l2_distance(o, p) == Catch::Approx(5.0).margin(1e-9));

    std::mt19937_64 rng(19);
    std::uniform_real_distribution<float> dist(-5.0f, 5.0f);
    std::vector<float> a(6), b(6);
    for (auto& x : a)
        x = dist(rng);
    for (auto& x : b)
        x = dist(rng);
    CHECK(l2_distance(a, b) == l2_distance(b, a));
}

TEST_CASE("gather and scatter row selection") {
    const Matrix m = Matrix::from_rows({{1}, {2}, {3}});

    SECTION("scatter a single row") {
        const Matrix out = scatter_rows(m, {1}, Matrix::from_rows({{9}}));
        CHECK(out(0, 0) == 1.0f);
        CHECK(out(1, 0) == 9.0f);
        CHECK(out(2, 0) == 3.0f);
    }

    SECTION("non-ascending index list is rejected") {
        CHECK_THROWS_AS(gather_rows(m, {2, 0}), contract_error);
        CHECK_THROWS_AS(gather_rows(m, {1, 1}), contract_error);
        CHECK_THROWS_AS(gather_rows(m, {3}), contract_error);
    }

    SECTION("scatter validates shapes") {
        CHECK_THROWS_AS(scatter_rows(m, {0, 1}, Matrix::from_rows({{9}})), contract_error);
        CHECK_THROWS_AS(scatter_rows(m, {0}, Matrix(1, 2)), contract_error);
    }
}

TEST_CASE("scatter(gather) round trip is bit exact") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 50; trial++) {
        const Matrix m = random_matrix(rng, 10, 7);
        const auto idx = random_ascending_indices(rng, m.rows());
        const Matrix out = scatter_rows(m, idx, gather_rows(m, idx));
        CHECK(bit_equal(out, m));
    }
}

TEST_CASE("vconcat and slice_rows round trip") {
    std::mt19937_64 rng(29);
    const Matrix a = random_matrix(rng, 3, 4);
    const Matrix b = random_matrix(rng, 5, 4);
    const Matrix cat = vconcat(a, b);
    REQUIRE(cat.rows() == 8);
    CHECK(bit_equal(slice_rows(cat, 0, 3), a));
    CHECK(bit_equal(slice_rows(cat, 3, 8), b));

    const Matrix empty(0, 4);
    CHECK(bit_equal(vconcat(empty, b), b));
    CHECK_THROWS_AS(vconcat(a, Matrix(2, 5)), contract_error);
}
