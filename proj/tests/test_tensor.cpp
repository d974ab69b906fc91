#include <catch2/catch_amalgamated.hpp>

#include "voxkit/tensor.hpp"

using namespace voxkit;

namespace {

SparseVoxelTensor<float> random_sparse(Extent e, int32_t batch, int64_t channels, double density,
                                       std::mt19937_64& eng) {
    std::uniform_real_distribution<double> u(0.0, 1.0), f(-2.0, 2.0);
    std::vector<Coord> coords;
    for (int32_t b = 0; b < batch; ++b)
        for (int32_t z = 0; z < e.d; ++z)
            for (int32_t y = 0; y < e.h; ++y)
                for (int32_t x = 0; x < e.w; ++x)
                    if (u(eng) < density) coords.push_back({b, z, y, x});
    if (coords.empty()) coords.push_back({0, 0, 0, 0});
    Matrix<float> feats(int64_t(coords.size()), channels);
    for (auto& v : feats.data) v = float(f(eng));
    return SparseVoxelTensor<float>(e, batch, coords, std::move(feats));
}

}  // namespace

TEST_CASE("densify places features and zero-fills", "[tensor]") {
    Matrix<float> feats(1, 1);
    feats(0, 0) = 5.0f;
    SparseVoxelTensor<float> s({4, 4, 4}, 1, {{0, 2, 1, 0}}, feats);
    DenseTensor<float> d = densify(s);
    REQUIRE(d.shape == std::vector<int64_t>{1, 1, 4, 4, 4});
    CHECK(d.at({0, 0, 2, 1, 0}) == 5.0f);
    double total = 0.0;
    for (float v : d.data) total += std::fabs(v);
    CHECK(total == 5.0);
}

TEST_CASE("densify of empty tensor is all zeros", "[tensor]") {
    auto s = SparseVoxelTensor<float>::empty({2, 2, 2}, 1, 3);
    DenseTensor<float> d = densify(s);
    REQUIRE(d.shape == std::vector<int64_t>{1, 3, 2, 2, 2});
    for (float v : d.data) CHECK(v == 0.0f);
}

TEST_CASE("sparsify gathers at mask coordinates", "[tensor]") {
    DenseTensor<float> d = DenseTensor<float>::zeros({1, 1, 2, 2, 2});
    for (auto& v : d.data) v = 7.0f;
    SparseVoxelTensor<float> s = sparsify(d, {{0, 0, 0, 0}});
    REQUIRE(s.active_count() == 1);
    CHECK(s.features()(0, 0) == 7.0f);
}

TEST_CASE("sparsify with a full-grid mask keeps every cell", "[tensor]") {
    DenseTensor<float> d = DenseTensor<float>::zeros({1, 2, 2, 3, 2});
    std::vector<Coord> mask;
    for (int32_t z = 0; z < 2; ++z)
        for (int32_t y = 0; y < 3; ++y)
            for (int32_t x = 0; x < 2; ++x) mask.push_back({0, z, y, x});
    SparseVoxelTensor<float> s = sparsify(d, mask);
    CHECK(s.active_count() == 2 * 3 * 2);
}

TEST_CASE("sparsify rejects out-of-range mask coordinates", "[tensor]") {
    DenseTensor<float> d = DenseTensor<float>::zeros({1, 1, 2, 2, 2});
    CHECK_THROWS_AS(sparsify(d, {{0, 3, 0, 0}}), RangeError);
}

TEST_CASE("round trip reproduces the sparse tensor exactly", "[tensor]") {
    std::mt19937_64 eng(7);
    for (int rep = 0; rep < 20; ++rep) {
        SparseVoxelTensor<float> s = random_sparse({5, 6, 4}, 2, 3, 0.3, eng);
        SparseVoxelTensor<float> back = sparsify(densify(s), s.coords());
        REQUIRE(back.same_coords(s));
        CHECK(back.features() == s.features());
    }
}

TEST_CASE("densify preserves L1 mass", "[tensor]") {
    std::mt19937_64 eng(11);
    SparseVoxelTensor<float> s = random_sparse({4, 4, 4}, 1, 4, 0.4, eng);
    double sparse_mass = 0.0, dense_mass = 0.0;
    for (float v : s.features().data) sparse_mass += std::fabs(double(v));
    for (float v : densify(s).data) dense_mass += std::fabs(double(v));
    CHECK(dense_mass == Catch::Approx(sparse_mass).epsilon(0));
}

TEST_CASE("duplicate coordinates are rejected", "[tensor]") {
    Matrix<float> feats(2, 1);
    CHECK_THROWS_AS(
        SparseVoxelTensor<float>({2, 2, 2}, 1, {{0, 0, 0, 0}, {0, 0, 0, 0}}, feats),
        RangeError);
}

TEST_CASE("coordinates are canonicalized to (b,z,y,x) ascending", "[tensor]") {
    Matrix<float> feats(3, 1);
    feats(0, 0) = 1.0f;
    feats(1, 0) = 2.0f;
    feats(2, 0) = 3.0f;
    SparseVoxelTensor<float> s({2, 2, 2}, 2, {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 0, 1}}, feats);
    REQUIRE(s.coords()[0] == Coord{0, 0, 0, 1});
    REQUIRE(s.coords()[1] == Coord{0, 1, 0, 0});
    REQUIRE(s.coords()[2] == Coord{1, 0, 0, 0});
    CHECK(s.features()(0, 0) == 3.0f);
    CHECK(s.features()(1, 0) == 2.0f);
    CHECK(s.features()(2, 0) == 1.0f);
}

TEST_CASE("concat_features widens channels rowwise", "[tensor]") {
    std::mt19937_64 eng(3);
    SparseVoxelTensor<float> a = random_sparse({3, 3, 3}, 1, 2, 0.4, eng);
    Matrix<float> bf(a.active_count(), 3);
    for (auto& v : bf.data) v = 1.5f;
    SparseVoxelTensor<float> b(a.extent(), a.batch(), a.coords(), bf);
    SparseVoxelTensor<float> cat = concat_features(a, b);
    REQUIRE(cat.channels() == 5);
    REQUIRE(cat.active_count() == a.active_count());
    for (int64_t r = 0; r < cat.active_count(); ++r) {
        CHECK(cat.features()(r, 0) == a.features()(r, 0));
        CHECK(cat.features()(r, 1) == a.features()(r, 1));
        CHECK(cat.features()(r, 2) == 1.5f);
    }
}

TEST_CASE("concat with itself duplicates each row", "[tensor]") {
    std::mt19937_64 eng(5);
    SparseVoxelTensor<float> a = random_sparse({3, 3, 3}, 1, 2, 0.5, eng);
    SparseVoxelTensor<float> cat = concat_features(a, a);
    for (int64_t r = 0; r < cat.active_count(); ++r) {
        CHECK(cat.features()(r, 0) == cat.features()(r, 2));
        CHECK(cat.features()(r, 1) == cat.features()(r, 3));
    }
}

TEST_CASE("concat rejects mismatched coordinate sets", "[tensor]") {
    Matrix<float> fa(1, 1), fb(1, 1);
    SparseVoxelTensor<float> a({2, 2, 2}, 1, {{0, 0, 0, 0}}, fa);
    SparseVoxelTensor<float> b({2, 2, 2}, 1, {{0, 1, 0, 0}}, fb);
    CHECK_THROWS_AS(concat_features(a, b), AlignmentError);
}

TEST_CASE("concat_features is associative over aligned inputs", "[tensor]") {
    std::mt19937_64 eng(13);
    SparseVoxelTensor<float> a = random_sparse({3, 3, 3}, 1, 2, 0.5, eng);
    Matrix<float> bf(a.active_count(), 1), cf(a.active_count(), 3);
    std::uniform_real_distribution<float> f(-1.0f, 1.0f);
    for (auto& v : bf.data) v = f(eng);
    for (auto& v : cf.data) v = f(eng);
    SparseVoxelTensor<float> b(a.extent(), a.batch(), a.coords(), bf);
    SparseVoxelTensor<float> c(a.extent(), a.batch(), a.coords(), cf);
    auto left = concat_features(concat_features(a, b), c);
    auto right = concat_features(a, concat_features(b, c));
    CHECK(left.features() == right.features());
    CHECK(left.same_coords(right));
}

TEST_CASE("out-of-range coordinates are rejected at construction", "[tensor]") {
    Matrix<float> feats(1, 1);
    CHECK_THROWS_AS(SparseVoxelTensor<float>({2, 2, 2}, 1, {{0, 0, 2, 0}}, feats), RangeError);
    CHECK_THROWS_AS(SparseVoxelTensor<float>({2, 2, 2}, 1, {{1, 0, 0, 0}}, feats), RangeError);
}

TEST_CASE("value holds same-shape gradient storage", "[tensor]") {
    Value<float> v(10);
    REQUIRE(v.data.size() == v.grad.size());
    v.grad[3] = 2.0f;
    v.zero_grad();
    CHECK(v.grad[3] == 0.0f);
}
